"""
Portable tensor files and checkpoint archives

A tensor is stored as a raw little-endian float32 payload (<name>.bin) next to
a JSON sidecar (<name>.json) describing its shape. Per-clip feature streams use
<clip_id>.<stream>.bin/.json so externally computed features can be dropped in.
A checkpoint archive is a zip holding config.json plus one tensor pair per
named parameter.
"""
import json
import zipfile
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np
import torch

from src.config.logging_config import logger

DTYPE = 'f32'
ORDER = 'row-major'
BYTE_ORDER = 'little-endian'
_NUMPY_DTYPE = np.dtype('<f4')


def _sidecar(shape: Tuple[int, ...]) -> Dict[str, Any]:
    return {'shape': list(shape), 'dtype': DTYPE, 'order': ORDER, 'byte_order': BYTE_ORDER}


def _as_array(tensor) -> np.ndarray:
    if isinstance(tensor, torch.Tensor):
        tensor = tensor.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(tensor, dtype=_NUMPY_DTYPE))


def _check_sidecar(meta: Mapping[str, Any], source: str) -> Tuple[int, ...]:
    if meta.get('dtype') != DTYPE or meta.get('order') != ORDER or meta.get('byte_order') != BYTE_ORDER:
        raise ValueError(
            f"{source}: unsupported tensor layout {meta.get('dtype')}/{meta.get('order')}/{meta.get('byte_order')}"
        )
    return tuple(int(d) for d in meta['shape'])


def _decode(payload: bytes, shape: Tuple[int, ...], source: str) -> np.ndarray:
    expected = int(np.prod(shape, dtype=np.int64)) * _NUMPY_DTYPE.itemsize
    if len(payload) != expected:
        raise ValueError(f"{source}: payload has {len(payload)} bytes, shape {list(shape)} needs {expected}")
    return np.frombuffer(payload, dtype=_NUMPY_DTYPE).reshape(shape).astype(np.float32)


def write_tensor(path_stem: Path, tensor) -> None:
    """Write <path_stem>.bin and <path_stem>.json"""
    path_stem = Path(path_stem)
    path_stem.parent.mkdir(parents=True, exist_ok=True)
    array = _as_array(tensor)
    Path(f"{path_stem}.bin").write_bytes(array.tobytes(order='C'))
    Path(f"{path_stem}.json").write_text(json.dumps(_sidecar(array.shape)), encoding='utf-8')


def read_tensor(path_stem: Path) -> np.ndarray:
    path_stem = Path(path_stem)
    meta_path, bin_path = Path(f"{path_stem}.json"), Path(f"{path_stem}.bin")
    if not meta_path.exists() or not bin_path.exists():
        raise FileNotFoundError(f"Tensor files not found: {path_stem}.json/.bin")
    shape = _check_sidecar(json.loads(meta_path.read_text(encoding='utf-8')), str(meta_path))
    return _decode(bin_path.read_bytes(), shape, str(bin_path))


def stream_stem(features_dir: Path, clip_id: str, stream: str) -> Path:
    return Path(features_dir) / f"{clip_id}.{stream}"


def save_archive(path: Path, config: Mapping[str, Any], tensors: Mapping[str, Any]) -> None:
    """
    Write a checkpoint archive

    Args:
        path: destination .zip file
        config: JSON-serializable configuration snapshot
        tensors: parameter name -> tensor
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed timestamps keep archives byte-identical across runs
    with zipfile.ZipFile(path, 'w', compression=zipfile.ZIP_DEFLATED) as archive:
        def put(name: str, data: bytes) -> None:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            archive.writestr(info, data)

        put('config.json', json.dumps(dict(config), sort_keys=True, indent=1).encode('utf-8'))
        for name in sorted(tensors):
            array = _as_array(tensors[name])
            put(f"tensors/{name}.json", json.dumps(_sidecar(array.shape)).encode('utf-8'))
            put(f"tensors/{name}.bin", array.tobytes(order='C'))
    logger.debug(f"Saved archive {path} with {len(tensors)} tensors")


def load_archive(path: Path) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Read a checkpoint archive back into (config, name -> array)"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    tensors: Dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path) as archive:
        names = set(archive.namelist())
        if 'config.json' not in names:
            raise ValueError(f"{path}: archive has no config.json")
        config = json.loads(archive.read('config.json').decode('utf-8'))
        for entry in sorted(n for n in names if n.startswith('tensors/') and n.endswith('.json')):
            name = entry[len('tensors/'):-len('.json')]
            source = f"{path}:{name}"
            shape = _check_sidecar(json.loads(archive.read(entry).decode('utf-8')), source)
            tensors[name] = _decode(archive.read(f"tensors/{name}.bin"), shape, source)
    return config, tensors


def load_state_into(module: torch.nn.Module, tensors: Mapping[str, np.ndarray], source: str = 'archive') -> None:
    """Copy archived arrays into a module, rejecting missing, extra or mis-shaped parameters"""
    state = module.state_dict()
    missing = sorted(set(state) - set(tensors))
    extra = sorted(set(tensors) - set(state))
    if missing or extra:
        raise ValueError(f"{source}: parameter mismatch (missing={missing[:5]}, unexpected={extra[:5]})")
    for name, value in state.items():
        if tuple(value.shape) != tuple(tensors[name].shape):
            raise ValueError(
                f"{source}: parameter {name} has shape {list(tensors[name].shape)}, model expects {list(value.shape)}"
            )
    module.load_state_dict({name: torch.from_numpy(np.array(tensors[name])).to(state[name].dtype) for name in state})
