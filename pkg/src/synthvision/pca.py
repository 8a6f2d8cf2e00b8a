"""
PCA reduction of optical-flow planes
One projection is fit on the u and v planes of a first batch of clips (the
"single match") and applied unchanged to every other clip, per flow channel.
"""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.decomposition import PCA

from src.config.logging_config import logger
from src.synthvision.tensor_io import read_tensor, write_tensor


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray  # [in_dim]
    components: np.ndarray  # [out_dim, in_dim], orthonormal rows
    explained_variance: np.ndarray  # [out_dim]
    retained_variance: float

    @property
    def in_dim(self) -> int:
        return int(self.components.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.components.shape[0])

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        write_tensor(directory / 'pca.mean', self.mean)
        write_tensor(directory / 'pca.components', self.components)
        write_tensor(directory / 'pca.explained_variance', self.explained_variance)
        meta = {'retained_variance': self.retained_variance, 'in_dim': self.in_dim, 'out_dim': self.out_dim}
        (directory / 'pca.meta.json').write_text(json.dumps(meta, indent=1), encoding='utf-8')

    @classmethod
    def load(cls, directory: Path) -> 'PCAModel':
        directory = Path(directory)
        meta_path = directory / 'pca.meta.json'
        if not meta_path.exists():
            raise FileNotFoundError(f"PCA model not found in {directory}")
        meta = json.loads(meta_path.read_text(encoding='utf-8'))
        return cls(
            mean=read_tensor(directory / 'pca.mean'),
            components=read_tensor(directory / 'pca.components'),
            explained_variance=read_tensor(directory / 'pca.explained_variance'),
            retained_variance=float(meta['retained_variance']),
        )


def fit_pca(samples: np.ndarray, out_dim: int) -> PCAModel:
    """
    Fit a PCA projection

    Args:
        samples: [N, in_dim] matrix, one sample per row
        out_dim: number of components kept

    Returns:
        PCAModel whose components are the top eigenvectors of the sample
        covariance (ddof=1); rank-deficient data yields trailing components
        with ~zero variance
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError(f"PCA samples must be a 2-D matrix, got shape {samples.shape}")
    n, in_dim = samples.shape
    if not 1 <= out_dim <= in_dim:
        raise ValueError(f"out_dim must be in [1, {in_dim}], got {out_dim}")
    if n <= out_dim:
        raise ValueError(f"PCA needs more samples than components (N={n}, out_dim={out_dim})")

    pca = PCA(n_components=out_dim, svd_solver='full')
    pca.fit(samples)
    total = float(np.var(samples, axis=0, ddof=1).sum())
    retained = float(pca.explained_variance_.sum() / total) if total > 0 else 1.0
    retained = min(max(retained, 0.0), 1.0)

    logger.info(f"PCA fit on {n} samples: {in_dim} -> {out_dim} dims, retained variance {retained:.4f}")
    return PCAModel(
        mean=pca.mean_.astype(np.float32),
        components=pca.components_.astype(np.float32),
        explained_variance=pca.explained_variance_.astype(np.float32),
        retained_variance=retained,
    )


def flow_planes(flow: np.ndarray) -> np.ndarray:
    """Flatten [T, 2, H, W] flow into one row per u/v plane: [2T, H*W]"""
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 4 or flow.shape[1] != 2:
        raise ValueError(f"Flow must have shape [T, 2, H, W], got {flow.shape}")
    return flow.reshape(flow.shape[0] * 2, -1)


def apply_pca(model: PCAModel, flow_frame: np.ndarray) -> np.ndarray:
    """
    Project one flow frame [2, H, W] to [2 * out_dim]: u projection then v projection
    """
    flow_frame = np.asarray(flow_frame, dtype=np.float32)
    if flow_frame.ndim != 3 or flow_frame.shape[0] != 2:
        raise ValueError(f"Flow frame must have shape [2, H, W], got {flow_frame.shape}")
    planes = flow_frame.reshape(2, -1)
    if planes.shape[1] != model.in_dim:
        raise ValueError(f"Flow plane has {planes.shape[1]} values, PCA model expects {model.in_dim}")
    projected = (planes - model.mean) @ model.components.T
    return projected.reshape(-1).astype(np.float32)


def apply_pca_clip(model: PCAModel, flow: np.ndarray) -> np.ndarray:
    """Project every frame of a [T, 2, H, W] clip: returns [T, 2 * out_dim]"""
    planes = flow_planes(flow)
    if planes.shape[1] != model.in_dim:
        raise ValueError(f"Flow plane has {planes.shape[1]} values, PCA model expects {model.in_dim}")
    projected = (planes - model.mean) @ model.components.T
    return projected.reshape(flow.shape[0], -1).astype(np.float32)
