"""
Visual feature streams
img: frames downsampled to 32x64x3, flow: PCA-reduced optical flow,
vae: inpainting latent means. All streams are aligned at 2 frames per second.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from src.synthvision.pca import PCAModel, apply_pca_clip
from src.synthvision.tensor_io import read_tensor, stream_stem, write_tensor
from src.synthvision.vae import InpaintingVAE, vae_encode_batch

IMG_SIZE = (32, 64)
STREAMS = ('img', 'flow', 'vae')


def downsample_rgb(frames: np.ndarray, size=IMG_SIZE) -> np.ndarray:
    """
    Area-average resize of [T, H, W, 3] frames to [T, 32, 64, 3]

    Raises:
        ValueError: if a frame is smaller than the target size
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise ValueError(f"Frames must have shape [T, H, W, 3], got {frames.shape}")
    height, width = frames.shape[1:3]
    if height < size[0] or width < size[1]:
        raise ValueError(f"Frames of {height}x{width} are smaller than the target {size[0]}x{size[1]}")
    if len(frames) == 0:
        return np.zeros((0, size[0], size[1], 3), dtype=np.float32)
    x = torch.from_numpy(np.ascontiguousarray(frames)).permute(0, 3, 1, 2)
    pooled = F.adaptive_avg_pool2d(x, size)
    return pooled.permute(0, 2, 3, 1).clamp(0.0, 1.0).contiguous().numpy()


@dataclass
class ClipFeatures:
    img: np.ndarray  # [T, 32, 64, 3]
    flow: np.ndarray  # [T, flow_dim]
    vae: np.ndarray  # [T, vae_dim]

    def __post_init__(self):
        self.img = np.asarray(self.img, dtype=np.float32)
        self.flow = np.asarray(self.flow, dtype=np.float32)
        self.vae = np.asarray(self.vae, dtype=np.float32)
        lengths = {len(self.img), len(self.flow), len(self.vae)}
        if len(lengths) != 1:
            raise ValueError(
                f"Feature streams are not aligned: img T={len(self.img)}, flow T={len(self.flow)}, vae T={len(self.vae)}"
            )
        if self.img.ndim != 4 or self.flow.ndim != 2 or self.vae.ndim != 2:
            raise ValueError(
                f"Unexpected feature ranks: img {self.img.shape}, flow {self.flow.shape}, vae {self.vae.shape}"
            )
        for name in STREAMS:
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"Feature stream '{name}' contains non-finite values")

    @property
    def n_frames(self) -> int:
        return int(len(self.img))

    def streams(self) -> Dict[str, np.ndarray]:
        return {'img': self.img, 'flow': self.flow, 'vae': self.vae}

    def save(self, features_dir: Path, clip_id: str) -> None:
        for name, array in self.streams().items():
            write_tensor(stream_stem(features_dir, clip_id, name), array)

    @classmethod
    def load(cls, features_dir: Path, clip_id: str) -> 'ClipFeatures':
        return cls(**{name: read_tensor(stream_stem(features_dir, clip_id, name)) for name in STREAMS})


def extract_features(frames: np.ndarray, flow: np.ndarray, pca: PCAModel, vae: InpaintingVAE) -> ClipFeatures:
    """
    Build the three aligned streams of one clip

    Args:
        frames: [T, H, W, 3] raw frames in [0, 1]
        flow: [T, 2, H, W] optical flow (u then v)
        pca: projection fit on the first clips
        vae: trained inpainting VAE matching the frame size
    """
    if len(frames) != len(flow):
        raise ValueError(f"Frames (T={len(frames)}) and flow (T={len(flow)}) are not aligned")
    return ClipFeatures(
        img=downsample_rgb(frames),
        flow=apply_pca_clip(pca, flow),
        vae=vae_encode_batch(vae, frames),
    )


def load_features(features_dir: Path, clip_ids: Sequence[str]) -> Dict[str, ClipFeatures]:
    return {clip_id: ClipFeatures.load(features_dir, clip_id) for clip_id in clip_ids}
