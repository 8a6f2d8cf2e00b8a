"""
Inpainting VAE
A convolutional variational auto-encoder trained to reconstruct the full frame
from a frame with three regions blanked out. Its latent mean is the third
visual feature stream.
"""
import math
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.config.logging_config import logger
from src.synthvision.tensor_io import load_archive, load_state_into, save_archive

# Region sizes on a 224-high, 398-wide reference frame
REF_HEIGHT, REF_WIDTH = 224, 398
BOTTOM_STRIP, RIGHT_STRIP, CENTER_SQUARE = 24, 48, 40


def _scaled(size: int, reference: int, extent: int) -> int:
    return int(math.floor(size / reference * extent + 0.5))


def mask_geometry(height: int, width: int) -> Tuple[int, int, int]:
    """(bottom strip height, right strip width, center square side) for a frame size"""
    return (
        _scaled(BOTTOM_STRIP, REF_HEIGHT, height),
        _scaled(RIGHT_STRIP, REF_WIDTH, width),
        _scaled(CENTER_SQUARE, REF_HEIGHT, height),
    )


def region_mask(height: int, width: int) -> np.ndarray:
    """Binary [H, W] mask, 1 inside the blanked regions"""
    bottom, right, side = mask_geometry(height, width)
    mask = np.zeros((height, width), dtype=np.float32)
    if bottom:
        mask[height - bottom:, :] = 1.0
    if right:
        mask[:, width - right:] = 1.0
    if side:
        top, left = (height - side) // 2, (width - side) // 2
        mask[top:top + side, left:left + side] = 1.0
    return mask


def mask_regions(image: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Blank the bottom strip, the right strip and the center square of an image

    Args:
        image: [H, W, 3] array

    Returns:
        (masked image, [H, W] binary mask)
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"Image must have shape [H, W, 3], got {image.shape}")
    mask = region_mask(image.shape[0], image.shape[1])
    return image * (1.0 - mask)[:, :, None], mask


class InpaintingVAE(nn.Module):
    """Three strided conv layers each side around a Gaussian latent"""

    def __init__(self, height: int, width: int, latent_dim: int = 64, channels: Sequence[int] = (16, 32, 64)):
        super().__init__()
        depth = len(channels)
        if height % (2 ** depth) or width % (2 ** depth):
            raise ValueError(f"Frame size {height}x{width} must be divisible by {2 ** depth}")
        self.height, self.width = height, width
        self.latent_dim = latent_dim
        self.channels = list(channels)
        self.bottleneck = (channels[-1], height // 2 ** depth, width // 2 ** depth)
        flat = int(np.prod(self.bottleneck))

        encoder: List[nn.Module] = []
        previous = 3
        for c in channels:
            encoder += [nn.Conv2d(previous, c, kernel_size=4, stride=2, padding=1), nn.ReLU()]
            previous = c
        self.encoder = nn.Sequential(*encoder, nn.Flatten())
        self.fc_mu = nn.Linear(flat, latent_dim)
        self.fc_logvar = nn.Linear(flat, latent_dim)

        self.fc_decode = nn.Linear(latent_dim, flat)
        decoder: List[nn.Module] = []
        reversed_channels = list(reversed(channels))
        for c_in, c_out in zip(reversed_channels, reversed_channels[1:] + [3]):
            decoder.append(nn.ConvTranspose2d(c_in, c_out, kernel_size=4, stride=2, padding=1))
            decoder.append(nn.ReLU() if c_out != 3 else nn.Sigmoid())
        self.decoder = nn.Sequential(*decoder)

    def config(self) -> dict:
        return {'height': self.height, 'width': self.width, 'latent_dim': self.latent_dim, 'channels': self.channels}

    def encode(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """x: [B, 3, H, W] -> (mu, logvar), each [B, latent_dim]"""
        h = self.encoder(x)
        return self.fc_mu(h), self.fc_logvar(h)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.fc_decode(z)).view(-1, *self.bottleneck)
        return self.decoder(h)

    def forward(self, x: torch.Tensor, sample: bool = True) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        mu, logvar = self.encode(x)
        if sample:
            z = mu + torch.randn_like(mu) * torch.exp(0.5 * logvar)
        else:
            z = mu
        return self.decode(z), mu, logvar

    def save(self, path: Path) -> None:
        save_archive(path, {'kind': 'inpainting_vae', **self.config()}, self.state_dict())

    @classmethod
    def load(cls, path: Path) -> 'InpaintingVAE':
        config, tensors = load_archive(path)
        if config.get('kind') != 'inpainting_vae':
            raise ValueError(f"{path} is not an inpainting VAE archive (kind={config.get('kind')})")
        model = cls(config['height'], config['width'], config['latent_dim'], config['channels'])
        load_state_into(model, tensors, source=str(path))
        model.eval()
        return model


def vae_loss(recon: torch.Tensor, target: torch.Tensor, mu: torch.Tensor, logvar: torch.Tensor,
             beta: float) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, reconstruction MSE, KL to the unit Gaussian averaged over the batch)"""
    reconstruction = F.mse_loss(recon, target)
    kl = -0.5 * torch.mean(torch.sum(1 + logvar - mu.pow(2) - logvar.exp(), dim=1))
    return reconstruction + beta * kl, reconstruction, kl


def _to_batch(images: np.ndarray) -> torch.Tensor:
    """[N, H, W, 3] numpy -> [N, 3, H, W] float tensor"""
    return torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32)).permute(0, 3, 1, 2).contiguous()


def train_vae(images: np.ndarray, latent_dim: int = 64, epochs: int = 10, learning_rate: float = 1e-3,
              beta: float = 1e-3, batch_size: int = 32, seed: int = 0) -> Tuple[InpaintingVAE, List[float]]:
    """
    Train the inpainting VAE on masked-input -> full-image reconstruction

    Args:
        images: [N, H, W, 3] frames in [0, 1] sharing one shape
        latent_dim: size of the latent space (the vae feature width)
        epochs, learning_rate, batch_size: Adam training schedule
        beta: weight of the KL term
        seed: makes initialization, shuffling and sampling reproducible

    Returns:
        (trained model in eval mode, mean loss per epoch)

    Raises:
        TrainingDivergedError: when the loss becomes NaN or infinite
    """
    from src.harness.trainer import TrainingDivergedError

    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[-1] != 3 or len(images) == 0:
        raise ValueError(f"VAE training images must have shape [N, H, W, 3], got {images.shape}")

    n, height, width, _ = images.shape
    masked = images * (1.0 - region_mask(height, width))[None, :, :, None]
    inputs, targets = _to_batch(masked), _to_batch(images)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = InpaintingVAE(height, width, latent_dim)
        optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
        generator = torch.Generator().manual_seed(seed)

        history: List[float] = []
        last_finite = float('nan')
        model.train()
        for epoch in range(1, epochs + 1):
            order = torch.randperm(n, generator=generator)
            total, batches = 0.0, 0
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                recon, mu, logvar = model(inputs[idx])
                loss, _, _ = vae_loss(recon, targets[idx], mu, logvar, beta)
                if not torch.isfinite(loss):
                    logger.error(f"✗ VAE training diverged at epoch {epoch}")
                    raise TrainingDivergedError(epoch, last_finite, what='VAE')
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += float(loss.item())
                batches += 1
            last_finite = total / batches
            history.append(last_finite)
            logger.debug(f"VAE epoch {epoch}/{epochs}: loss={last_finite:.5f}")

    model.eval()
    logger.info(f"✓ VAE trained on {n} frames ({height}x{width}), final loss {history[-1]:.5f}")
    return model, history


@torch.no_grad()
def vae_encode(model: InpaintingVAE, image: np.ndarray) -> np.ndarray:
    """Latent mean of the masked image: [H, W, 3] -> [latent_dim]"""
    return vae_encode_batch(model, np.asarray(image)[None])[0]


@torch.no_grad()
def vae_encode_batch(model: InpaintingVAE, images: np.ndarray) -> np.ndarray:
    """Latent means for [N, H, W, 3] frames -> [N, latent_dim]"""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[1:] != (model.height, model.width, 3):
        raise ValueError(
            f"VAE expects frames of shape [{model.height}, {model.width}, 3], got {list(images.shape[1:])}"
        )
    masked = images * (1.0 - region_mask(model.height, model.width))[None, :, :, None]
    model.eval()
    mu, _ = model.encode(_to_batch(masked))
    return mu.numpy().astype(np.float32)


@torch.no_grad()
def reconstruction_mse(model: InpaintingVAE, images: np.ndarray, masked_only: bool = True) -> float:
    """Reconstruction error from the latent mean, over the blanked regions by default"""
    images = np.asarray(images, dtype=np.float32)
    mask = region_mask(model.height, model.width)
    model.eval()
    recon, _, _ = model(_to_batch(images * (1.0 - mask)[None, :, :, None]), sample=False)
    recon = recon.permute(0, 2, 3, 1).numpy()
    squared = (recon - images) ** 2
    if masked_only:
        weights = np.broadcast_to(mask[None, :, :, None], squared.shape)
        return float((squared * weights).sum() / weights.sum())
    return float(squared.mean())
