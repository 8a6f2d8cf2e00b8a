"""
Soccer captioning model

Part A: a single-block, two-head causal transformer over caption tokens, with
its own next-token head (used by the significant-word cross-entropy).
Part B: one ConvNet per visual stream, concatenated into FC2, which feeds a
sigmoid significant-word head and a ReLU head passed on to Part C.
Part C: fully connected fusion of Part A and Part B features into the final
next-token logits.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.config.logging_config import logger
from src.models.schemas import ModelConfig
from src.synthvision.features import ClipFeatures

SW_CLAMP = 1e-7
INIT_STD = 0.02


@dataclass
class FeatureBatch:
    """Padded visual streams of a minibatch; frame_mask marks real frames"""
    img: torch.Tensor  # [B, T, H, W, 3]
    flow: torch.Tensor  # [B, T, flow_dim]
    vae: torch.Tensor  # [B, T, vae_dim]
    frame_mask: torch.Tensor  # [B, T] bool

    def to(self, dtype: torch.dtype) -> 'FeatureBatch':
        return FeatureBatch(self.img.to(dtype), self.flow.to(dtype), self.vae.to(dtype), self.frame_mask)

    def zero_stream(self, stream: str) -> 'FeatureBatch':
        """Copy with one stream replaced by zeros"""
        parts = {'img': self.img, 'flow': self.flow, 'vae': self.vae}
        parts[stream] = torch.zeros_like(parts[stream])
        return FeatureBatch(frame_mask=self.frame_mask, **parts)


def collate_features(clips: Sequence[ClipFeatures]) -> FeatureBatch:
    """Stack clips into a batch, right-padding shorter clips with zero frames"""
    if not clips:
        raise ValueError('Cannot batch an empty list of clips')
    max_t = max(c.n_frames for c in clips)
    if max_t == 0:
        raise ValueError('Clips have no frames (T=0)')

    def pad(arrays: List[np.ndarray]) -> torch.Tensor:
        shape = (len(arrays), max_t) + arrays[0].shape[1:]
        out = np.zeros(shape, dtype=np.float32)
        for i, a in enumerate(arrays):
            out[i, :len(a)] = a
        return torch.from_numpy(out)

    mask = torch.zeros(len(clips), max_t, dtype=torch.bool)
    for i, c in enumerate(clips):
        mask[i, :c.n_frames] = True
    return FeatureBatch(
        img=pad([c.img for c in clips]),
        flow=pad([c.flow for c in clips]),
        vae=pad([c.vae for c in clips]),
        frame_mask=mask,
    )


@dataclass
class ModelOutput:
    logits_c: torch.Tensor  # [B, L, V] final prediction (Part C)
    logits_a: torch.Tensor  # [B, L, V] Part A head
    sw_pred: torch.Tensor  # [B, sw_count] in (0, 1)


class CausalSelfAttention(nn.Module):
    def __init__(self, embed_dim: int, n_heads: int, max_seq_len: int, dropout: float = 0.0):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = embed_dim // n_heads
        self.qkv = nn.Linear(embed_dim, 3 * embed_dim)
        self.proj = nn.Linear(embed_dim, embed_dim)
        self.dropout = nn.Dropout(dropout)
        self.register_buffer('mask', torch.tril(torch.ones(max_seq_len, max_seq_len, dtype=torch.bool)),
                             persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, length, c = x.shape
        qkv = self.qkv(x).reshape(b, length, 3, self.n_heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = (q @ k.transpose(-2, -1)) / (self.head_dim ** 0.5)
        att = att.masked_fill(~self.mask[:length, :length], float('-inf'))
        att = self.dropout(F.softmax(att, dim=-1))
        y = (att @ v).transpose(1, 2).reshape(b, length, c)
        return self.proj(y)


class DecoderBlock(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(config.embed_dim)
        self.attn = CausalSelfAttention(config.embed_dim, config.n_heads, config.max_seq_len, config.dropout)
        self.ln2 = nn.LayerNorm(config.embed_dim)
        self.ffn = nn.Sequential(
            nn.Linear(config.embed_dim, config.ff_dim),
            nn.GELU(),
            nn.Linear(config.ff_dim, config.embed_dim),
            nn.Dropout(config.dropout),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.ffn(self.ln2(x))


def _masked_time_mean(x: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
    """x: [B, T, C], frame_mask: [B, T] -> [B, C]"""
    weights = frame_mask.to(x.dtype).unsqueeze(-1)
    return (x * weights).sum(dim=1) / weights.sum(dim=1).clamp(min=1.0)


class ImageStream(nn.Module):
    """CNN-img: 2-D convolutions per frame, spatial pooling, then temporal pooling"""

    def __init__(self, channels: Sequence[int], kernel: int):
        super().__init__()
        layers: List[nn.Module] = []
        previous = 3
        for c in channels:
            layers += [nn.Conv2d(previous, c, kernel, padding=kernel // 2), nn.ReLU(), nn.MaxPool2d(2)]
            previous = c
        layers += [nn.AdaptiveAvgPool2d(1), nn.Flatten()]
        self.net = nn.Sequential(*layers)
        self.out_dim = previous

    def forward(self, img: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        b, t = img.shape[:2]
        frames = img.reshape(b * t, *img.shape[2:]).permute(0, 3, 1, 2)
        per_frame = self.net(frames).reshape(b, t, -1)
        return _masked_time_mean(per_frame, frame_mask)


class VectorStream(nn.Module):
    """CNN-flow / CNN-vae: 1-D temporal convolutions over per-frame vectors, then temporal pooling"""

    def __init__(self, in_dim: int, channels: Sequence[int], kernel: int):
        super().__init__()
        layers: List[nn.Module] = []
        previous = in_dim
        for c in channels:
            layers += [nn.Conv1d(previous, c, kernel, padding=kernel // 2), nn.ReLU()]
            previous = c
        self.net = nn.Sequential(*layers)
        self.in_dim = in_dim
        self.out_dim = previous

    def forward(self, x: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"Stream width {x.shape[-1]} does not match configured {self.in_dim}")
        x = x * frame_mask.to(x.dtype).unsqueeze(-1)
        h = self.net(x.transpose(1, 2)).transpose(1, 2)
        return _masked_time_mean(h, frame_mask)


class SWHead(nn.Module):
    """Convolution + fully connected layer with sigmoid output, one unit per SW group"""

    def __init__(self, width: int, channels: int, kernel: int, sw_count: int):
        super().__init__()
        self.conv = nn.Conv1d(1, channels, kernel, padding=kernel // 2)
        self.fc = nn.Linear(channels * width, sw_count)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        z = F.relu(self.conv(h.unsqueeze(1))).flatten(1)
        return torch.sigmoid(self.fc(z)).clamp(SW_CLAMP, 1.0 - SW_CLAMP)


class Captioner(nn.Module):
    """Parts A, B and C of the captioning model"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.vocab_size < 1:
            raise ValueError('ModelConfig.vocab_size must be set before building the model')
        self.config = config

        # Part A
        self.tok_embed = nn.Embedding(config.vocab_size, config.embed_dim)
        self.pos_embed = nn.Embedding(config.max_seq_len, config.embed_dim)
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList([DecoderBlock(config) for _ in range(config.n_blocks)])
        self.ln_f = nn.LayerNorm(config.embed_dim)
        self.head_a = nn.Linear(config.embed_dim, config.vocab_size)

        # Part B
        self.streams = nn.ModuleDict()
        if 'img' in config.streams:
            self.streams['img'] = ImageStream(config.img_channels, config.img_kernel)
        if 'flow' in config.streams:
            self.streams['flow'] = VectorStream(config.flow_dim, config.flow_channels, config.temporal_kernel)
        if 'vae' in config.streams:
            self.streams['vae'] = VectorStream(config.vae_dim, config.vae_channels, config.temporal_kernel)
        concat_dim = sum(s.out_dim for s in self.streams.values())
        self.fc2 = nn.Linear(concat_dim, config.fc2_width)
        self.sw_head = SWHead(config.fc2_width, config.sw_conv_channels, config.sw_conv_kernel, config.sw_count)
        self.vis_head = nn.Linear(config.fc2_width, config.vis_width)

        # Part C
        self.fc3 = nn.Linear(config.embed_dim + config.vis_width, config.fc3_width)
        self.head_c = nn.Linear(config.fc3_width, config.vocab_size)

        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, (nn.Linear, nn.Conv1d, nn.Conv2d, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=INIT_STD)
            if getattr(module, 'bias', None) is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)

    def _check_tokens(self, token_ids: torch.Tensor) -> None:
        length = token_ids.shape[-1]
        if length == 0:
            raise ValueError('Token sequence is empty')
        if length > self.config.max_seq_len:
            raise ValueError(f"Sequence length {length} exceeds max_seq_len={self.config.max_seq_len}")
        if int(token_ids.min()) < 0 or int(token_ids.max()) >= self.config.vocab_size:
            raise ValueError(f"Token ids must be in [0, {self.config.vocab_size}), got "
                             f"[{int(token_ids.min())}, {int(token_ids.max())}]")

    def part_a_forward(self, token_ids: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Causal transformer over caption tokens

        Args:
            token_ids: [L] or [B, L], first token of each row is an action tag

        Returns:
            (logits_a [.., L, V], linguistic features [.., L, embed_dim])
        """
        single = token_ids.dim() == 1
        if single:
            token_ids = token_ids.unsqueeze(0)
        self._check_tokens(token_ids)
        positions = torch.arange(token_ids.shape[1], device=token_ids.device)
        x = self.drop(self.tok_embed(token_ids) + self.pos_embed(positions))
        for block in self.blocks:
            x = block(x)
        ling = self.ln_f(x)
        logits_a = self.head_a(ling)
        if single:
            return logits_a[0], ling[0]
        return logits_a, ling

    def part_b_forward(self, features) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Visual ConvNets and the FC2 heads

        Args:
            features: FeatureBatch, or a single ClipFeatures

        Returns:
            (vis_features [.., vis_width] >= 0, sw_pred [.., sw_count] in (0, 1))
        """
        single = isinstance(features, ClipFeatures)
        batch = collate_features([features]) if single else features
        if batch.frame_mask.shape[1] == 0 or not bool(batch.frame_mask.any(dim=1).all()):
            raise ValueError('Every clip needs at least one frame (T=0)')
        dtype = self.fc2.weight.dtype
        pooled = [stream(getattr(batch, name).to(dtype), batch.frame_mask)
                  for name, stream in self.streams.items()]
        h = F.relu(self.fc2(torch.cat(pooled, dim=-1)))
        sw_pred = self.sw_head(h)
        vis = F.relu(self.vis_head(h))
        if single:
            return vis[0], sw_pred[0]
        return vis, sw_pred

    def part_c_forward(self, ling: torch.Tensor, vis: torch.Tensor) -> torch.Tensor:
        """Concatenate vis features to every position and project to next-token logits"""
        if ling.shape[-1] != self.config.embed_dim or vis.shape[-1] != self.config.vis_width:
            raise ValueError(
                f"Part C expects widths ({self.config.embed_dim}, {self.config.vis_width}), "
                f"got ({ling.shape[-1]}, {vis.shape[-1]})"
            )
        expanded = vis.unsqueeze(-2).expand(*ling.shape[:-1], vis.shape[-1])
        h = F.relu(self.fc3(torch.cat([ling, expanded], dim=-1)))
        return self.head_c(h)

    def forward(self, token_ids: torch.Tensor, features) -> ModelOutput:
        logits_a, ling = self.part_a_forward(token_ids)
        vis, sw_pred = self.part_b_forward(features)
        logits_c = self.part_c_forward(ling, vis)
        return ModelOutput(logits_c=logits_c, logits_a=logits_a, sw_pred=sw_pred)


def build_model(config: ModelConfig) -> Captioner:
    """Seed-deterministic model construction; the global RNG state is left untouched"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = Captioner(config)
    logger.info(f"Captioner built: {sum(p.numel() for p in model.parameters()):,} parameters, "
                f"streams={','.join(config.streams)}, vocab={config.vocab_size}")
    return model


def count_parameters(config: ModelConfig) -> int:
    """Number of trainable parameters for a configuration"""
    with torch.random.fork_rng(devices=[]):
        model = Captioner(config)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def configure_for(config: ModelConfig, vocab_size: int, sample: Optional[ClipFeatures] = None,
                  streams: Optional[Sequence[str]] = None) -> ModelConfig:
    """Fill in the data-dependent fields: vocabulary size, stream widths and enabled streams"""
    update = {'vocab_size': vocab_size}
    if sample is not None:
        update['flow_dim'] = int(sample.flow.shape[1])
        update['vae_dim'] = int(sample.vae.shape[1])
    if streams is not None:
        update['streams'] = list(streams)
    return config.model_copy(update=update)
