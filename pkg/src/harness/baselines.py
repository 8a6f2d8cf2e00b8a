"""
Baselines
random: a training caption of the requested action, drawn uniformly.
k-NN: clips embedded by a triplet-loss network trained so that clips with
similar captions lie close; a clip gets the caption of its nearest training clip.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.preprocessing import StandardScaler

from src.config.logging_config import logger
from src.corpus.actions import ACTION_CATEGORIES, normalize_action
from src.corpus.lexicon import SWLexicon, sw_vector
from src.models.schemas import ALL_STREAMS, CaptionRecord, TrainConfig
from src.synthvision.features import ClipFeatures


def baseline_random(action: str, train_records: Sequence[CaptionRecord], rng: np.random.Generator) -> List[str]:
    """
    Uniformly sampled training caption of the given action

    Raises:
        ValueError: if no training caption has this action
    """
    action = normalize_action(action)
    pool = [r.tokens for r in train_records if r.action == action]
    if not pool:
        seen = sorted({r.action for r in train_records}, key=ACTION_CATEGORIES.index)
        raise ValueError(f"No training captions for action '{action}'. Actions with captions: {', '.join(seen)}")
    return list(pool[int(rng.integers(len(pool)))])


def caption_random(records: Sequence[CaptionRecord], train_records: Sequence[CaptionRecord],
                   seed: int = 0) -> List[List[str]]:
    rng = np.random.default_rng(seed)
    return [baseline_random(r.action, train_records, rng) for r in records]


def sw_f1_matrix(vectors: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """
    Pairwise F1 overlap of binary SW vectors [N, n_groups] -> [N, N]

    Two captions without significant words count as identical (F1 = 1).
    """
    vectors = np.asarray(vectors, dtype=np.float32)
    sizes = vectors.sum(axis=1)
    out = np.empty((len(vectors), len(vectors)), dtype=np.float32)
    for start in range(0, len(vectors), chunk):
        block = vectors[start:start + chunk]
        overlap = block @ vectors.T
        denominator = sizes[start:start + chunk, None] + sizes[None, :]
        with np.errstate(divide='ignore', invalid='ignore'):
            out[start:start + chunk] = np.where(denominator > 0, 2.0 * overlap / denominator, 1.0)
    return out


def clip_vector(features: ClipFeatures, streams: Sequence[str] = ALL_STREAMS) -> np.ndarray:
    """Temporal mean of each enabled stream, concatenated"""
    parts = {
        'img': lambda: features.img.mean(axis=0).ravel(),
        'flow': lambda: features.flow.mean(axis=0),
        'vae': lambda: features.vae.mean(axis=0),
    }
    return np.concatenate([parts[s]() for s in ALL_STREAMS if s in streams]).astype(np.float32)


class TripletEmbedder(nn.Module):
    """Feed-forward map of standardized clip vectors into the retrieval space"""

    def __init__(self, in_dim: int, hidden_dim: int = 128, embed_dim: int = 32,
                 streams: Sequence[str] = ALL_STREAMS):
        super().__init__()
        self.streams = list(streams)
        self.register_buffer('mean', torch.zeros(in_dim))
        self.register_buffer('std', torch.ones(in_dim))
        self.net = nn.Sequential(nn.Linear(in_dim, hidden_dim), nn.ReLU(), nn.Linear(hidden_dim, embed_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net((x - self.mean) / self.std)

    @torch.no_grad()
    def embed(self, clips: Sequence[ClipFeatures]) -> np.ndarray:
        self.eval()
        x = torch.from_numpy(np.stack([clip_vector(c, self.streams) for c in clips]))
        return self(x).numpy()


def sample_triplets(similarity: np.ndarray, threshold: float,
                    rng: np.random.Generator) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """
    One (anchor, positive, negative) per anchor that has both a positive and a negative

    Positives have caption similarity >= threshold with the anchor, negatives below it.
    """
    anchors, positives, negatives = [], [], []
    n = len(similarity)
    for a in range(n):
        row = similarity[a]
        pos = np.flatnonzero(row >= threshold)
        pos = pos[pos != a]
        neg = np.flatnonzero(row < threshold)
        if len(pos) == 0 or len(neg) == 0:
            continue
        anchors.append(a)
        positives.append(int(rng.choice(pos)))
        negatives.append(int(rng.choice(neg)))
    if not anchors:
        return None
    return np.array(anchors), np.array(positives), np.array(negatives)


def train_triplet(clips: Sequence[ClipFeatures], captions: Sequence[Sequence[str]], lexicon: SWLexicon,
                  config: TrainConfig) -> TripletEmbedder:
    """
    Train the clip embedding with a triplet margin loss

    Caption similarity is the F1 overlap of significant words; distances are
    Euclidean.

    Raises:
        ValueError: with fewer than 3 clips
    """
    if len(clips) < 3:
        raise ValueError(f"Triplet training needs at least 3 clips, got {len(clips)}")
    if len(clips) != len(captions):
        raise ValueError(f"Got {len(clips)} clips for {len(captions)} captions")

    x = np.stack([clip_vector(c, config.streams) for c in clips])
    similarity = sw_f1_matrix(np.stack([sw_vector(c, lexicon) for c in captions]))
    rng = np.random.default_rng(config.seed)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = TripletEmbedder(x.shape[1], config.triplet_hidden_dim, config.triplet_embed_dim, config.streams)
        scaler = StandardScaler().fit(x)
        model.mean.copy_(torch.from_numpy(scaler.mean_.astype(np.float32)))
        model.std.copy_(torch.from_numpy(scaler.scale_.astype(np.float32)))
        optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        inputs = torch.from_numpy(x)

        model.train()
        for epoch in range(1, config.triplet_epochs + 1):
            triplets = sample_triplets(similarity, config.triplet_threshold, rng)
            if triplets is None:
                logger.warning('No clip has both a similar and a dissimilar caption; triplet training skipped')
                break
            order = rng.permutation(len(triplets[0]))
            total, batches = 0.0, 0
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                a, p, n = (torch.from_numpy(t[idx]) for t in triplets)
                loss = F.triplet_margin_loss(model(inputs[a]), model(inputs[p]), model(inputs[n]),
                                             margin=config.triplet_margin)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += float(loss.item())
                batches += 1
            logger.debug(f"Triplet epoch {epoch}/{config.triplet_epochs}: loss={total / max(batches, 1):.4f}")

    model.eval()
    logger.info(f"✓ Triplet embedding trained on {len(clips)} clips")
    return model


@dataclass
class KnnIndex:
    clip_ids: List[str]
    embeddings: np.ndarray  # [N, embed_dim]
    captions: List[List[str]]

    def __len__(self) -> int:
        return len(self.clip_ids)


def build_index(model: TripletEmbedder, records: Sequence[CaptionRecord],
                features: Dict[str, ClipFeatures]) -> KnnIndex:
    return KnnIndex(
        clip_ids=[r.clip_id for r in records],
        embeddings=model.embed([features[r.clip_id] for r in records]) if records else np.zeros((0, 0)),
        captions=[list(r.tokens) for r in records],
    )


def knn_caption(query: np.ndarray, index: KnnIndex, k: int = 1) -> List[str]:
    """
    Caption of the nearest indexed clip to an embedded query

    Ties are broken by the lowest clip_id.

    Raises:
        ValueError: for k != 1 or an empty index
    """
    if k != 1:
        raise ValueError(f"Only k=1 nearest-neighbour captioning is supported, got k={k}")
    if len(index) == 0:
        raise ValueError('k-NN index is empty')
    distances = np.sum((index.embeddings - np.asarray(query, dtype=np.float32)[None, :]) ** 2, axis=1)
    order = np.lexsort((np.array(index.clip_ids), distances))
    return list(index.captions[int(order[0])])


def caption_knn(model: TripletEmbedder, index: KnnIndex, records: Sequence[CaptionRecord],
                features: Dict[str, ClipFeatures]) -> List[List[str]]:
    if not records:
        return []
    queries = model.embed([features[r.clip_id] for r in records])
    return [knn_caption(q, index) for q in queries]
