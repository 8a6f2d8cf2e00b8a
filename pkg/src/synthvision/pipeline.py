"""
Synthetic corpus and feature pipeline
Clips are never stored as raw video: a manifest (clip id, seed, action,
duration) regenerates frames and flow on demand, and only the feature streams
are written to disk.
"""
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.config.logging_config import logger
from src.config.settings import FeatureSettings
from src.corpus.actions import ACTION_CAPTION_COUNTS, ACTION_CATEGORIES
from src.models.schemas import CaptionRecord
from src.synthvision.features import ClipFeatures, extract_features
from src.synthvision.grammar import CaptionGrammar, load_grammar
from src.synthvision.pca import PCAModel, fit_pca, flow_planes
from src.synthvision.scene import SyntheticClip, gen_clip
from src.synthvision.vae import InpaintingVAE, train_vae


def action_probabilities(weighting: str = 'uniform') -> np.ndarray:
    if weighting == 'uniform':
        return np.full(len(ACTION_CATEGORIES), 1.0 / len(ACTION_CATEGORIES))
    if weighting == 'caption_counts':
        counts = np.array([ACTION_CAPTION_COUNTS[a] for a in ACTION_CATEGORIES], dtype=np.float64)
        return counts / counts.sum()
    raise ValueError(f"Unknown action weighting '{weighting}', expected 'uniform' or 'caption_counts'")


def build_manifest(n_clips: int, seed: int, duration_s: float, weighting: str = 'uniform') -> List[dict]:
    """One row per clip: {clip_id, seed, action, duration_s}"""
    if n_clips < 1:
        raise ValueError(f"n_clips must be >= 1, got {n_clips}")
    rng = np.random.default_rng(seed)
    actions = rng.choice(len(ACTION_CATEGORIES), size=n_clips, p=action_probabilities(weighting))
    seeds = rng.integers(0, 2 ** 31 - 1, size=n_clips)
    return [
        {'clip_id': f"clip{i:05d}", 'seed': int(s), 'action': ACTION_CATEGORIES[int(a)], 'duration_s': duration_s}
        for i, (a, s) in enumerate(zip(actions, seeds))
    ]


def regenerate(row: dict, features: FeatureSettings, grammar: Optional[CaptionGrammar] = None) -> SyntheticClip:
    return gen_clip(int(row['seed']), row['action'], float(row['duration_s']), fps=features.fps,
                    height=features.frame_height, width=features.frame_width,
                    grammar=grammar, clip_id=row['clip_id'])


def iter_clips(manifest: Sequence[dict], features: FeatureSettings,
               grammar: Optional[CaptionGrammar] = None) -> Iterator[SyntheticClip]:
    grammar = grammar or load_grammar()
    for row in manifest:
        yield regenerate(row, features, grammar)


def manifest_records(manifest: Sequence[dict], features: FeatureSettings,
                     grammar: Optional[CaptionGrammar] = None) -> List[CaptionRecord]:
    """Caption records of the manifest's clips (no split assigned)"""
    return [CaptionRecord(clip_id=c.clip_id, action=c.events.action, tokens=c.caption)
            for c in iter_clips(manifest, features, grammar)]


def fit_feature_models(manifest: Sequence[dict], features: FeatureSettings, seed: int = 0,
                       grammar: Optional[CaptionGrammar] = None) -> Tuple[PCAModel, InpaintingVAE]:
    """
    Fit the flow PCA and train the inpainting VAE on the first clips of the manifest

    The same first `pca_fit_clips` clips play the role of the single reference
    match; the fitted models are then applied unchanged to every clip.
    """
    reference = list(iter_clips(manifest[:features.pca_fit_clips], features, grammar))
    planes = np.concatenate([flow_planes(c.true_flow) for c in reference])
    out_dim = features.pca_dim
    if len(planes) <= out_dim:
        out_dim = max(1, len(planes) - 1)
        logger.warning(f"Only {len(planes)} flow planes for PCA; reducing components from "
                       f"{features.pca_dim} to {out_dim} (raise pca_fit_clips for the full size)")
    pca = fit_pca(planes, out_dim)

    frames = np.concatenate([c.frames for c in reference])[:features.vae_max_images]
    vae, history = train_vae(frames, latent_dim=features.vae_dim, epochs=features.vae_epochs,
                             learning_rate=features.vae_learning_rate, beta=features.vae_beta,
                             batch_size=features.vae_batch_size, seed=seed)
    return pca, vae


def extract_all(manifest: Sequence[dict], features: FeatureSettings, pca: PCAModel, vae: InpaintingVAE,
                features_dir: Optional[Path] = None,
                grammar: Optional[CaptionGrammar] = None) -> Dict[str, ClipFeatures]:
    """Feature streams for every manifest clip, written to features_dir when given"""
    out: Dict[str, ClipFeatures] = {}
    for clip in iter_clips(manifest, features, grammar):
        clip_features = extract_features(clip.frames, clip.true_flow, pca, vae)
        if features_dir is not None:
            clip_features.save(features_dir, clip.clip_id)
        out[clip.clip_id] = clip_features
    logger.info(f"✓ Extracted features for {len(out)} clips")
    return out
