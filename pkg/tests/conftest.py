"""
Shared fixtures: the shipped lexicon, small models and a tiny synthetic corpus
"""
import numpy as np
import pytest

from src.config.settings import FeatureSettings, settings
from src.corpus.dataset import split_dataset
from src.corpus.lexicon import load_lexicon
from src.corpus.vocabulary import build_vocab
from src.models.schemas import ModelConfig
from src.synthvision.features import ClipFeatures
from src.synthvision.pipeline import build_manifest, extract_all, fit_feature_models, manifest_records

FLOW_DIM = 8
VAE_DIM = 4


@pytest.fixture(scope='session')
def lexicon():
    return load_lexicon(settings.corpus.lexicon_path)


def make_features(n_frames: int = 4, seed: int = 0, flow_dim: int = FLOW_DIM, vae_dim: int = VAE_DIM) -> ClipFeatures:
    rng = np.random.default_rng(seed)
    return ClipFeatures(
        img=rng.random((n_frames, 32, 64, 3), dtype=np.float32),
        flow=rng.standard_normal((n_frames, flow_dim)).astype(np.float32),
        vae=rng.standard_normal((n_frames, vae_dim)).astype(np.float32),
    )


def tiny_config(vocab_size: int = 30, **overrides) -> ModelConfig:
    values = dict(
        vocab_size=vocab_size, embed_dim=16, n_heads=2, ff_dim=32, max_seq_len=16,
        img_channels=[4], flow_dim=FLOW_DIM, flow_channels=[8], vae_dim=VAE_DIM, vae_channels=[8],
        fc2_width=16, sw_conv_channels=2, sw_conv_kernel=3, vis_width=16, fc3_width=32, seed=0,
    )
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def clip_features():
    return make_features()


@pytest.fixture(scope='session')
def small_feature_settings():
    return FeatureSettings(pca_dim=8, pca_fit_clips=6, vae_dim=8, vae_epochs=1, vae_batch_size=16,
                           vae_max_images=48)


@pytest.fixture(scope='session')
def synthetic_corpus(small_feature_settings):
    """24 two-second synthetic clips: (split records, vocab, features, manifest)"""
    manifest = build_manifest(24, seed=3, duration_s=2.0)
    records = split_dataset(manifest_records(manifest, small_feature_settings), (0.7, 0.1, 0.2), seed=3)
    vocab = build_vocab([r.tokens for r in records if r.split == 'train'], min_count=1)
    pca, vae = fit_feature_models(manifest, small_feature_settings, seed=3)
    features = extract_all(manifest, small_feature_settings, pca, vae)
    return records, vocab, features, manifest
