"""
Configuration settings for the capkit captioning pipeline
Loads environment variables, an optional JSON config file and CLI overrides
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.models.schemas import ModelConfig, TrainConfig

BASE_DIR = Path(__file__).parent.parent.parent
ASSETS_DIR = BASE_DIR / 'data'


class CorpusSettings(BaseModel):
    """Caption corpus handling"""
    min_count: int = Field(default=4, ge=1)
    split_ratios: Tuple[float, float, float] = (0.85, 0.05, 0.10)
    lexicon_path: Path = ASSETS_DIR / 'sw_lexicon.json'

    @field_validator('split_ratios')
    @classmethod
    def validate_ratios(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(r < 0 for r in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"Split ratios must be non-negative and sum to 1, got {v}")
        return v


class FeatureSettings(BaseModel):
    """Visual feature pipelines"""
    fps: int = Field(default=2, ge=1)
    frame_height: int = Field(default=64, ge=32)
    frame_width: int = Field(default=128, ge=64)
    pca_dim: int = Field(default=256, ge=1)
    pca_fit_clips: int = Field(default=32, ge=1)
    vae_dim: int = Field(default=64, ge=1)
    vae_epochs: int = Field(default=10, ge=1)
    vae_learning_rate: float = Field(default=1e-3, gt=0)
    vae_beta: float = Field(default=1e-3, ge=0)
    vae_batch_size: int = Field(default=32, ge=1)
    vae_max_images: int = Field(default=2000, ge=1)


class SynthSettings(BaseModel):
    """Synthetic scene generator"""
    n_clips: int = Field(default=50, ge=1)
    duration_s: float = Field(default=4.0, gt=0)
    action_weighting: Literal['uniform', 'caption_counts'] = 'uniform'
    grammar_path: Path = ASSETS_DIR / 'caption_grammar.json'


class Settings(BaseSettings):
    """Application settings with validation"""

    model_config = SettingsConfigDict(
        env_prefix='CAPKIT_',
        env_nested_delimiter='__',
        env_file='.env',
        env_file_encoding='utf-8',
        case_sensitive=False,
        extra='ignore',
        protected_namespaces=('settings_',),
    )

    seed: int = 0
    debug: bool = False

    corpus: CorpusSettings = Field(default_factory=CorpusSettings)
    features: FeatureSettings = Field(default_factory=FeatureSettings)
    synth: SynthSettings = Field(default_factory=SynthSettings)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    # Application Metadata
    app_name: str = 'capkit'
    app_version: str = '1.0.0'

    # Paths
    base_dir: Path = BASE_DIR
    logs_dir: Path = BASE_DIR / 'logs'
    data_dir: Path = BASE_DIR / 'runs'
    database_url: Optional[str] = None

    @field_validator('logs_dir')
    @classmethod
    def create_directories(cls, v: Path) -> Path:
        """Ensure directories exist"""
        v.mkdir(parents=True, exist_ok=True)
        return v

    @model_validator(mode='after')
    def propagate_seed(self) -> 'Settings':
        """Sections without an explicit seed inherit the top-level one"""
        if 'seed' not in self.model.model_fields_set:
            self.model.seed = self.seed
        if 'seed' not in self.train.model_fields_set:
            self.train.seed = self.seed
        if self.database_url is None:
            self.database_url = f"sqlite:///{self.data_dir / 'capkit.db'}"
        return self

    @property
    def features_dir(self) -> Path:
        return self.data_dir / 'features'

    @property
    def checkpoints_dir(self) -> Path:
        return self.data_dir / 'checkpoints'

    @property
    def reports_dir(self) -> Path:
        return self.data_dir / 'reports'

    def ensure_run_dirs(self) -> None:
        for path in (self.data_dir, self.features_dir, self.checkpoints_dir, self.reports_dir):
            path.mkdir(parents=True, exist_ok=True)


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(config_path: Optional[Path] = None, **overrides: Any) -> Settings:
    """
    Build settings from a JSON config file plus overrides

    Args:
        config_path: JSON file with top-level keys matching Settings fields;
            falls back to the CAPKIT_CONFIG environment variable
        overrides: values from command-line flags (nested dicts allowed)

    Returns:
        Validated Settings; overrides win over the file, the file over env vars
    """
    data: Dict[str, Any] = {}
    path = config_path or os.environ.get('CAPKIT_CONFIG')
    if path:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        data = json.loads(path.read_text(encoding='utf-8'))
    data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    return Settings(**data)


# Global settings instance
settings = Settings()
