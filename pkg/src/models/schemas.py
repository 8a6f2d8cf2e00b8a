"""
Pydantic models shared across the pipeline
Caption records, model/training configuration and evaluation reports
"""
import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from src.corpus.actions import normalize_action

Split = Literal['train', 'val', 'test']
Stream = Literal['img', 'flow', 'vae']
ALL_STREAMS: List[str] = ['img', 'flow', 'vae']
KEPT_PUNCTUATION = frozenset({'!', '.', ','})


class CaptionRecord(BaseModel):
    """One anonymized caption attached to a clip"""
    clip_id: str = Field(..., min_length=1)
    action: str
    tokens: List[str] = Field(default_factory=list)
    split: Optional[Split] = None

    @field_validator('action')
    @classmethod
    def validate_action(cls, v: str) -> str:
        return normalize_action(v)

    @field_validator('tokens')
    @classmethod
    def validate_tokens(cls, v: List[str]) -> List[str]:
        for token in v:
            if not token or token != token.lower():
                raise ValueError(f"Tokens must be non-empty and lowercase, got '{token}'")
            if not any(ch.isalnum() for ch in token) and token not in KEPT_PUNCTUATION:
                raise ValueError(f"Punctuation token '{token}' is not one of ! . ,")
        return v

    @property
    def caption(self) -> str:
        return ' '.join(self.tokens)


class LossWeights(BaseModel):
    """Weights of the weighted average over L1, L2, L3 and the L2 scaling factor"""
    w1: float = Field(default=1.0, ge=0)
    w2: float = Field(default=1.0, ge=0)
    w3: float = Field(default=1.0, ge=0)
    sc: float = Field(default=20.0, gt=0)

    @model_validator(mode='after')
    def check_positive_sum(self) -> 'LossWeights':
        if self.w1 + self.w2 + self.w3 <= 0:
            raise ValueError('At least one loss weight must be positive')
        return self


class ModelConfig(BaseModel):
    """
    Captioner architecture

    Only the single transformer block with two heads comes from the method
    description; widths, kernels and the number of fusion layers are local
    defaults and can be overridden.
    """
    vocab_size: int = Field(default=0, ge=0)
    embed_dim: int = Field(default=128, ge=2)
    n_heads: int = Field(default=2, ge=1)
    n_blocks: int = Field(default=1, ge=1)
    ff_dim: int = Field(default=256, ge=1)
    max_seq_len: int = Field(default=64, ge=2)
    dropout: float = Field(default=0.0, ge=0, lt=1)

    # Part B
    img_size: Tuple[int, int] = (32, 64)
    img_channels: List[int] = Field(default_factory=lambda: [16, 32])
    img_kernel: int = 3
    flow_dim: int = Field(default=512, ge=1)
    flow_channels: List[int] = Field(default_factory=lambda: [64])
    vae_dim: int = Field(default=64, ge=1)
    vae_channels: List[int] = Field(default_factory=lambda: [64])
    temporal_kernel: int = 3
    fc2_width: int = 128
    sw_conv_channels: int = 4
    sw_conv_kernel: int = 5
    vis_width: int = 128

    # Part C
    fc3_width: int = 256

    sw_count: int = 55
    streams: List[Stream] = Field(default_factory=lambda: list(ALL_STREAMS))
    seed: int = 0

    @model_validator(mode='after')
    def check_heads(self) -> 'ModelConfig':
        if self.embed_dim % self.n_heads != 0:
            raise ValueError(f"embed_dim ({self.embed_dim}) must be divisible by n_heads ({self.n_heads})")
        if not self.streams:
            raise ValueError('At least one visual stream must be enabled')
        return self


class TrainConfig(BaseModel):
    """
    One training/evaluation run

    `kind` selects what the run produces: the captioning model, the triplet
    k-NN baseline or the random-per-action baseline.
    """
    label: str = 'proposed'
    kind: Literal['captioner', 'knn', 'random'] = 'captioner'
    epochs_max: int = Field(default=100, ge=1)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    optimizer: Literal['adam', 'sgd'] = 'adam'
    eval_every: int = Field(default=1, ge=1)
    patience: int = Field(default=10, ge=1)
    seed: int = 0
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    use_l2: bool = True
    use_l3: bool = True
    streams: List[Stream] = Field(default_factory=lambda: list(ALL_STREAMS))
    max_len: int = Field(default=64, ge=1)

    # triplet embedding for the k-NN baseline
    triplet_margin: float = Field(default=0.2, ge=0)
    triplet_epochs: int = Field(default=30, ge=1)
    triplet_embed_dim: int = Field(default=32, ge=1)
    triplet_hidden_dim: int = Field(default=128, ge=1)
    triplet_threshold: float = Field(default=0.5, gt=0, le=1)

    @field_validator('streams')
    @classmethod
    def validate_streams(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError('At least one visual stream must be enabled')
        # canonical order, no duplicates
        return [s for s in ALL_STREAMS if s in v]

    @model_validator(mode='after')
    def check_effective_weights(self) -> 'TrainConfig':
        self.effective_weights()
        return self

    def effective_weights(self) -> LossWeights:
        """Loss weights after the ablation flags have zeroed L2 and/or L3"""
        return LossWeights(
            w1=self.loss_weights.w1,
            w2=self.loss_weights.w2 if self.use_l2 else 0.0,
            w3=self.loss_weights.w3 if self.use_l3 else 0.0,
            sc=self.loss_weights.sc,
        )


class MetricsReport(BaseModel):
    """Syntax, soccer semantics and corpus metrics for one model run"""
    b1: float = 0.0
    b2: float = 0.0
    b3: float = 0.0
    b4: float = 0.0
    cider: float = Field(default=0.0, ge=0)
    sw_precision: float = 0.0
    sw_recall: float = 0.0
    diversity: float = Field(default=0.0, ge=0)
    normalized: float = 0.0

    @model_validator(mode='after')
    def check_finite(self) -> 'MetricsReport':
        for name, value in self.model_dump().items():
            if not math.isfinite(value):
                raise ValueError(f"Metric {name} is not finite: {value}")
        return self


class EvalPoint(BaseModel):
    """Validation metrics of one evaluated checkpoint"""
    epoch: int
    train_loss: float
    metrics: MetricsReport


class RunReport(BaseModel):
    run_id: str
    label: str
    history: List[EvalPoint] = Field(default_factory=list)
    loss_history: List[Dict[str, float]] = Field(default_factory=list)
    best_epoch: Optional[int] = None
    best_checkpoint: Optional[str] = None
    test_metrics: Optional[MetricsReport] = None
    config: TrainConfig
    aborted: bool = False
    abort_reason: Optional[str] = None


class AblationRow(BaseModel):
    label: str
    metrics: Optional[MetricsReport] = None
    error: Optional[str] = None


class AblationReport(BaseModel):
    rows: List[AblationRow] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
