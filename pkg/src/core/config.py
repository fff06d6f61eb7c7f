"""
Run configuration documents.

A run config is a versioned JSON object with optional ``kernel``, ``train``,
``sampler`` and ``paths`` sections. Unknown keys are rejected and every
section converts to the matching core dataclass.
"""

import logging
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..utils.file_formats import read_json_document
from .errors import ConfigError
from .models import KernelConfig, SamplerConfig, SamplerMode, TrainConfig

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelSection(_Section):
    rank_min: float = 0.01
    rank_max: float = 0.49
    vocab: Optional[int] = Field(default=None, ge=2)
    seq_len: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_rank_bounds(self) -> "KernelSection":
        if not (0.0 < self.rank_min < self.rank_max < 0.5):
            raise ValueError(
                f"rank_min ({self.rank_min}) and rank_max ({self.rank_max}) must satisfy "
                f"0 < rank_min < rank_max < 0.5"
            )
        return self

    def to_kernel_config(self, vocab: Optional[int] = None, seq_len: Optional[int] = None) -> KernelConfig:
        """Explicit ``vocab``/``seq_len`` (from a distribution or checkpoint) fill unset fields."""
        vocab = self.vocab if self.vocab is not None else vocab
        seq_len = self.seq_len if self.seq_len is not None else seq_len
        if vocab is None or seq_len is None:
            raise ConfigError("kernel.vocab and kernel.seq_len are needed when no distribution fixes them")
        return KernelConfig(vocab=vocab, seq_len=seq_len, rank_min=self.rank_min, rank_max=self.rank_max)


class TrainSection(_Section):
    learning_rate: float = Field(default=0.1, gt=0.0)
    steps: int = Field(default=4000, ge=1)
    batch_size: int = Field(default=128, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    lam: float = Field(default=0.5, ge=0.0, le=1.0)
    embed_dim: int = Field(default=16, ge=1)
    hidden_dim: int = Field(default=32, ge=1)
    eval_batch_size: int = Field(default=2048, ge=1)
    log_every: int = Field(default=500, ge=1)

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class SamplerSection(_Section):
    nfe: int = Field(default=64, ge=1)
    temperature: float = Field(default=1.0, gt=0.0)
    guidance_weight: float = 0.0
    mode: Literal["hybrid_exact", "hybrid_approx", "masked", "gaussian_ode"] = "hybrid_exact"
    seed: int = Field(default=0, ge=0, lt=2**64)
    literal_ode_sign: bool = False
    num_samples: int = Field(default=1000, ge=1)

    def to_sampler_config(self, kernel_cfg: KernelConfig) -> SamplerConfig:
        return SamplerConfig(kernel_cfg=kernel_cfg, nfe=self.nfe, temperature=self.temperature,
                             guidance_weight=self.guidance_weight, mode=SamplerMode(self.mode),
                             seed=self.seed, literal_ode_sign=self.literal_ode_sign)


class PathsSection(_Section):
    distribution: str = "builtin:reference"
    checkpoint: Optional[str] = None
    classifier: Optional[str] = None
    out: Optional[str] = None


class RunConfig(_Section):
    """Top-level run configuration document"""
    version: Literal[1]
    kernel: KernelSection = Field(default_factory=KernelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    paths: PathsSection = Field(default_factory=PathsSection)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls(version=1)


def describe_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def parse_config(document, source: str = "<document>") -> RunConfig:
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"{source}: {describe_validation_error(e)}")


def load_config(path: Union[str, Path]) -> RunConfig:
    """Strictly parse a run config file; errors name the line or the field."""
    config = parse_config(read_json_document(path), str(path))
    logger.debug(f"Loaded run config from {path}")
    return config
