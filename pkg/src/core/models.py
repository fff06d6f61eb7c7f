"""
candi-lab data models
Shared value types for the corruption analytics, the hybrid kernel, the
denoisers and the samplers.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ShapeError


class SamplerMode(Enum):
    """Reverse-process families"""
    HYBRID_EXACT = "hybrid_exact"
    HYBRID_APPROX = "hybrid_approx"
    MASKED = "masked"
    GAUSSIAN_ODE = "gaussian_ode"


class Metric(Enum):
    """Similarity used to decode a noisy embedding"""
    DOT = "dot"
    L2 = "l2"


def check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma <= 0.0:
        raise DomainError(f"sigma must be positive and finite, got {sigma}")
    return sigma


def check_vocab(vocab: int) -> int:
    if isinstance(vocab, bool) or int(vocab) != vocab or vocab < 2:
        raise DomainError(f"vocabulary size must be an integer >= 2, got {vocab}")
    return int(vocab)


def check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {t}")
    return t


def one_hot(tokens: np.ndarray, vocab: int) -> np.ndarray:
    """One-hot rows for an integer array of any shape; appends a vocab axis."""
    tokens = np.asarray(tokens, dtype=np.int64)
    return (tokens[..., None] == np.arange(vocab)).astype(float)


@dataclass
class McEstimate:
    """Monte Carlo mean with its standard error"""
    mean: float
    std_err: float
    n_samples: int
    seed: int

    @classmethod
    def from_draws(cls, draws: np.ndarray, seed: int) -> "McEstimate":
        draws = np.asarray(draws, dtype=float)
        n = draws.size
        std = float(np.std(draws, ddof=1)) if n > 1 else 0.0
        return cls(mean=float(np.mean(draws)), std_err=std / math.sqrt(n), n_samples=n, seed=seed)

    def agrees_with(self, value: float, n_se: float = 3.0) -> bool:
        """True when ``value`` lies within ``n_se`` standard errors of the mean."""
        return abs(self.mean - value) <= n_se * self.std_err + 1e-12


@dataclass
class CorruptionPoint:
    """Analytic corruption rates at one noise level"""
    sigma: float
    vocab: int
    rho: float
    rank: float


@dataclass(eq=False)
class EmbeddingTable:
    """v token embeddings of common dimension d"""
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2:
            raise ShapeError(f"embedding table must be a v x d matrix, got shape {self.vectors.shape}")
        if self.vectors.shape[0] < 2:
            raise DomainError("embedding table needs at least two tokens")
        if not np.all(np.isfinite(self.vectors)):
            raise DomainError("embedding table entries must be finite")

    @property
    def vocab(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def corners(cls, vocab: int) -> "EmbeddingTable":
        return cls(np.eye(check_vocab(vocab)))


@dataclass(frozen=True)
class KernelConfig:
    """Schedule bounds and shape of the hybrid kernel"""
    vocab: int
    seq_len: int
    rank_min: float = 0.01
    rank_max: float = 0.49

    def __post_init__(self):
        check_vocab(self.vocab)
        if isinstance(self.seq_len, bool) or int(self.seq_len) != self.seq_len or self.seq_len < 1:
            raise DomainError(f"seq_len must be a positive integer, got {self.seq_len}")
        if not (0.0 < self.rank_min < self.rank_max < 0.5):
            raise DomainError(
                f"rank bounds must satisfy 0 < rank_min < rank_max < 0.5, "
                f"got rank_min={self.rank_min}, rank_max={self.rank_max}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {"vocab": self.vocab, "seq_len": self.seq_len,
                "rank_min": self.rank_min, "rank_max": self.rank_max}


@dataclass(eq=False)
class HybridState:
    """Joint latent: L x v lattice, clean-mask (True = clean) and time"""
    lattice: np.ndarray
    mask: np.ndarray
    t: float

    def __post_init__(self):
        self.lattice = np.asarray(self.lattice, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        check_time(self.t)
        if self.lattice.ndim != 2 or self.mask.shape != (self.lattice.shape[0],):
            raise ShapeError(
                f"lattice must be L x v with a length-L mask, got {self.lattice.shape} and {self.mask.shape}"
            )
        if not np.all(np.isfinite(self.lattice)):
            raise DomainError("lattice entries must be finite")
        clean = self.lattice[self.mask]
        if clean.size and not (np.all((clean == 0.0) | (clean == 1.0)) and np.all(clean.sum(axis=1) == 1.0)):
            raise DomainError("clean rows must be exact one-hot rows")

    @property
    def seq_len(self) -> int:
        return self.lattice.shape[0]

    @property
    def vocab(self) -> int:
        return self.lattice.shape[1]

    def tokens(self) -> np.ndarray:
        """Argmax decoding; exact for clean rows."""
        return np.argmax(self.lattice, axis=1)


@dataclass(eq=False)
class PosteriorGrid:
    """Per-position categorical distributions, one L x v row-stochastic matrix"""
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2:
            raise ShapeError(f"posterior must be L x v, got shape {self.probs.shape}")
        if np.any(self.probs < 0.0) or not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-9, rtol=0.0):
            raise DomainError("posterior rows must be nonnegative and sum to 1")


@dataclass(eq=False)
class ToyDistribution:
    """Explicit finite distribution over token sequences"""
    vocab: int
    seq_len: int
    sequences: np.ndarray
    probs: np.ndarray
    _index: Dict[Tuple[int, ...], float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        check_vocab(self.vocab)
        self.sequences = np.asarray(self.sequences, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.sequences.ndim != 2 or self.sequences.shape[1] != self.seq_len:
            raise ShapeError(f"support must be K x {self.seq_len}, got {self.sequences.shape}")
        if self.probs.shape != (self.sequences.shape[0],) or self.probs.size == 0:
            raise ShapeError("support needs one probability per sequence")
        if np.any(self.sequences < 0) or np.any(self.sequences >= self.vocab):
            raise DomainError(f"support tokens must lie in [0, {self.vocab})")
        if np.any(self.probs <= 0.0) or abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise DomainError("support probabilities must be positive and sum to 1")
        self._index = {}
        for seq, p in zip(self.sequences, self.probs):
            key = tuple(int(x) for x in seq)
            if key in self._index:
                raise DomainError(f"duplicate support sequence {list(key)}")
            self._index[key] = float(p)

    @classmethod
    def from_pairs(cls, vocab: int, pairs: Sequence[Tuple[Sequence[int], float]]) -> "ToyDistribution":
        if not pairs:
            raise DomainError("support must be nonempty")
        seqs = np.array([list(s) for s, _ in pairs], dtype=np.int64)
        return cls(vocab=vocab, seq_len=seqs.shape[1], sequences=seqs, probs=np.array([p for _, p in pairs]))

    @property
    def support_size(self) -> int:
        return self.sequences.shape[0]

    def prob(self, seq: Sequence[int]) -> float:
        return self._index.get(tuple(int(x) for x in seq), 0.0)

    def entropy(self) -> float:
        return float(-np.sum(self.probs * np.log(self.probs)))

    def marginals(self) -> np.ndarray:
        """L x v per-position data marginals."""
        return np.einsum("k,klv->lv", self.probs, one_hot(self.sequences, self.vocab))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.support_size, size=n, p=self.probs)
        return self.sequences[idx]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "vocab": self.vocab,
            "len": self.seq_len,
            "support": [{"tokens": [int(x) for x in s], "prob": float(p)}
                        for s, p in zip(self.sequences, self.probs)],
        }


@dataclass
class SamplerConfig:
    """Reverse-process settings"""
    kernel_cfg: KernelConfig
    nfe: int = 64
    temperature: float = 1.0
    guidance_weight: float = 0.0
    mode: SamplerMode = SamplerMode.HYBRID_EXACT
    seed: int = 0
    literal_ode_sign: bool = False

    def __post_init__(self):
        self.mode = SamplerMode(self.mode)
        if isinstance(self.nfe, bool) or int(self.nfe) != self.nfe or self.nfe < 1:
            raise DomainError(f"nfe must be a positive integer, got {self.nfe}")
        if not math.isfinite(self.temperature) or self.temperature <= 0.0:
            raise DomainError(f"temperature must be positive, got {self.temperature}")
        if not math.isfinite(self.guidance_weight):
            raise DomainError("guidance weight must be finite")

    def to_dict(self) -> Dict[str, Any]:
        return {"nfe": self.nfe, "temperature": self.temperature, "guidance_weight": self.guidance_weight,
                "mode": self.mode.value, "seed": self.seed, "literal_ode_sign": self.literal_ode_sign,
                "kernel": self.kernel_cfg.to_dict()}


@dataclass
class TrainConfig:
    """Gradient-descent settings for the tiny denoiser"""
    learning_rate: float = 0.1
    steps: int = 4000
    batch_size: int = 128
    seed: int = 0
    lam: float = 0.5
    embed_dim: int = 16
    hidden_dim: int = 32
    eval_batch_size: int = 2048
    log_every: int = 500

    def __post_init__(self):
        if not math.isfinite(self.learning_rate) or self.learning_rate <= 0.0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("steps", "batch_size", "embed_dim", "hidden_dim", "eval_batch_size", "log_every"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value}")
        if not (0.0 <= self.lam <= 1.0):
            raise DomainError(f"lam must lie in [0, 1], got {self.lam}")


@dataclass(eq=False)
class Trajectory:
    """(t, state) snapshots of one reverse trajectory"""
    snapshots: List[Tuple[float, HybridState]] = field(default_factory=list)

    def append(self, t: float, state: HybridState) -> None:
        if self.snapshots:
            last_t, last_state = self.snapshots[-1]
            if not t < last_t:
                raise DomainError(f"trajectory times must strictly decrease, got {t} after {last_t}")
            if np.any(last_state.mask & ~state.mask):
                raise DomainError("clean positions cannot become noisy again")
        self.snapshots.append((t, state))

    @property
    def times(self) -> List[float]:
        return [t for t, _ in self.snapshots]

    def __len__(self) -> int:
        return len(self.snapshots)


@dataclass(eq=False)
class SampleSet:
    """Generated sequences and the sampler settings that produced them"""
    tokens: np.ndarray
    config: Optional[SamplerConfig] = None

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if self.tokens.ndim != 2 or self.tokens.shape[0] == 0:
            raise ShapeError(f"sample set must be a nonempty n x L array, got shape {self.tokens.shape}")

    def __len__(self) -> int:
        return self.tokens.shape[0]
