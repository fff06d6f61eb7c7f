"""
Denoisers
Posteriors P(X0 | Xt, Mt) from an exact enumeration oracle over small explicit
distributions and from a tiny trainable network, plus the weighted
cross-entropy loss and its hand-written gradient.

Batched conventions used throughout: lattices and embeddings are (B, L, ·)
arrays, masks are (B, L) booleans with True for clean positions, and times
are scalars or (B,) arrays.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Tuple, Union

import numpy as np
from scipy.special import softmax

from ..core.errors import DomainError, ImpossibleEvidenceError, ShapeError
from ..core.hybrid_kernel import sigma_schedule
from ..core.models import (
    HybridState,
    KernelConfig,
    PosteriorGrid,
    ToyDistribution,
    check_sigma,
    one_hot,
)

logger = logging.getLogger(__name__)

TimeLike = Union[float, np.ndarray]

# floor inside the log of the cross-entropy
LOG_FLOOR = 1e-30

# log σ and the input shrink 1/√(σ² + 1)
NOISE_FEATURES = 2


def _batch_sigmas(t: TimeLike, batch: int, cfg: KernelConfig) -> np.ndarray:
    ts = np.broadcast_to(np.asarray(t, dtype=float), (batch,))
    return sigma_schedule(ts, cfg)


class Denoiser(ABC):
    """Anything that maps a (batched) hybrid latent to per-position posteriors"""

    kernel_cfg: KernelConfig

    @property
    @abstractmethod
    def embedding_table(self) -> np.ndarray:
        """v x d matrix W; lattice rows embed as row @ W."""

    @abstractmethod
    def posterior_from_embeddings(self, embeddings: np.ndarray, mask: np.ndarray, t: TimeLike) -> np.ndarray:
        """(B, L, v) posteriors from (B, L, d) embeddings."""

    @abstractmethod
    def masked_posterior_batch(self, tokens: np.ndarray, t: TimeLike) -> np.ndarray:
        """(B, L, v) posteriors for token arrays carrying the mask symbol ``vocab``."""

    def posterior_batch(self, lattice: np.ndarray, mask: np.ndarray, t: TimeLike) -> np.ndarray:
        return self.posterior_from_embeddings(lattice @ self.embedding_table, mask, t)

    def posterior(self, state: HybridState) -> PosteriorGrid:
        probs = self.posterior_batch(state.lattice[None], state.mask[None], state.t)
        return PosteriorGrid(probs[0])


class ExactBayesDenoiser(Denoiser):
    """
    Enumeration oracle over a ToyDistribution.

    With ``strict`` the oracle raises when clean positions contradict every
    support sequence; otherwise it drops the clean-position constraint for
    that batch row and conditions on the noisy rows alone.
    """

    def __init__(self, dist: ToyDistribution, kernel_cfg: KernelConfig, strict: bool = True):
        if dist.vocab != kernel_cfg.vocab or dist.seq_len != kernel_cfg.seq_len:
            raise ShapeError(
                f"distribution is {dist.seq_len} x {dist.vocab} but kernel expects "
                f"{kernel_cfg.seq_len} x {kernel_cfg.vocab}"
            )
        self.dist = dist
        self.kernel_cfg = kernel_cfg
        self.strict = strict
        self._log_prior = np.log(dist.probs)
        self._support_one_hot = one_hot(dist.sequences, dist.vocab)

    @property
    def embedding_table(self) -> np.ndarray:
        return np.eye(self.dist.vocab)

    def posterior_batch(self, lattice: np.ndarray, mask: np.ndarray, t: TimeLike) -> np.ndarray:
        return self.posterior_from_embeddings(lattice, mask, t)

    def posterior_from_embeddings(self, embeddings: np.ndarray, mask: np.ndarray, t: TimeLike) -> np.ndarray:
        embeddings = np.asarray(embeddings, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        self._check_batch(embeddings, mask)
        sigmas = _batch_sigmas(t, embeddings.shape[0], self.kernel_cfg)
        seqs = self.dist.sequences
        positions = np.arange(self.dist.seq_len)[None, :]

        # y[i, x_k[i]] for every batch row b, support sequence k, position i
        gathered = embeddings[:, positions, seqs]
        noisy = ~mask[:, None, :]
        log_lik = np.sum(gathered * noisy, axis=2) / (sigmas * sigmas)[:, None]
        tokens = np.argmax(embeddings, axis=2)
        return self._posterior(tokens, mask, log_lik)

    def masked_posterior_batch(self, tokens: np.ndarray, t: TimeLike) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 2 or tokens.shape[1] != self.dist.seq_len:
            raise ShapeError(f"expected (B, {self.dist.seq_len}) tokens, got {tokens.shape}")
        clean = tokens != self.dist.vocab
        log_lik = np.zeros((tokens.shape[0], self.dist.support_size))
        return self._posterior(np.where(clean, tokens, 0), clean, log_lik)

    def _posterior(self, tokens: np.ndarray, clean: np.ndarray, log_lik: np.ndarray) -> np.ndarray:
        matches = (tokens[:, None, :] == self.dist.sequences[None, :, :]) | ~clean[:, None, :]
        compatible = np.all(matches, axis=2)
        log_w = np.where(compatible, self._log_prior + log_lik, -np.inf)

        impossible = ~np.any(compatible, axis=1)
        if np.any(impossible):
            if self.strict:
                raise ImpossibleEvidenceError(
                    f"clean positions contradict every support sequence in {int(impossible.sum())} batch rows"
                )
            logger.warning(f"Dropping clean-position evidence for {int(impossible.sum())} batch rows")
            log_w[impossible] = (self._log_prior + log_lik)[impossible]

        weights = softmax(log_w, axis=1)
        probs = np.einsum("bk,klv->blv", weights, self._support_one_hot)
        return np.where(clean[..., None], one_hot(tokens, self.dist.vocab), probs)

    def _check_batch(self, embeddings: np.ndarray, mask: np.ndarray) -> None:
        expected = (self.dist.seq_len, self.dist.vocab)
        if embeddings.ndim != 3 or embeddings.shape[1:] != expected or mask.shape != embeddings.shape[:2]:
            raise ShapeError(f"expected (B, {expected[0]}, {expected[1]}) lattice with (B, L) mask, "
                             f"got {embeddings.shape} and {mask.shape}")


def exact_bayes_posterior(dist: ToyDistribution, state: HybridState, cfg: KernelConfig) -> PosteriorGrid:
    return ExactBayesDenoiser(dist, cfg, strict=True).posterior(state)


def score_from_posterior(state: HybridState, posterior: PosteriorGrid, sigma: float) -> np.ndarray:
    """−(lattice − E[X0])/σ² on noisy rows, zero on clean rows."""
    sigma = check_sigma(sigma)
    if posterior.probs.shape != state.lattice.shape:
        raise ShapeError(f"posterior {posterior.probs.shape} does not match lattice {state.lattice.shape}")
    return batch_score(state.lattice[None], state.mask[None], posterior.probs[None], np.array([sigma]))[0]


def batch_score(lattice: np.ndarray, mask: np.ndarray, posterior: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (lattice.shape[0],))
    score = -(lattice - posterior) / (sigmas * sigmas)[:, None, None]
    return np.where(mask[..., None], 0.0, score)


def precondition(embeddings: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
    """Scale noisy rows by 1/√(σ²+1); clean rows pass through."""
    embeddings = np.asarray(embeddings, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if embeddings.shape[:-1] != mask.shape:
        raise ShapeError(f"embeddings {embeddings.shape} do not match mask {mask.shape}")
    sigma = float(sigma)
    if sigma < 0.0:
        raise DomainError(f"sigma must be nonnegative, got {sigma}")
    return np.where(mask[..., None], embeddings, embeddings / np.sqrt(sigma * sigma + 1.0))


@dataclass(eq=False)
class DenoiserParams:
    """Tiny denoiser weights: embedding, corruption bias, per-position MLP, noise-level weights, position mixing and offsets"""
    W: np.ndarray
    b: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    S: np.ndarray
    P: np.ndarray
    q: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    lam: float = 0.5

    TENSORS = ("W", "b", "W1", "b1", "S", "P", "q", "W2", "b2")

    def __post_init__(self):
        for name in self.TENSORS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        v, d = self.W.shape
        h = self.W1.shape[1]
        L = self.q.shape[0]
        expected = {"b": (d,), "W1": (d, h), "b1": (h,), "S": (NOISE_FEATURES, h), "P": (L, L, h, v),
                    "q": (L, h), "W2": (h, v), "b2": (v,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not (0.0 <= self.lam <= 1.0):
            raise DomainError(f"lam must lie in [0, 1], got {self.lam}")
        if not all(np.all(np.isfinite(getattr(self, name))) for name in self.TENSORS):
            raise DomainError("denoiser parameters must be finite")

    @property
    def shape(self) -> Dict[str, int]:
        return {"v": self.W.shape[0], "d": self.W.shape[1], "h": self.W1.shape[1], "L": self.q.shape[0]}

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TENSORS}

    def map(self, fn: Callable[[str, np.ndarray], np.ndarray]) -> "DenoiserParams":
        return DenoiserParams(**{name: fn(name, t) for name, t in self.tensors().items()}, lam=self.lam)

    def copy(self) -> "DenoiserParams":
        return self.map(lambda _, t: t.copy())


def init_params(vocab: int, seq_len: int, embed_dim: int = 16, hidden_dim: int = 32,
                lam: float = 0.5, rng: Optional[np.random.Generator] = None) -> DenoiserParams:
    rng = rng if rng is not None else np.random.default_rng(0)
    return DenoiserParams(
        W=rng.standard_normal((vocab, embed_dim)),
        b=rng.standard_normal(embed_dim),
        W1=rng.standard_normal((embed_dim, hidden_dim)) / np.sqrt(embed_dim),
        b1=np.zeros(hidden_dim),
        S=np.zeros((NOISE_FEATURES, hidden_dim)),
        P=0.01 * rng.standard_normal((seq_len, seq_len, hidden_dim, vocab)),
        q=np.zeros((seq_len, hidden_dim)),
        W2=rng.standard_normal((hidden_dim, vocab)) / np.sqrt(hidden_dim),
        b2=np.zeros(vocab),
        lam=lam,
    )


def noise_features(sigmas: np.ndarray) -> np.ndarray:
    """(B,) noise levels to (B, 1, NOISE_FEATURES) inputs shared by every position."""
    sigmas = np.asarray(sigmas, dtype=float)
    return np.stack([np.log(sigmas), 1.0 / np.sqrt(sigmas * sigmas + 1.0)], axis=-1)[:, None, :]


@dataclass
class _ForwardCache:
    noisy: np.ndarray
    scale: np.ndarray
    features: np.ndarray
    u: np.ndarray
    h: np.ndarray
    z: np.ndarray
    probs: np.ndarray


def _network(params: DenoiserParams, embeddings: np.ndarray, noisy: np.ndarray,
             scale: np.ndarray, features: np.ndarray) -> _ForwardCache:
    lam = params.lam * noisy
    mixed = (1.0 - lam) * embeddings + lam * params.b
    u = mixed * scale
    h = np.tanh(u @ params.W1 + params.b1 + features @ params.S)
    z = h + params.q
    # every position's hidden state feeds every position's logits through its own map
    logits = z @ params.W2 + params.b2 + np.einsum("ijhv,bjh->biv", params.P, h)
    probs = softmax(logits, axis=-1)
    return _ForwardCache(noisy=noisy, scale=scale, features=features, u=u, h=h, z=z, probs=probs)


def _forward_embeddings(params: DenoiserParams, embeddings: np.ndarray, mask: np.ndarray,
                        sigmas: np.ndarray) -> _ForwardCache:
    noisy = (~mask)[..., None].astype(float)
    shrink = 1.0 / np.sqrt(sigmas * sigmas + 1.0)
    scale = 1.0 + noisy * (shrink[:, None, None] - 1.0)
    return _network(params, embeddings, noisy, scale, noise_features(sigmas))


class TinyDenoiser(Denoiser):
    """Trained network wrapped behind the Denoiser interface"""

    def __init__(self, params: DenoiserParams, kernel_cfg: KernelConfig):
        shape = params.shape
        if shape["v"] != kernel_cfg.vocab or shape["L"] != kernel_cfg.seq_len:
            raise ShapeError(f"parameters are for v={shape['v']}, L={shape['L']} but kernel expects "
                             f"v={kernel_cfg.vocab}, L={kernel_cfg.seq_len}")
        self.params = params
        self.kernel_cfg = kernel_cfg

    @property
    def embedding_table(self) -> np.ndarray:
        return self.params.W

    def posterior_from_embeddings(self, embeddings: np.ndarray, mask: np.ndarray, t: TimeLike) -> np.ndarray:
        embeddings = np.asarray(embeddings, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        if embeddings.ndim != 3 or mask.shape != embeddings.shape[:2]:
            raise ShapeError(f"expected (B, L, d) embeddings with (B, L) mask, got {embeddings.shape}, {mask.shape}")
        sigmas = _batch_sigmas(t, embeddings.shape[0], self.kernel_cfg)
        return _forward_embeddings(self.params, embeddings, mask, sigmas).probs

    def masked_posterior_batch(self, tokens: np.ndarray, t: TimeLike) -> np.ndarray:
        # masked positions carry the bias alone, the λ = 1 limit of the corruption mix
        tokens = np.asarray(tokens, dtype=np.int64)
        clean = tokens != self.kernel_cfg.vocab
        embeddings = np.where(clean[..., None], self.params.W[np.where(clean, tokens, 0)], self.params.b)
        ones = np.ones(clean.shape + (1,))
        sigmas = _batch_sigmas(t, tokens.shape[0], self.kernel_cfg)
        return _network(self.params, embeddings, np.zeros_like(ones), ones, noise_features(sigmas)).probs


def denoiser_forward(params: DenoiserParams, state: HybridState, cfg: KernelConfig) -> PosteriorGrid:
    return TinyDenoiser(params, cfg).posterior(state)


@dataclass(eq=False)
class TrainingBatch:
    """Clean sequences and their forward-corrupted latents"""
    tokens: np.ndarray
    lattice: np.ndarray
    mask: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        self.lattice = np.asarray(self.lattice, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.t = np.asarray(self.t, dtype=float)
        B, L = self.tokens.shape
        if self.lattice.shape[:2] != (B, L) or self.mask.shape != (B, L) or self.t.shape != (B,):
            raise ShapeError("training batch arrays disagree on (B, L)")

    @classmethod
    def from_states(cls, pairs: Iterable[Tuple[np.ndarray, HybridState]]) -> "TrainingBatch":
        pairs = list(pairs)
        if not pairs:
            raise DomainError("batch must be nonempty")
        return cls(
            tokens=np.stack([np.asarray(x0) for x0, _ in pairs]),
            lattice=np.stack([s.lattice for _, s in pairs]),
            mask=np.stack([s.mask for _, s in pairs]),
            t=np.array([s.t for _, s in pairs]),
        )

    def __len__(self) -> int:
        return self.tokens.shape[0]


def _loss_weights(t: np.ndarray) -> np.ndarray:
    # 1/(1 − α(t)); rows at t = 0 have no noisy positions
    safe = np.where(t > 0.0, t, 1.0)
    return np.where(t > 0.0, 1.0 / safe, 0.0)


def posterior_loss(probs: np.ndarray, batch: TrainingBatch) -> float:
    """Weighted cross entropy of given posteriors against the batch's clean tokens."""
    truth = np.take_along_axis(probs, batch.tokens[..., None], axis=2)[..., 0]
    nll = -np.log(np.maximum(truth, LOG_FLOOR))
    per_row = np.sum(np.where(batch.mask, 0.0, nll), axis=1)
    return float(np.mean(_loss_weights(batch.t) * per_row))


def _forward_batch(params: DenoiserParams, batch: TrainingBatch, cfg: KernelConfig) -> _ForwardCache:
    sigmas = sigma_schedule(batch.t, cfg)
    return _forward_embeddings(params, batch.lattice @ params.W, batch.mask, sigmas)


def loss(params: DenoiserParams, batch: TrainingBatch, cfg: KernelConfig) -> float:
    return posterior_loss(_forward_batch(params, batch, cfg).probs, batch)


def loss_gradient(params: DenoiserParams, batch: TrainingBatch, cfg: KernelConfig) -> DenoiserParams:
    """Exact gradient of ``loss`` with respect to every parameter tensor."""
    cache = _forward_batch(params, batch, cfg)
    B = len(batch)
    lam = params.lam * cache.noisy

    row_weight = (_loss_weights(batch.t) / B)[:, None, None]
    d_logits = row_weight * cache.noisy * (cache.probs - one_hot(batch.tokens, params.W.shape[0]))

    d_W2 = np.einsum("bih,biv->hv", cache.z, d_logits)
    d_b2 = d_logits.sum(axis=(0, 1))
    d_P = np.einsum("bjh,biv->ijhv", cache.h, d_logits)
    d_z = d_logits @ params.W2.T

    d_q = d_z.sum(axis=0)
    d_h = d_z + np.einsum("ijhv,biv->bjh", params.P, d_logits)
    d_a = d_h * (1.0 - cache.h * cache.h)
    d_S = np.einsum("bf,bh->fh", cache.features[:, 0, :], d_a.sum(axis=1))

    d_W1 = np.einsum("bid,bih->dh", cache.u, d_a)
    d_b1 = d_a.sum(axis=(0, 1))
    d_mixed = (d_a @ params.W1.T) * cache.scale

    d_b = np.sum(lam * d_mixed, axis=(0, 1))
    d_W = np.einsum("biv,bid->vd", batch.lattice, (1.0 - lam) * d_mixed)

    return DenoiserParams(W=d_W, b=d_b, W1=d_W1, b1=d_b1, S=d_S, P=d_P, q=d_q, W2=d_W2, b2=d_b2, lam=params.lam)


# --- built-in toy distributions -------------------------------------------------


def reference_distribution() -> ToyDistribution:
    """Five sequences over three tokens, length two."""
    return ToyDistribution.from_pairs(3, [
        ((0, 0), 0.3), ((0, 1), 0.2), ((1, 2), 0.25), ((2, 0), 0.15), ((2, 2), 0.1),
    ])


def single_sequence(vocab: int = 4, tokens: Tuple[int, ...] = (0, 1, 2, 3)) -> ToyDistribution:
    return ToyDistribution.from_pairs(vocab, [(tokens, 1.0)])


def structured_distribution() -> ToyDistribution:
    """Eight shifted runs over eight tokens, length four, unequal weights."""
    pairs = [(tuple((k + i) % 8 for i in range(4)), (k + 1) / 36.0) for k in range(8)]
    return ToyDistribution.from_pairs(8, pairs)


def corner_distribution(vocab: int, seq_len: int = 2, n_support: int = 4) -> ToyDistribution:
    """Uniform over constant sequences (k, ..., k) for the first ``n_support`` tokens."""
    if n_support > vocab:
        raise DomainError(f"support of {n_support} constant sequences needs vocab >= {n_support}")
    return ToyDistribution.from_pairs(vocab, [((k,) * seq_len, 1.0 / n_support) for k in range(n_support)])


def repeat_distribution(vocab: int = 4, seq_len: int = 4) -> ToyDistribution:
    """Uniform over constant sequences: every position determines every other."""
    return corner_distribution(vocab, seq_len, vocab)


def two_class_distribution() -> ToyDistribution:
    """Uniform over eight pairs; the first token in {0, 1} marks the target class."""
    pairs = [((0, 1), 0.125), ((1, 0), 0.125), ((0, 0), 0.125), ((1, 1), 0.125),
             ((2, 3), 0.125), ((3, 2), 0.125), ((2, 2), 0.125), ((3, 3), 0.125)]
    return ToyDistribution.from_pairs(4, pairs)


BUILTIN_DISTRIBUTIONS: Dict[str, Callable[[], ToyDistribution]] = {
    "reference": reference_distribution,
    "single": single_sequence,
    "structured": structured_distribution,
    "corner4": lambda: corner_distribution(4),
    "corner512": lambda: corner_distribution(512),
    "repeat": repeat_distribution,
    "two_class": two_class_distribution,
}


def builtin_distribution(name: str) -> ToyDistribution:
    try:
        return BUILTIN_DISTRIBUTIONS[name]()
    except KeyError:
        raise DomainError(f"unknown built-in distribution {name!r}; choose from {sorted(BUILTIN_DISTRIBUTIONS)}")
