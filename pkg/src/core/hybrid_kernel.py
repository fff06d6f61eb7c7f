"""
Hybrid forward kernel
Bernoulli position masking combined with Gaussian lattice noise, its
schedules, the reverse branch probabilities and the masked-diffusion baseline
kernel.

Mask convention: True (1) marks a clean position, False (0) a corrupted one.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.rng import make_rng
from ..utils.special import std_normal_quantile
from .corruption_analytics import SQRT2, identity_corruption, sigma_for_rank
from .errors import DomainError, ShapeError
from .models import HybridState, KernelConfig, check_time, check_vocab, one_hot

logger = logging.getLogger(__name__)

# smallest time the continuous schedule is evaluated at by the samplers
TIME_EPS = 1e-3


def alpha(t: float) -> float:
    """Probability a position is still clean at time t."""
    return 1.0 - check_time(t)


def target_rank(t: float, cfg: KernelConfig) -> float:
    t = check_time(t)
    if t == 0.0:
        return cfg.rank_min
    if t == 1.0:
        return cfg.rank_max
    return (cfg.rank_max - cfg.rank_min) * t + cfg.rank_min


def sigma_of_t(t: float, cfg: KernelConfig) -> float:
    return sigma_for_rank(target_rank(t, cfg))


def sigma_schedule(ts: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Vectorized σ(t) for an array of times."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0.0) or np.any(ts > 1.0):
        raise DomainError("times must lie in [0, 1]")
    ranks = (cfg.rank_max - cfg.rank_min) * ts + cfg.rank_min
    return -1.0 / (np.asarray(std_normal_quantile(ranks)) * SQRT2)


def _check_tokens(x0: Sequence[int], vocab: int, seq_len: Optional[int] = None) -> np.ndarray:
    tokens = np.asarray(x0, dtype=np.int64)
    if tokens.ndim == 0:
        raise ShapeError("token sequence must be one-dimensional")
    if seq_len is not None and tokens.shape[-1] != seq_len:
        raise ShapeError(f"expected sequences of length {seq_len}, got {tokens.shape[-1]}")
    if np.any(tokens < 0) or np.any(tokens >= vocab):
        raise DomainError(f"tokens must lie in [0, {vocab})")
    return tokens


def forward_corrupt(x0: Sequence[int], t: float, cfg: KernelConfig, seed: int) -> HybridState:
    """Sample the hybrid latent of x0 at time t."""
    tokens = _check_tokens(x0, cfg.vocab, cfg.seq_len)
    if tokens.ndim != 1:
        raise ShapeError("forward_corrupt takes a single sequence; use forward_corrupt_batch")
    lattice, mask = forward_corrupt_batch(tokens[None, :], np.array([check_time(t)]), cfg, make_rng(seed))
    return HybridState(lattice=lattice[0], mask=mask[0], t=t)


def forward_corrupt_batch(x0: np.ndarray, ts: np.ndarray, cfg: KernelConfig,
                          rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched forward kernel.

    Returns a (B, L, v) lattice and a (B, L) clean mask. Mask bits are drawn
    before the noise so the noise stream does not depend on the mask.
    """
    tokens = _check_tokens(x0, cfg.vocab, cfg.seq_len)
    ts = np.asarray(ts, dtype=float)
    if tokens.ndim != 2 or ts.shape != (tokens.shape[0],):
        raise ShapeError(f"expected (B, L) tokens with B times, got {tokens.shape} and {ts.shape}")
    if np.any(ts < 0.0) or np.any(ts > 1.0):
        raise DomainError("times must lie in [0, 1]")

    sigmas = sigma_schedule(ts, cfg)
    keep = rng.random(tokens.shape) < (1.0 - ts)[:, None]
    clean = one_hot(tokens, cfg.vocab)
    noise = rng.standard_normal(clean.shape) * sigmas[:, None, None]
    lattice = np.where(keep[..., None], clean, clean + noise)
    return lattice, keep


def forward_mask_transition(m_s: Sequence[bool], s: float, t: float, seed: int) -> np.ndarray:
    """Carry the clean mask from time s forward to time t > s."""
    s, t = check_time(s, "s"), check_time(t)
    if s >= t:
        raise DomainError(f"forward transition needs s < t, got s={s}, t={t}")
    a_s, a_t = 1.0 - s, 1.0 - t
    if a_s == 0.0:
        raise DomainError("no clean positions remain at s = 1")
    mask = np.asarray(m_s, dtype=bool)
    stay = make_rng(seed).random(mask.shape) < a_t / a_s
    return mask & stay


def unmask_probability(s: float, t: float) -> float:
    """Probability that a corrupted position at time t is clean at s < t."""
    p_unmask, _ = reverse_branch_probabilities(s, t)
    return p_unmask


def reverse_branch_probabilities(s: float, t: float) -> Tuple[float, float]:
    s, t = check_time(s, "s"), check_time(t)
    if s >= t:
        raise DomainError(f"reverse transition needs s < t, got s={s}, t={t}")
    a_s, a_t = 1.0 - s, 1.0 - t
    p_unmask = (a_s - a_t) / (1.0 - a_t)
    return p_unmask, 1.0 - p_unmask


def masked_forward_corrupt(x0: Sequence[int], t: float, vocab: int, seed: int) -> np.ndarray:
    """Replace each token by the mask symbol ``vocab`` with probability t."""
    vocab = check_vocab(vocab)
    tokens = _check_tokens(x0, vocab)
    masked = make_rng(seed).random(tokens.shape) >= alpha(t)
    return np.where(masked, vocab, tokens)


def sampler_time_grid(nfe: int) -> np.ndarray:
    """Branch times 1 = t_0 > ... > t_nfe = 0 for an nfe-step reverse run."""
    if nfe < 1:
        raise DomainError(f"nfe must be positive, got {nfe}")
    return 1.0 - np.arange(nfe + 1) / nfe


def schedule_time(t: float) -> float:
    """Time at which the continuous schedule is read during sampling."""
    return max(float(t), TIME_EPS)


def rho_rank_curve(cfg: KernelConfig, vocab: Optional[int] = None, n_points: int = 11) -> List[Dict[str, float]]:
    """
    Corruption axes along the schedule.

    Each row pairs the hybrid kernel's identity corruption (1 − α) and rank
    with σ(t); with ``vocab`` also the identity corruption a pure Gaussian
    kernel would reach at the same σ.
    """
    if n_points < 2:
        raise DomainError("rho_rank_curve needs at least two points")
    rows = []
    for t in np.linspace(0.0, 1.0, n_points):
        sigma = sigma_of_t(t, cfg)
        row = {"t": float(t), "rho_hybrid": 1.0 - alpha(t), "rank": target_rank(t, cfg), "sigma": sigma}
        if vocab is not None:
            row["rho_gaussian"] = identity_corruption(sigma, vocab)
        rows.append(row)
    return rows


def corruption_demo_records(cfg: KernelConfig, times: Sequence[float], draws: int, seed: int,
                            vocab: Optional[int] = None) -> List[Dict[str, float]]:
    """
    Empirical keep fraction and rank of the forward kernel at each time.

    Sequences are uniform random tokens; time k uses substream k.
    """
    if draws < 1:
        raise DomainError(f"draws must be positive, got {draws}")
    records = []
    for k, t in enumerate(times):
        t = check_time(t)
        rng = make_rng(seed, k)
        x0 = rng.integers(0, cfg.vocab, size=(draws, cfg.seq_len))
        lattice, mask = forward_corrupt_batch(x0, np.full(draws, t), cfg, rng)
        noisy = ~mask
        if noisy.any():
            rows = lattice[noisy]
            correct = np.take_along_axis(rows, x0[noisy][:, None], axis=1)
            empirical_rank = float((np.sum(rows > correct) / (cfg.vocab - 1)) / rows.shape[0])
        else:
            empirical_rank = 0.0
        record = {
            "t": t,
            "alpha": alpha(t),
            "sigma": sigma_of_t(t, cfg),
            "empirical_keep_fraction": float(mask.mean()),
            "empirical_rank": empirical_rank,
        }
        if vocab is not None:
            record["rho_gaussian"] = identity_corruption(record["sigma"], vocab)
        logger.debug(f"corrupt-demo t={t}: keep {record['empirical_keep_fraction']:.4f}")
        records.append(record)
    return records
