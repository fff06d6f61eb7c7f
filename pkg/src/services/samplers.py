"""
Samplers
Reverse-process generation for the hybrid kernel and its baselines:

* hybrid_exact   joint lattice/mask inference on the full L x v lattice
* hybrid_approx  the same loop carried in embedding space, with the
                 posterior mean replaced by the embedding of one posterior draw
* masked         ancestral masked-diffusion sampling
* gaussian_ode   probability-flow ODE on the lattice, no masking

All samplers run a batch of sequences at once. The batch is cut into fixed
chunks, each drawing from its own substream of the root seed, so outputs do
not depend on the number of worker threads.
"""

import logging
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from ..core.errors import DegenerateError, DomainError, ShapeError
from ..core.hybrid_kernel import (
    sampler_time_grid,
    schedule_time,
    sigma_of_t,
    unmask_probability,
)
from ..core.models import (
    HybridState,
    KernelConfig,
    PosteriorGrid,
    SamplerConfig,
    SamplerMode,
    Trajectory,
    check_time,
    one_hot,
)
from ..utils.parallel import ordered_map
from ..utils.rng import chunk_bounds, make_rng
from .classifiers import Classifier
from .denoisers import Denoiser, batch_score

logger = logging.getLogger(__name__)

SAMPLE_CHUNK = 1024

SampleOutput = Union[np.ndarray, Tuple[np.ndarray, Trajectory]]


def temper_probs(probs: np.ndarray, tau: float) -> np.ndarray:
    """Rows raised to 1/τ and renormalized, computed in log space."""
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0.0:
        raise DomainError(f"temperature must be positive, got {tau}")
    probs = np.asarray(probs, dtype=float)
    totals = probs.sum(axis=-1, keepdims=True)
    if np.any(totals <= 0.0):
        raise DegenerateError("cannot temper an all-zero posterior row")
    if tau == 1.0:
        return probs / totals
    with np.errstate(divide="ignore"):
        scaled = np.log(probs) / tau
    scaled -= scaled.max(axis=-1, keepdims=True)
    out = np.exp(scaled)
    return out / out.sum(axis=-1, keepdims=True)


def temper(posterior: PosteriorGrid, tau: float) -> PosteriorGrid:
    return PosteriorGrid(temper_probs(posterior.probs, tau))


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One index per row of a (..., v) array of categorical rows."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])[..., None] * cdf[..., -1:]
    return np.minimum(np.sum(cdf <= u, axis=-1), probs.shape[-1] - 1)


def euler_update(lattice: np.ndarray, mask: np.ndarray, score: np.ndarray, sigma_s: float,
                 sigma_t: float, literal_sign: bool = False) -> np.ndarray:
    """
    One probability-flow Euler step from σ(t) down to σ(s) on noisy rows.

    The default direction contracts toward the posterior mean;
    ``literal_sign`` flips it.
    """
    step = 0.5 * (sigma_t * sigma_t - sigma_s * sigma_s)
    if literal_sign:
        step = -step
    return np.where(np.asarray(mask, dtype=bool)[..., None], lattice, lattice + step * score)


def _step_sigmas(s: float, t: float, cfg: KernelConfig) -> Tuple[float, float]:
    s, t = check_time(s, "s"), check_time(t)
    if s >= t:
        raise DomainError(f"reverse step needs s < t, got s={s}, t={t}")
    return sigma_of_t(s, cfg), sigma_of_t(t, cfg)


def ode_step(state: HybridState, s: float, t: float, score: np.ndarray, cfg: KernelConfig,
             literal_sign: bool = False) -> np.ndarray:
    sigma_s, sigma_t = _step_sigmas(s, t, cfg)
    score = np.asarray(score, dtype=float)
    if score.shape != state.lattice.shape:
        raise ShapeError(f"score {score.shape} does not match lattice {state.lattice.shape}")
    return euler_update(state.lattice, state.mask, score, sigma_s, sigma_t, literal_sign)


def guidance_gradient(classifier: Classifier, lattice: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Classifier gradient at onehot(argmax(lattice)), zeroed on clean rows."""
    decoded = one_hot(np.argmax(lattice, axis=-1), lattice.shape[-1])
    return np.where(np.asarray(mask, dtype=bool)[..., None], 0.0, classifier.gradient(decoded))


def guided_ode_step(state: HybridState, s: float, t: float, score: np.ndarray, classifier: Classifier,
                    w: float, cfg: KernelConfig, literal_sign: bool = False) -> np.ndarray:
    guided = np.asarray(score, dtype=float)
    if w != 0.0:
        guided = guided + w * guidance_gradient(classifier, state.lattice[None], state.mask[None])[0]
    return ode_step(state, s, t, guided, cfg, literal_sign)


def _combine(lattice: np.ndarray, mask: np.ndarray, tokens: np.ndarray, moved: np.ndarray,
             m_new: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    unmask = m_new & ~mask
    fresh = one_hot(tokens, lattice.shape[-1])
    out = np.where(mask[..., None], lattice, np.where(unmask[..., None], fresh, moved))
    return out, mask | unmask


def combine_update(prev: HybridState, new_clean_rows: np.ndarray, new_noisy_rows: np.ndarray,
                   m_new: np.ndarray, s: Optional[float] = None) -> HybridState:
    """
    Merge one reverse step.

    ``new_clean_rows`` holds the sampled token per position; rows already clean
    are carried over, newly unmasked rows become one-hots of their token and the
    rest take ``new_noisy_rows``.
    """
    tokens = np.asarray(new_clean_rows, dtype=np.int64)
    moved = np.asarray(new_noisy_rows, dtype=float)
    m_new = np.asarray(m_new, dtype=bool)
    if tokens.shape != prev.mask.shape or moved.shape != prev.lattice.shape or m_new.shape != prev.mask.shape:
        raise ShapeError("combine_update inputs do not match the previous state")
    lattice, mask = _combine(prev.lattice[None], prev.mask[None], tokens[None], moved[None], m_new[None])
    return HybridState(lattice=lattice[0], mask=mask[0], t=prev.t if s is None else s)


def _record(trajectory: Optional[Trajectory], t: float, lattice: np.ndarray, mask: np.ndarray) -> None:
    if trajectory is None:
        return
    if trajectory.snapshots and not t < trajectory.times[-1]:
        return
    trajectory.append(t, HybridState(lattice=lattice[0].copy(), mask=mask[0].copy(), t=t))


def _schedule(cfg: SamplerConfig):
    """(t, s, σ(t), σ(s), p_unmask) for each reverse step."""
    times = sampler_time_grid(cfg.nfe)
    for t, s in zip(times[:-1], times[1:]):
        t, s = float(t), float(s)
        yield (t, s, sigma_of_t(schedule_time(t), cfg.kernel_cfg), sigma_of_t(schedule_time(s), cfg.kernel_cfg),
               unmask_probability(s, t))


def _check_guidance(cfg: SamplerConfig, classifier: Optional[Classifier]) -> Optional[Classifier]:
    if cfg.guidance_weight == 0.0:
        return None
    if classifier is None:
        raise DomainError("a nonzero guidance weight needs a classifier")
    return classifier


def _exact_chunk(denoiser: Denoiser, cfg: SamplerConfig, classifier: Optional[Classifier], n: int,
                 rng: np.random.Generator, trajectory: Optional[Trajectory]) -> np.ndarray:
    kc = cfg.kernel_cfg
    lattice = sigma_of_t(1.0, kc) * rng.standard_normal((n, kc.seq_len, kc.vocab))
    mask = np.zeros((n, kc.seq_len), dtype=bool)
    _record(trajectory, 1.0, lattice, mask)

    for t, s, sigma_t, sigma_s, p_unmask in _schedule(cfg):
        posterior = denoiser.posterior_batch(lattice, mask, schedule_time(t))
        unmask = (rng.random(mask.shape) < p_unmask) & ~mask
        tokens = sample_categorical(temper_probs(posterior, cfg.temperature), rng)
        score = batch_score(lattice, mask, posterior, sigma_t)
        if classifier is not None:
            score = score + cfg.guidance_weight * guidance_gradient(classifier, lattice, mask)
        moved = euler_update(lattice, mask, score, sigma_s, sigma_t, cfg.literal_ode_sign)
        lattice, mask = _combine(lattice, mask, tokens, moved, unmask)
        _record(trajectory, schedule_time(s), lattice, mask)
        logger.debug(f"hybrid_exact t={t:.4f}: {mask.mean():.3f} of positions clean")

    return np.argmax(lattice, axis=2)


def _approx_chunk(denoiser: Denoiser, cfg: SamplerConfig, classifier: Optional[Classifier], n: int,
                  rng: np.random.Generator, trajectory: Optional[Trajectory]) -> np.ndarray:
    kc = cfg.kernel_cfg
    table = denoiser.embedding_table
    lattice = sigma_of_t(1.0, kc) * rng.standard_normal((n, kc.seq_len, kc.vocab))
    noisy_y = lattice @ table
    tokens = np.argmax(lattice, axis=2)
    mask = np.zeros((n, kc.seq_len), dtype=bool)
    _record(trajectory, 1.0, np.zeros_like(lattice[:1]), mask)

    for t, s, sigma_t, sigma_s, p_unmask in _schedule(cfg):
        y = np.where(mask[..., None], table[tokens], noisy_y)
        posterior = denoiser.posterior_from_embeddings(y, mask, schedule_time(t))
        unmask = (rng.random(mask.shape) < p_unmask) & ~mask
        draws = sample_categorical(temper_probs(posterior, cfg.temperature), rng)
        # single posterior draw stands in for E[Y0 | Yt]
        score = -(y - table[draws]) / (sigma_t * sigma_t)
        if classifier is not None:
            grad = classifier.gradient(one_hot(draws, kc.vocab))
            score = score + cfg.guidance_weight * (grad @ table)
        noisy_y = euler_update(y, mask, score, sigma_s, sigma_t, cfg.literal_ode_sign)
        tokens = np.where(mask | ~unmask, tokens, draws)
        mask = mask | unmask
        if trajectory is not None:
            _record(trajectory, schedule_time(s), np.where(mask[:1, :, None], one_hot(tokens[:1], kc.vocab), 0.0),
                    mask[:1])

    return tokens


def _masked_chunk(denoiser: Denoiser, cfg: SamplerConfig, classifier: Optional[Classifier], n: int,
                  rng: np.random.Generator, trajectory: Optional[Trajectory]) -> np.ndarray:
    kc = cfg.kernel_cfg
    if classifier is not None:
        raise DomainError("masked sampling has no continuous state to guide")
    tokens = np.full((n, kc.seq_len), kc.vocab, dtype=np.int64)
    _record(trajectory, 1.0, np.zeros((1, kc.seq_len, kc.vocab)), tokens[:1] != kc.vocab)

    for t, s, _, _, p_unmask in _schedule(cfg):
        masked = tokens == kc.vocab
        posterior = denoiser.masked_posterior_batch(tokens, schedule_time(t))
        unmask = (rng.random(masked.shape) < p_unmask) & masked
        draws = sample_categorical(temper_probs(posterior, cfg.temperature), rng)
        tokens = np.where(unmask, draws, tokens)
        if trajectory is not None:
            clean = tokens[:1] != kc.vocab
            _record(trajectory, schedule_time(s),
                    np.where(clean[..., None], one_hot(np.where(clean, tokens[:1], 0), kc.vocab), 0.0), clean)

    return tokens


def _gaussian_chunk(denoiser: Denoiser, cfg: SamplerConfig, classifier: Optional[Classifier], n: int,
                    rng: np.random.Generator, trajectory: Optional[Trajectory]) -> np.ndarray:
    kc = cfg.kernel_cfg
    lattice = sigma_of_t(1.0, kc) * rng.standard_normal((n, kc.seq_len, kc.vocab))
    mask = np.zeros((n, kc.seq_len), dtype=bool)
    _record(trajectory, 1.0, lattice, mask)

    for t, s, sigma_t, sigma_s, _ in _schedule(cfg):
        posterior = denoiser.posterior_batch(lattice, mask, schedule_time(t))
        score = batch_score(lattice, mask, posterior, sigma_t)
        if classifier is not None:
            score = score + cfg.guidance_weight * guidance_gradient(classifier, lattice, mask)
        lattice = euler_update(lattice, mask, score, sigma_s, sigma_t, cfg.literal_ode_sign)
        _record(trajectory, schedule_time(s), lattice, mask)

    # the lattice still carries σ(ε) noise; read tokens off the final posterior
    posterior = denoiser.posterior_batch(lattice, mask, schedule_time(0.0))
    return np.argmax(posterior, axis=2)


_CHUNK_RUNNERS: Dict[SamplerMode, Callable] = {
    SamplerMode.HYBRID_EXACT: _exact_chunk,
    SamplerMode.HYBRID_APPROX: _approx_chunk,
    SamplerMode.MASKED: _masked_chunk,
    SamplerMode.GAUSSIAN_ODE: _gaussian_chunk,
}


def _run(mode: SamplerMode, denoiser: Denoiser, cfg: SamplerConfig, num_samples: int,
         classifier: Optional[Classifier], record: bool, threads: int) -> SampleOutput:
    if num_samples < 1:
        raise DomainError(f"num_samples must be positive, got {num_samples}")
    kc = cfg.kernel_cfg
    if denoiser.kernel_cfg.vocab != kc.vocab or denoiser.kernel_cfg.seq_len != kc.seq_len:
        raise ShapeError("denoiser and sampler disagree on (vocab, seq_len)")
    classifier = _check_guidance(cfg, classifier)
    runner = _CHUNK_RUNNERS[mode]
    trajectory = Trajectory() if record else None

    def chunk(args: Tuple[int, int, int]) -> np.ndarray:
        index, start, stop = args
        return runner(denoiser, cfg, classifier, stop - start, make_rng(cfg.seed, index),
                      trajectory if index == 0 else None)

    work = [(k, a, b) for k, (a, b) in enumerate(chunk_bounds(num_samples, SAMPLE_CHUNK))]
    logger.debug(f"Sampling {num_samples} sequences in {mode.value} mode, nfe={cfg.nfe}, {len(work)} chunks")
    tokens = np.concatenate(ordered_map(chunk, work, threads), axis=0)
    return (tokens, trajectory) if record else tokens


def sample_hybrid_exact(denoiser: Denoiser, cfg: SamplerConfig, num_samples: int = 1,
                        classifier: Optional[Classifier] = None, record: bool = False,
                        threads: int = 1) -> SampleOutput:
    """
    Joint inference on the full lattice.

    Starts from N(0, σ(1)²I) with every position noisy. Each step unmasks
    positions with the reverse branch probability, draws their tokens from the
    tempered posterior and moves the remaining rows one ODE step. Returns an
    (num_samples, L) token array, plus the first sequence's trajectory when
    ``record`` is set.
    """
    return _run(SamplerMode.HYBRID_EXACT, denoiser, cfg, num_samples, classifier, record, threads)


def sample_hybrid_approx(denoiser: Denoiser, cfg: SamplerConfig, num_samples: int = 1,
                         classifier: Optional[Classifier] = None, record: bool = False,
                         threads: int = 1) -> SampleOutput:
    """
    Joint inference carried in embedding space.

    The lattice is only drawn for the prior; afterwards the noisy embeddings
    Y = lattice @ W are updated directly. Recorded snapshots hold zeros on
    noisy rows.
    """
    return _run(SamplerMode.HYBRID_APPROX, denoiser, cfg, num_samples, classifier, record, threads)


def sample_masked(denoiser: Denoiser, cfg: SamplerConfig, num_samples: int = 1,
                  record: bool = False, threads: int = 1) -> SampleOutput:
    return _run(SamplerMode.MASKED, denoiser, cfg, num_samples, None, record, threads)


def sample_gaussian_ode(denoiser: Denoiser, cfg: SamplerConfig, num_samples: int = 1,
                        classifier: Optional[Classifier] = None, record: bool = False,
                        threads: int = 1) -> SampleOutput:
    """Pure continuous baseline: ODE down to σ(ε), then argmax."""
    return _run(SamplerMode.GAUSSIAN_ODE, denoiser, cfg, num_samples, classifier, record, threads)


def generate(denoiser: Denoiser, cfg: SamplerConfig, num_samples: int = 1,
             classifier: Optional[Classifier] = None, threads: int = 1) -> np.ndarray:
    """Dispatch on ``cfg.mode``."""
    return _run(cfg.mode, denoiser, cfg, num_samples, classifier, False, threads)


def sequence_list(tokens: np.ndarray) -> List[List[int]]:
    return [[int(x) for x in row] for row in tokens]
