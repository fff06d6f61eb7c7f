"""
Frontier evaluation
Diversity (unigram entropy) against coherence (oracle negative
log-likelihood) across sampling temperatures, and dominance between two
such frontiers.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..utils.parallel import ordered_map
from ..utils.rng import derive_seed
from .errors import DegenerateError, DomainError
from .models import SampleSet, SamplerConfig, ToyDistribution

logger = logging.getLogger(__name__)

# probability assigned to sequences outside the support
COHERENCE_FLOOR = 1e-12
FRONTIER_COLUMNS = ["temperature", "diversity", "coherence", "tv"]


class Dominance(Enum):
    """Outcome of a frontier comparison"""
    A = "a"
    B = "b"
    INCOMPARABLE = "incomparable"


@dataclass
class FrontierPoint:
    """One operating point; coherence is an NLL in nats, lower is better"""
    temperature: float
    diversity: float
    coherence: float
    tv: Optional[float] = None

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.temperature, self.diversity, self.coherence)):
            raise DomainError("frontier point values must be finite")


@dataclass
class Frontier:
    """Operating points in strictly increasing temperature order"""
    points: List[FrontierPoint]

    def __post_init__(self):
        temps = [p.temperature for p in self.points]
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise DomainError(f"frontier temperatures must strictly increase, got {temps}")

    def __len__(self) -> int:
        return len(self.points)

    def at(self, temperature: float) -> FrontierPoint:
        for point in self.points:
            if point.temperature == temperature:
                return point
        raise DomainError(f"no frontier point at temperature {temperature}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[p.temperature, p.diversity, p.coherence, np.nan if p.tv is None else p.tv] for p in self.points],
            columns=FRONTIER_COLUMNS,
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "Frontier":
        missing = [c for c in FRONTIER_COLUMNS[:3] if c not in frame.columns]
        if missing:
            raise DomainError(f"frontier table is missing columns {missing}")
        points = []
        for _, row in frame.iterrows():
            tv = row.get("tv", np.nan)
            points.append(FrontierPoint(float(row["temperature"]), float(row["diversity"]),
                                        float(row["coherence"]), None if pd.isna(tv) else float(tv)))
        return cls(points)


def _tokens(samples) -> np.ndarray:
    return samples.tokens if isinstance(samples, SampleSet) else SampleSet(samples).tokens


def unigram_entropy(samples: SampleSet) -> float:
    """Entropy (nats) of token frequencies pooled over all samples and positions."""
    counts = np.unique(_tokens(samples), return_counts=True)[1]
    freq = counts / counts.sum()
    return float(-np.sum(freq * np.log(freq)))


def mean_sample_entropy(samples: SampleSet) -> float:
    """Entropy of each sample's own token histogram, averaged over samples."""
    entropies = []
    for row in _tokens(samples):
        counts = np.unique(row, return_counts=True)[1]
        freq = counts / counts.sum()
        entropies.append(-np.sum(freq * np.log(freq)))
    return float(np.mean(entropies))


def _frequencies(tokens: np.ndarray):
    rows, counts = np.unique(tokens, axis=0, return_counts=True)
    return {tuple(int(x) for x in r): c / tokens.shape[0] for r, c in zip(rows, counts)}


def oracle_coherence(samples: SampleSet, dist: ToyDistribution) -> float:
    """Mean −log P(sequence) under ``dist``, floored for out-of-support sequences."""
    freq = _frequencies(_tokens(samples))
    return float(sum(f * -math.log(max(dist.prob(seq), COHERENCE_FLOOR)) for seq, f in freq.items()))


def tv_distance(samples: SampleSet, dist: ToyDistribution) -> float:
    freq = _frequencies(_tokens(samples))
    support = {tuple(int(x) for x in s): float(p) for s, p in zip(dist.sequences, dist.probs)}
    keys = set(freq) | set(support)
    return 0.5 * math.fsum(abs(freq.get(k, 0.0) - support.get(k, 0.0)) for k in keys)


def frontier_point(samples: SampleSet, dist: ToyDistribution, temperature: float) -> FrontierPoint:
    return FrontierPoint(temperature=temperature, diversity=unigram_entropy(samples),
                         coherence=oracle_coherence(samples, dist), tv=tv_distance(samples, dist))


SamplerFn = Callable[[SamplerConfig, int], np.ndarray]


def sweep(sampler: SamplerFn, base_cfg: SamplerConfig, temperatures: Sequence[float], num_samples: int,
          dist: ToyDistribution, seed: int, threads: int = 1) -> Frontier:
    """
    One frontier point per temperature.

    ``sampler(cfg, num_samples)`` must return an (n, L) token array. Point k
    runs with ``base_cfg`` at temperature k and a seed derived from (seed, k).
    """
    temperatures = [float(t) for t in temperatures]
    if not temperatures:
        raise DomainError("sweep needs at least one temperature")
    if any(t <= 0.0 for t in temperatures) or any(b <= a for a, b in zip(temperatures, temperatures[1:])):
        raise DomainError(f"temperatures must be positive and strictly increasing, got {temperatures}")

    def point(k: int) -> FrontierPoint:
        cfg = replace(base_cfg, temperature=temperatures[k], seed=derive_seed(seed, k))
        samples = SampleSet(sampler(cfg, num_samples), cfg)
        result = frontier_point(samples, dist, temperatures[k])
        logger.info(f"Sweep point tau={result.temperature}: diversity {result.diversity:.4f}, "
                    f"coherence {result.coherence:.4f}, tv {result.tv:.4f}")
        return result

    return Frontier(ordered_map(point, range(len(temperatures)), threads))


def _curve(frontier: Frontier):
    if len(frontier) < 2:
        raise DomainError("dominance needs frontiers with at least two points")
    diversity = np.array([p.diversity for p in frontier.points])
    coherence = np.array([p.coherence for p in frontier.points])
    if diversity.max() - diversity.min() <= 0.0:
        raise DegenerateError("frontier has zero diversity range")
    order = np.argsort(diversity, kind="stable")
    return diversity[order], coherence[order]


def dominates(a: Frontier, b: Frontier, tol: float = 1e-12) -> Dominance:
    """
    Compare two frontiers on the overlap of their diversity ranges.

    A frontier wins when its coherence is no worse everywhere on the overlap
    and strictly better somewhere. Crossing curves, identical curves and
    disjoint ranges are incomparable.
    """
    div_a, coh_a = _curve(a)
    div_b, coh_b = _curve(b)
    lower, upper = max(div_a[0], div_b[0]), min(div_a[-1], div_b[-1])
    if lower > upper:
        return Dominance.INCOMPARABLE

    grid = np.unique(np.concatenate([[lower, upper], div_a, div_b]))
    grid = grid[(grid >= lower) & (grid <= upper)]
    gap = np.interp(grid, div_a, coh_a) - np.interp(grid, div_b, coh_b)

    if np.all(gap <= tol) and np.any(gap < -tol):
        return Dominance.A
    if np.all(gap >= -tol) and np.any(gap > tol):
        return Dominance.B
    return Dominance.INCOMPARABLE


def rank_at_temperature(a: Frontier, b: Frontier, temperature: float) -> Dominance:
    """Which frontier has the lower coherence at one shared temperature."""
    coh_a, coh_b = a.at(temperature).coherence, b.at(temperature).coherence
    if coh_a < coh_b:
        return Dominance.A
    if coh_b < coh_a:
        return Dominance.B
    return Dominance.INCOMPARABLE
