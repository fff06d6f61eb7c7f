"""Diversity/coherence metrics, temperature sweeps and frontier dominance."""
import math
from dataclasses import replace

import numpy as np
import pytest

from src.core.errors import DegenerateError, DomainError
from src.core.eval_frontier import (
    Dominance,
    Frontier,
    FrontierPoint,
    dominates,
    frontier_point,
    mean_sample_entropy,
    oracle_coherence,
    rank_at_temperature,
    sweep,
    tv_distance,
    unigram_entropy,
)
from src.core.models import SampleSet, SamplerConfig, ToyDistribution
from src.services.samplers import generate
from src.utils.rng import derive_seed


def _frontier(*rows):
    return Frontier([FrontierPoint(t, d, c) for t, d, c in rows])


# --- metrics -----------------------------------------------------------------------

def test_unigram_entropy():
    assert unigram_entropy(SampleSet(np.zeros((5, 3)))) == pytest.approx(0.0)
    assert unigram_entropy(SampleSet(np.arange(8).reshape(4, 2))) == pytest.approx(math.log(8))
    expected = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    assert unigram_entropy(SampleSet(np.array([[0, 0], [0, 1]]))) == pytest.approx(expected)


def test_mean_sample_entropy():
    assert mean_sample_entropy(SampleSet(np.array([[0, 0], [0, 1]]))) == pytest.approx(math.log(2) / 2)


def test_oracle_coherence(reference_dist):
    assert oracle_coherence(SampleSet(np.array([[0, 0]] * 4)), reference_dist) == pytest.approx(-math.log(0.3))
    assert oracle_coherence(SampleSet(np.array([[1, 1]])), reference_dist) == pytest.approx(27.631, abs=1e-3)
    mixed = SampleSet(np.array([[0, 0], [1, 1]]))
    assert oracle_coherence(mixed, reference_dist) == pytest.approx(0.5 * (-math.log(0.3) - math.log(1e-12)))


def test_coherence_of_exact_samples_is_the_entropy(reference_dist):
    tokens = reference_dist.sample(20000, np.random.default_rng(0))
    nll = np.array([-math.log(reference_dist.prob(seq)) for seq in tokens])
    se = nll.std(ddof=1) / math.sqrt(nll.size)
    assert abs(oracle_coherence(SampleSet(tokens), reference_dist) - reference_dist.entropy()) <= 4 * se


def test_tv_distance(reference_dist):
    # counts proportional to the support probabilities
    exact = np.array([[0, 0]] * 6 + [[0, 1]] * 4 + [[1, 2]] * 5 + [[2, 0]] * 3 + [[2, 2]] * 2)
    assert tv_distance(SampleSet(exact), reference_dist) == pytest.approx(0.0, abs=1e-15)
    assert tv_distance(SampleSet(np.array([[1, 1]] * 3)), reference_dist) == pytest.approx(1.0)
    coin = ToyDistribution.from_pairs(2, [((0,), 0.5), ((1,), 0.5)])
    assert tv_distance(SampleSet(np.array([[0]] * 6 + [[1]] * 4)), coin) == pytest.approx(0.1)


def test_frontier_point(reference_dist):
    samples = SampleSet(np.array([[0, 0], [1, 2]]))
    point = frontier_point(samples, reference_dist, 0.5)
    assert point.temperature == 0.5
    assert point.diversity == pytest.approx(unigram_entropy(samples))
    assert point.coherence == pytest.approx(oracle_coherence(samples, reference_dist))
    assert point.tv == pytest.approx(tv_distance(samples, reference_dist))


# --- sweeps ------------------------------------------------------------------------

def test_sweep_point_matches_direct_metrics(reference_dist, reference_oracle, reference_cfg):
    base = SamplerConfig(kernel_cfg=reference_cfg, nfe=4)

    def sampler(cfg, n):
        return generate(reference_oracle, cfg, n)

    frontier = sweep(sampler, base, [0.7], 300, reference_dist, seed=9)
    cfg = replace(base, temperature=0.7, seed=derive_seed(9, 0))
    direct = frontier_point(SampleSet(sampler(cfg, 300)), reference_dist, 0.7)
    assert frontier.points == [direct]


def test_sweep_is_deterministic_and_thread_independent(reference_dist, reference_oracle, reference_cfg):
    base = SamplerConfig(kernel_cfg=reference_cfg, nfe=4)

    def sampler(cfg, n):
        return generate(reference_oracle, cfg, n)

    first = sweep(sampler, base, [0.5, 1.0, 2.0], 200, reference_dist, seed=1)
    assert first.points == sweep(sampler, base, [0.5, 1.0, 2.0], 200, reference_dist, seed=1, threads=3).points


def test_sweep_validates_temperatures(reference_dist, reference_oracle, reference_cfg):
    base = SamplerConfig(kernel_cfg=reference_cfg)
    with pytest.raises(DomainError):
        sweep(lambda cfg, n: None, base, [1.0, 0.5], 10, reference_dist, seed=0)
    with pytest.raises(DomainError):
        sweep(lambda cfg, n: None, base, [], 10, reference_dist, seed=0)


def test_diversity_grows_with_temperature(reference_dist, reference_oracle, reference_cfg):
    base = SamplerConfig(kernel_cfg=reference_cfg, nfe=8)
    frontier = sweep(lambda cfg, n: generate(reference_oracle, cfg, n), base, [0.25, 0.5, 1.0], 2000,
                     reference_dist, seed=4)
    diversity = [p.diversity for p in frontier.points]
    assert all(b >= a - 0.02 for a, b in zip(diversity, diversity[1:]))
    assert diversity[-1] > diversity[0]


# --- frontiers and dominance -------------------------------------------------------

def test_frontier_requires_increasing_temperatures():
    with pytest.raises(DomainError):
        _frontier((1.0, 1.0, 1.0), (0.5, 2.0, 2.0))
    frontier = _frontier((0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    assert frontier.at(1.0).coherence == 3.0
    with pytest.raises(DomainError):
        frontier.at(0.7)


def test_frontier_frame_keeps_points():
    frontier = _frontier((0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    restored = Frontier.from_frame(frontier.to_frame())
    assert restored.points == frontier.points


def test_identical_frontiers_are_incomparable():
    a = _frontier((0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    assert dominates(a, a) is Dominance.INCOMPARABLE


def test_uniformly_better_frontier_dominates():
    a = _frontier((0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    b = _frontier((0.5, 1.0, 3.0), (1.0, 2.0, 4.0))
    assert dominates(a, b) is Dominance.A
    assert dominates(b, a) is Dominance.B


def test_crossing_frontiers_are_incomparable():
    a = _frontier((0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    b = _frontier((0.5, 1.0, 1.5), (1.0, 2.0, 3.5))
    assert dominates(a, b) is Dominance.INCOMPARABLE


def test_disjoint_frontiers_are_incomparable():
    a = _frontier((0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    b = _frontier((0.5, 3.0, 1.0), (1.0, 4.0, 1.5))
    assert dominates(a, b) is Dominance.INCOMPARABLE


def test_dominance_errors():
    flat = _frontier((0.5, 1.0, 2.0), (1.0, 1.0, 3.0))
    ok = _frontier((0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    with pytest.raises(DegenerateError):
        dominates(flat, ok)
    with pytest.raises(DomainError):
        dominates(_frontier((1.0, 1.0, 1.0)), ok)


def test_per_temperature_ranking_can_disagree_with_the_frontier():
    # a is more coherent at every temperature only because it is less diverse there
    a = _frontier((0.5, 0.5, 1.0), (1.0, 1.0, 2.0))
    b = _frontier((0.5, 1.0, 1.2), (1.0, 2.0, 2.2))
    assert rank_at_temperature(a, b, 0.5) is Dominance.A
    assert rank_at_temperature(a, b, 1.0) is Dominance.A
    assert dominates(a, b) is Dominance.B
