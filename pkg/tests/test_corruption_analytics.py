"""Closed-form and Monte Carlo corruption rates."""
import math

import numpy as np
import pandas as pd
import pytest

from src.core.corruption_analytics import (
    VALIDATION_COLUMNS,
    corruption_point,
    embed_identity_corruption_mc,
    embed_rank_degradation,
    embed_win_rate,
    identity_corruption,
    identity_corruption_state,
    mc_corruption,
    rank_degradation,
    sigma_for_rank,
    std_normal_cdf,
    std_normal_quantile,
    validate_formulas_grid,
)
from src.core.errors import DegenerateError, DomainError
from src.core.models import EmbeddingTable, Metric


# --- standard normal helpers -------------------------------------------------------

def test_std_normal_cdf_known_values():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(-1.0) == pytest.approx(0.15865525393145707, abs=1e-12)
    assert std_normal_cdf(38.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_std_normal_cdf_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        std_normal_cdf(bad)


def test_std_normal_quantile_known_values():
    assert std_normal_quantile(0.5) == pytest.approx(0.0, abs=1e-15)
    assert std_normal_quantile(0.158655) == pytest.approx(-1.0, abs=1e-5)


def test_std_normal_quantile_inverts_cdf():
    for x in np.linspace(-5.0, 5.0, 41):
        assert std_normal_quantile(std_normal_cdf(x)) == pytest.approx(x, abs=1e-8)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_std_normal_quantile_domain(p):
    with pytest.raises(DomainError):
        std_normal_quantile(p)


# --- rank degradation --------------------------------------------------------------

def test_rank_degradation_limits():
    assert rank_degradation(1e-9) == pytest.approx(0.0, abs=1e-12)
    assert rank_degradation(1.0 / math.sqrt(2.0)) == pytest.approx(std_normal_cdf(-1.0), abs=1e-12)
    assert rank_degradation(1e9) == pytest.approx(0.5, abs=1e-6)


def test_rank_degradation_strictly_increasing():
    ranks = [rank_degradation(s) for s in np.geomspace(0.05, 50.0, 200)]
    assert all(b > a for a, b in zip(ranks, ranks[1:]))


@pytest.mark.parametrize("sigma", [0.0, -1.0, math.inf])
def test_rank_degradation_domain(sigma):
    with pytest.raises(DomainError):
        rank_degradation(sigma)


def test_sigma_for_rank_examples():
    assert sigma_for_rank(0.158655) == pytest.approx(0.70711, abs=1e-4)
    assert sigma_for_rank(0.3) == pytest.approx(1.3486, abs=1e-3)


@pytest.mark.parametrize("r", [0.0, 0.5, 0.7, -0.2])
def test_sigma_for_rank_domain(r):
    with pytest.raises(DomainError):
        sigma_for_rank(r)


def test_sigma_for_rank_inverts_rank_degradation():
    for sigma in np.geomspace(0.05, 50.0, 100):
        assert sigma_for_rank(rank_degradation(sigma)) == pytest.approx(sigma, rel=1e-9)


# --- identity corruption -----------------------------------------------------------

def test_two_token_corruption_equals_rank_degradation():
    for sigma in np.geomspace(0.05, 20.0, 20):
        assert identity_corruption(sigma, 2) == pytest.approx(rank_degradation(sigma), abs=1e-6)


def test_identity_corruption_large_noise_limit():
    assert identity_corruption(1e9, 50) == pytest.approx(49 / 50, abs=1e-4)


def test_identity_corruption_grows_with_vocab():
    values = [identity_corruption(1.0, v) for v in (5, 50, 500)]
    assert values[0] < values[1] < values[2]


def test_large_vocab_corrupts_where_rank_is_moderate():
    sigma = sigma_for_rank(0.25)
    assert identity_corruption(sigma, 50000) > 0.99
    assert identity_corruption(sigma, 4) < 0.5


def test_identity_corruption_domain():
    with pytest.raises(DomainError):
        identity_corruption(1.0, 1)
    with pytest.raises(DomainError):
        identity_corruption(0.0, 5)


def test_state_corruption_of_clean_row_matches_closed_form():
    row = np.zeros(6)
    row[2] = 1.0
    assert identity_corruption_state(row, 2, 0.8) == pytest.approx(identity_corruption(0.8, 6), abs=1e-6)


def test_state_corruption_with_huge_margin():
    row = np.zeros(5)
    row[0] = 1e6
    assert identity_corruption_state(row, 0, 1.0) < 1e-12


def test_state_corruption_domain():
    with pytest.raises(DomainError):
        identity_corruption_state([1.0, 0.0], 2, 1.0)
    with pytest.raises(DomainError):
        identity_corruption_state([1.0], 0, 1.0)


# --- Monte Carlo -------------------------------------------------------------------

def test_mc_corruption_without_noise():
    rho, rank = mc_corruption(1e-9, 10, 1000, seed=0)
    assert rho.mean == 0.0
    assert rank.mean == 0.0


def test_mc_corruption_agrees_with_closed_form():
    rho, rank = mc_corruption(1.0, 5, 5000, seed=3)
    assert rho.n_samples == 5000
    assert rho.agrees_with(identity_corruption(1.0, 5), n_se=4)
    assert rank.agrees_with(rank_degradation(1.0), n_se=4)


def test_mc_corruption_is_deterministic_and_thread_independent():
    # 5000 draws at v=500 span three chunks
    first, _ = mc_corruption(0.7, 500, 5000, seed=11, threads=1)
    again, _ = mc_corruption(0.7, 500, 5000, seed=11, threads=1)
    threaded, _ = mc_corruption(0.7, 500, 5000, seed=11, threads=3)
    assert first.mean == again.mean == threaded.mean
    assert first.std_err == threaded.std_err


def test_mc_corruption_needs_enough_samples():
    with pytest.raises(DomainError):
        mc_corruption(1.0, 5, 99, seed=0)


@pytest.mark.slow
def test_mc_corruption_large_vocab():
    rho, rank = mc_corruption(1.0, 500, 100000, seed=5)
    assert rho.agrees_with(identity_corruption(1.0, 500))
    assert rank.agrees_with(rank_degradation(1.0))


@pytest.mark.slow
def test_state_corruption_against_monte_carlo():
    rng = np.random.default_rng(8)
    row = rng.normal(size=8)
    row[3] += 1.5
    sigma = 0.8
    noisy = row + sigma * rng.standard_normal((200000, 8))
    flips = (np.argmax(noisy, axis=1) != 3).astype(float)
    se = flips.std(ddof=1) / math.sqrt(flips.size)
    assert abs(flips.mean() - identity_corruption_state(row, 3, sigma)) <= 3 * se


# --- embedding tables --------------------------------------------------------------

def test_l2_win_rate_orthonormal_pair():
    table = EmbeddingTable.corners(3)
    assert embed_win_rate(table, 0, 1, 1.0 / math.sqrt(2.0)) == pytest.approx(std_normal_cdf(1.0), abs=1e-12)
    assert embed_win_rate(table, 0, 1, 1e9) == pytest.approx(0.5, abs=1e-6)


def test_win_rate_rejects_degenerate_pairs():
    table = EmbeddingTable(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(DegenerateError):
        embed_win_rate(table, 0, 1, 1.0)
    with pytest.raises(DomainError):
        embed_win_rate(table, 2, 2, 1.0)


def test_dot_win_rate_matches_simulation():
    rng = np.random.default_rng(21)
    table = EmbeddingTable(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.5, 0.2], [0.0, 0.0, 2.0]]))
    sigma, i, j = 0.5, 0, 2
    e_i, e_j = table.vectors[i], table.vectors[j]
    noisy = e_i + sigma * rng.standard_normal((100000, 3))
    wins = (noisy @ e_i > noisy @ e_j).astype(float)
    se = wins.std(ddof=1) / math.sqrt(wins.size)
    assert abs(wins.mean() - embed_win_rate(table, i, j, sigma, Metric.DOT)) <= 4 * se + 1e-12


def test_squared_form_inverts_at_low_noise():
    table = EmbeddingTable.corners(2)
    assert embed_win_rate(table, 0, 1, 0.05, "dot") > 0.99
    assert embed_win_rate(table, 0, 1, 0.05, "dot", form="squared") < 0.01


def test_unknown_win_rate_form():
    with pytest.raises(DomainError):
        embed_win_rate(EmbeddingTable.corners(2), 0, 1, 1.0, "dot", form="cubic")


def test_embed_rank_degradation():
    table = EmbeddingTable(np.array([[0.0, 0.0], [1.0, 2.0]]))
    assert embed_rank_degradation(table, 0, 0.9) == pytest.approx(1.0 - embed_win_rate(table, 0, 1, 0.9))
    corners = EmbeddingTable.corners(5)
    sigma = 1.0 / math.sqrt(2.0)
    assert embed_rank_degradation(corners, 2, sigma) == pytest.approx(rank_degradation(sigma), abs=1e-12)


def test_embed_identity_corruption_mc():
    corners = EmbeddingTable.corners(5)
    assert embed_identity_corruption_mc(corners, 0, 1e-9, n_samples=500).mean == 0.0
    estimate = embed_identity_corruption_mc(corners, 1, 1.0, Metric.L2, n_samples=20000, seed=4)
    assert estimate.agrees_with(identity_corruption(1.0, 5), n_se=4)
    pair = EmbeddingTable(np.array([[0.0, 0.0], [1.0, 1.0]]))
    estimate = embed_identity_corruption_mc(pair, 0, 0.8, Metric.L2, n_samples=20000, seed=9)
    assert estimate.agrees_with(1.0 - embed_win_rate(pair, 0, 1, 0.8), n_se=4)


def test_corruption_point():
    point = corruption_point(0.6, 7)
    assert point.rho == pytest.approx(identity_corruption(0.6, 7))
    assert point.rank == pytest.approx(rank_degradation(0.6))


# --- validation grid ---------------------------------------------------------------

def test_validate_formulas_grid_shape_and_determinism():
    frame = validate_formulas_grid([5, 50], 0.3, 3.0, 4, 1000, seed=7)
    assert list(frame.columns) == VALIDATION_COLUMNS
    assert len(frame) == 8
    assert frame["sigma"].iloc[0] == pytest.approx(0.3)
    assert frame["sigma"].iloc[3] == pytest.approx(3.0)
    pd.testing.assert_frame_equal(frame, validate_formulas_grid([5, 50], 0.3, 3.0, 4, 1000, seed=7, threads=4))


def test_validate_formulas_grid_domain():
    with pytest.raises(DomainError):
        validate_formulas_grid([5], 2.0, 1.0, 4, 1000, seed=0)
    with pytest.raises(DomainError):
        validate_formulas_grid([], 1.0, 2.0, 4, 1000, seed=0)


@pytest.mark.slow
def test_validate_formulas_acceptance_grid():
    frame = validate_formulas_grid([5, 50, 500], math.sqrt(0.1), math.sqrt(10.0), 8, 5000, seed=0, threads=4)
    rho_ok = (frame["rho_mc"] - frame["rho_analytic"]).abs() <= 3 * frame["rho_se"] + 1e-12
    rank_ok = (frame["rank_mc"] - frame["rank_analytic"]).abs() <= 3 * frame["rank_se"] + 1e-12
    assert pd.concat([rho_ok, rank_ok]).mean() >= 0.95
