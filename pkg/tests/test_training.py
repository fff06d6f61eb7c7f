"""Gradient-descent training of the tiny denoiser."""
import math

import numpy as np
import pytest

from src.core.errors import DivergenceError, ShapeError
from src.core.hybrid_kernel import TIME_EPS, forward_corrupt_batch
from src.core.models import KernelConfig, TrainConfig
from src.services import training
from src.services.denoisers import TinyDenoiser, single_sequence, structured_distribution
from src.services.training import (
    TrainingHistory,
    evaluation_batch,
    make_batch,
    oracle_loss,
    train,
    train_with_history,
)


def _small_config(**overrides):
    values = dict(learning_rate=0.1, steps=20, batch_size=16, seed=3, embed_dim=6, hidden_dim=8,
                  eval_batch_size=64, log_every=10)
    values.update(overrides)
    return TrainConfig(**values)


def test_make_batch_draws_times_away_from_zero(reference_dist, reference_cfg):
    batch = make_batch(reference_dist, reference_cfg, 500, np.random.default_rng(0))
    assert len(batch) == 500
    assert batch.t.min() >= TIME_EPS
    assert batch.t.max() <= 1.0
    assert all(reference_dist.prob(seq) > 0 for seq in batch.tokens)


def test_evaluation_batch_is_fixed_by_the_seed(reference_dist, reference_cfg):
    a = evaluation_batch(reference_dist, reference_cfg, _small_config())
    b = evaluation_batch(reference_dist, reference_cfg, _small_config())
    assert np.array_equal(a.lattice, b.lattice)
    assert np.array_equal(a.mask, b.mask)


def test_training_is_reproducible(reference_dist, reference_cfg):
    first = train(reference_dist, _small_config(), reference_cfg)
    second = train(reference_dist, _small_config(), reference_cfg)
    for name, tensor in first.tensors().items():
        assert np.array_equal(tensor, getattr(second, name)), name


def test_history_records_every_step(reference_dist, reference_cfg):
    params, history = train_with_history(reference_dist, _small_config(steps=15), reference_cfg)
    assert len(history.step_losses) == 15
    assert math.isfinite(history.initial_eval_loss)
    assert math.isfinite(history.final_eval_loss)
    assert params.lam == 0.5


def test_training_rejects_mismatched_kernel(reference_dist):
    with pytest.raises(ShapeError):
        train(reference_dist, _small_config(), KernelConfig(vocab=4, seq_len=2))


def test_non_finite_loss_raises(reference_dist, reference_cfg, monkeypatch):
    monkeypatch.setattr(training, "loss", lambda params, batch, cfg: math.nan)
    with pytest.raises(DivergenceError):
        train(reference_dist, _small_config(), reference_cfg, TrainingHistory())


def test_single_sequence_is_learned():
    dist = single_sequence()
    cfg = KernelConfig(vocab=4, seq_len=4)
    params = train(dist, _small_config(steps=1500, batch_size=32, seed=0), cfg)

    rng = np.random.default_rng(1)
    tokens = np.tile(dist.sequences[0], (200, 1))
    ts = rng.uniform(0.05, 1.0, size=200)
    lattice, mask = forward_corrupt_batch(tokens, ts, cfg, rng)
    probs = TinyDenoiser(params, cfg).posterior_batch(lattice, mask, ts)
    predicted = np.argmax(probs, axis=2)
    assert np.all(predicted[~mask] == tokens[~mask])


def test_oracle_loss_is_below_untrained_loss(reference_dist, reference_cfg):
    _, history = train_with_history(reference_dist, _small_config(steps=1), reference_cfg)
    held_out = evaluation_batch(reference_dist, reference_cfg, _small_config())
    assert oracle_loss(reference_dist, held_out, reference_cfg) < history.initial_eval_loss


@pytest.mark.slow
def test_trained_loss_approaches_the_oracle():
    dist = structured_distribution()
    cfg = KernelConfig(vocab=dist.vocab, seq_len=dist.seq_len)
    train_cfg = TrainConfig(steps=16000, batch_size=128, seed=0)
    _, history = train_with_history(dist, train_cfg, cfg)
    reference = oracle_loss(dist, evaluation_batch(dist, cfg, train_cfg), cfg)
    assert history.final_eval_loss <= 1.2 * reference
