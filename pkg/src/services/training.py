"""
Training service for the tiny denoiser.

Plain gradient descent on the weighted cross entropy, with fresh
(x0 ~ dist, t ~ U[ε, 1], state ~ forward kernel) batches at every step.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..core.errors import DivergenceError, ShapeError
from ..core.hybrid_kernel import TIME_EPS, forward_corrupt_batch
from ..core.models import KernelConfig, ToyDistribution, TrainConfig
from ..utils.rng import make_rng
from .denoisers import (
    DenoiserParams,
    ExactBayesDenoiser,
    TrainingBatch,
    init_params,
    loss,
    loss_gradient,
    posterior_loss,
)

logger = logging.getLogger(__name__)

# substream labels under the training seed
_INIT_STREAM, _STEP_STREAM, _EVAL_STREAM = 0, 1, 2


@dataclass
class TrainingHistory:
    """Held-out loss before and after training plus the per-step batch losses"""
    initial_eval_loss: float = math.nan
    final_eval_loss: float = math.nan
    step_losses: List[float] = field(default_factory=list)


def make_batch(dist: ToyDistribution, kernel_cfg: KernelConfig, batch_size: int,
               rng: np.random.Generator) -> TrainingBatch:
    tokens = dist.sample(batch_size, rng)
    ts = rng.uniform(TIME_EPS, 1.0, size=batch_size)
    lattice, mask = forward_corrupt_batch(tokens, ts, kernel_cfg, rng)
    return TrainingBatch(tokens=tokens, lattice=lattice, mask=mask, t=ts)


def evaluation_batch(dist: ToyDistribution, kernel_cfg: KernelConfig, cfg: TrainConfig) -> TrainingBatch:
    """Held-out batch, fixed by the training seed."""
    return make_batch(dist, kernel_cfg, cfg.eval_batch_size, make_rng(cfg.seed, _EVAL_STREAM))


def oracle_loss(dist: ToyDistribution, batch: TrainingBatch, kernel_cfg: KernelConfig) -> float:
    """Loss the exact Bayes posterior reaches on ``batch``."""
    oracle = ExactBayesDenoiser(dist, kernel_cfg, strict=True)
    return posterior_loss(oracle.posterior_batch(batch.lattice, batch.mask, batch.t), batch)


def train(dist: ToyDistribution, cfg: TrainConfig, kernel_cfg: KernelConfig,
          history: Optional[TrainingHistory] = None) -> DenoiserParams:
    """
    Fit the tiny denoiser to ``dist``.

    Every random draw comes from substreams of ``cfg.seed``, so the parameter
    trajectory is reproducible bit for bit. Pass a ``TrainingHistory`` to
    collect losses.
    """
    if dist.vocab != kernel_cfg.vocab or dist.seq_len != kernel_cfg.seq_len:
        raise ShapeError("distribution and kernel config disagree on (vocab, seq_len)")

    params = init_params(kernel_cfg.vocab, kernel_cfg.seq_len, cfg.embed_dim, cfg.hidden_dim,
                         cfg.lam, make_rng(cfg.seed, _INIT_STREAM))
    step_rng = make_rng(cfg.seed, _STEP_STREAM)
    held_out = evaluation_batch(dist, kernel_cfg, cfg)

    initial = loss(params, held_out, kernel_cfg)
    logger.info(f"Training tiny denoiser: {cfg.steps} steps, batch {cfg.batch_size}, "
                f"lr {cfg.learning_rate}, held-out loss {initial:.4f}")

    for step in range(1, cfg.steps + 1):
        batch = make_batch(dist, kernel_cfg, cfg.batch_size, step_rng)
        value = loss(params, batch, kernel_cfg)
        if not math.isfinite(value):
            raise DivergenceError(f"loss became non-finite at step {step}")
        grads = loss_gradient(params, batch, kernel_cfg)
        updated = {name: t - cfg.learning_rate * getattr(grads, name) for name, t in params.tensors().items()}
        if not all(np.all(np.isfinite(t)) for t in updated.values()):
            raise DivergenceError(f"parameters became non-finite at step {step}")
        params = DenoiserParams(**updated, lam=params.lam)
        if history is not None:
            history.step_losses.append(value)
        if step % cfg.log_every == 0:
            logger.info(f"Step {step}/{cfg.steps}: batch loss {value:.4f}")

    final = loss(params, held_out, kernel_cfg)
    if not math.isfinite(final):
        raise DivergenceError("held-out loss is non-finite after training")
    logger.info(f"Training finished: held-out loss {initial:.4f} -> {final:.4f}")
    if history is not None:
        history.initial_eval_loss, history.final_eval_loss = initial, final
    return params


def train_with_history(dist: ToyDistribution, cfg: TrainConfig,
                       kernel_cfg: KernelConfig) -> Tuple[DenoiserParams, TrainingHistory]:
    history = TrainingHistory()
    return train(dist, cfg, kernel_cfg, history), history
