"""Adam training loop for the score network."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .features import FeatureStats, ScoreSample, fit_feature_stats, normalize_features
from .network import (
    Hyperparams,
    NumericError,
    ScorerParams,
    TrainedScorer,
    _forward_batch,
    init_params,
    loss_and_gradients,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainingLog:
    """Per-epoch mean train loss, end-of-epoch validation loss, best epoch index."""

    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int


class AdamState:
    """First/second moment accumulators for every parameter array."""

    def __init__(self, params: ScorerParams):
        self.m = {name: np.zeros_like(a) for name, a in params.arrays()}
        self.v = {name: np.zeros_like(a) for name, a in params.arrays()}
        self.t = 0

    def step(self, params: ScorerParams, grads: ScorerParams, lr: float) -> None:
        self.t += 1
        correction1 = 1.0 - ADAM_BETA1**self.t
        correction2 = 1.0 - ADAM_BETA2**self.t
        for (name, p), (_, g) in zip(params.arrays(), grads.arrays()):
            m, v = self.m[name], self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)


def _mse(x: np.ndarray, y: np.ndarray, params: ScorerParams) -> float:
    scores, _ = _forward_batch(x, params)
    return float(np.mean((scores - y) ** 2))


def train_scorer(
    train_samples: Sequence[ScoreSample],
    val_samples: Sequence[ScoreSample],
    hyper: Hyperparams,
) -> tuple[TrainedScorer, TrainingLog]:
    """Fit stats on the training split, then minimize MSE with Adam.

    Returns the parameters from the epoch with the lowest validation MSE
    (lowest training MSE when no validation samples are given).  Bitwise
    reproducible for a fixed seed, data, and hyperparameters.  Gated-out
    samples are rejected: their score is analytically zero and they carry no
    gradient signal.
    """
    if not train_samples:
        raise ValueError("training requires at least one sample")
    gated = sum(1 for s in train_samples if not s.gate) + sum(1 for s in val_samples if not s.gate)
    if gated:
        raise ValueError(f"{gated} gated-out sample(s) passed to train_scorer; exclude them first")

    stats = fit_feature_stats(train_samples)
    x_train = np.stack([normalize_features(s.features, stats) for s in train_samples])
    y_train = np.array([s.label for s in train_samples])
    x_val = np.stack([normalize_features(s.features, stats) for s in val_samples]) if val_samples else None
    y_val = np.array([s.label for s in val_samples]) if val_samples else None

    params = init_params(hyper, n_features=x_train.shape[1])
    if hyper.epochs == 0:
        return TrainedScorer(params, stats, hyper), TrainingLog([], [], best_epoch=-1)

    shuffle_rng = np.random.default_rng([hyper.seed, 1])
    adam = AdamState(params)
    n = x_train.shape[0]

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_epoch = -1
    best_selection = math.inf
    best_params = params.copy()

    for epoch in range(hyper.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            loss, grads = loss_and_gradients(x_train[batch], y_train[batch], params)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            adam.step(params, grads, hyper.learning_rate)
            epoch_loss += loss * batch.size
        train_losses.append(epoch_loss / n)

        if x_val is not None:
            current_val = _mse(x_val, y_val, params)
            if not math.isfinite(current_val):
                raise NumericError(f"non-finite validation loss at epoch {epoch}")
            val_losses.append(current_val)
            selection = current_val
        else:
            selection = _mse(x_train, y_train, params)
        if selection < best_selection:
            best_selection = selection
            best_epoch = epoch
            best_params = params.copy()

    return TrainedScorer(best_params, stats, hyper), TrainingLog(train_losses, val_losses, best_epoch)


def hyper_with_seed(hyper: Hyperparams, seed: int) -> Hyperparams:
    return replace(hyper, seed=seed)
