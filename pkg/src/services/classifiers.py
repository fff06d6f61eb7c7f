"""
Differentiable classifiers over L x v lattices, used for guidance.

Each classifier maps a (..., L, v) array to a (...) log-score and provides
the exact gradient with the same shape as its input.
"""

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit

from ..core.errors import DomainError, ShapeError


class Classifier(ABC):
    """Log-score f(x) with an exact gradient"""

    def __init__(self, weights: np.ndarray, bias: float = 0.0):
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.ndim != 2:
            raise ShapeError(f"classifier weights must be L x v, got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(bias):
            raise DomainError("classifier weights must be finite")
        self.bias = float(bias)

    def logit(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != self.weights.shape:
            raise ShapeError(f"classifier expects (..., {self.weights.shape[0]}, {self.weights.shape[1]}) "
                             f"inputs, got {x.shape}")
        return np.einsum("...lv,lv->...", x, self.weights) + self.bias

    @abstractmethod
    def log_score(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        pass

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "bias": self.bias}


class LinearClassifier(Classifier):
    """f(x) = <c, x> + b; the gradient is c everywhere"""

    kind = "linear"

    def log_score(self, x: np.ndarray) -> np.ndarray:
        return self.logit(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self.logit(x)
        return np.broadcast_to(self.weights, x.shape).copy()


class LogisticClassifier(Classifier):
    """f(x) = log sigmoid(<c, x> + b)"""

    kind = "logistic"

    def log_score(self, x: np.ndarray) -> np.ndarray:
        return log_expit(self.logit(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        # d/dz log sigmoid(z) = sigmoid(-z)
        slope = expit(-self.logit(x))
        return slope[..., None, None] * self.weights


CLASSIFIERS = {"linear": LinearClassifier, "logistic": LogisticClassifier}


def classifier_from_dict(document: dict) -> Classifier:
    kind = document.get("kind", "linear")
    if kind not in CLASSIFIERS:
        raise DomainError(f"unknown classifier kind {kind!r}; choose from {sorted(CLASSIFIERS)}")
    return CLASSIFIERS[kind](np.asarray(document["weights"], dtype=float), float(document.get("bias", 0.0)))


def class_indicator(seq_len: int, vocab: int, position: int, tokens, kind: str = "linear",
                    bias: float = 0.0) -> Classifier:
    """Classifier rewarding any of ``tokens`` at ``position``."""
    weights = np.zeros((seq_len, vocab))
    weights[position, list(tokens)] = 1.0
    return CLASSIFIERS[kind](weights, bias)


def finite_difference_check(classifier: Classifier, x: np.ndarray, h: float = 1e-6,
                            rng: Optional[np.random.Generator] = None, n_coords: int = 20) -> float:
    """Largest relative error between the exact and central-difference gradient on random coordinates."""
    x = np.asarray(x, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    exact = classifier.gradient(x)
    worst = 0.0
    for flat in rng.choice(x.size, size=min(n_coords, x.size), replace=False):
        idx = np.unravel_index(flat, x.shape)
        bumped_up, bumped_down = x.copy(), x.copy()
        bumped_up[idx] += h
        bumped_down[idx] -= h
        numeric = (float(np.sum(classifier.log_score(bumped_up))) - float(np.sum(classifier.log_score(bumped_down)))) / (2 * h)
        worst = max(worst, abs(numeric - exact[idx]) / max(abs(numeric), abs(exact[idx]), 1e-3))
    return worst
