"""
Standard normal special functions used by the corruption analytics.

Thin, domain-checked wrappers over ``scipy.special`` (ndtr, ndtri, log_ndtr),
which are accurate to a few ulp over the whole real line.
"""

import math
from typing import Union

import numpy as np
from scipy import special

from ..core.errors import DomainError

ArrayLike = Union[float, np.ndarray]


def std_normal_cdf(x: ArrayLike) -> ArrayLike:
    """Φ(x) for finite x."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"std_normal_cdf requires finite input, got {x!r}")
    out = special.ndtr(arr)
    return float(out) if np.ndim(out) == 0 else out


def log_std_normal_cdf(x: ArrayLike) -> ArrayLike:
    """log Φ(x), stable in the far left tail where Φ underflows."""
    out = special.log_ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def std_normal_pdf(x: ArrayLike) -> ArrayLike:
    arr = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * arr * arr) / math.sqrt(2.0 * math.pi)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(p: ArrayLike) -> ArrayLike:
    """Φ⁻¹(p) for 0 < p < 1, refined with one Newton step on Φ."""
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError(f"std_normal_quantile requires 0 < p < 1, got {p!r}")
    x = special.ndtri(arr)
    # Newton on Φ(x) - p; ndtri is already close so one step suffices
    density = std_normal_pdf(x)
    x = np.where(density > 0.0, x - (special.ndtr(x) - arr) / np.where(density > 0.0, density, 1.0), x)
    return float(x) if np.ndim(x) == 0 else x
