"""
Composite Gauss-Legendre quadrature with panel doubling.
"""

import logging
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from ..core.errors import QuadratureError

logger = logging.getLogger(__name__)

_NODES, _WEIGHTS = leggauss(16)


def _composite(fn: Callable[[np.ndarray], np.ndarray], lower: float, upper: float, panels: int) -> float:
    edges = np.linspace(lower, upper, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * _NODES[None, :]
    return float(np.sum(half[:, None] * _WEIGHTS[None, :] * fn(nodes)))


def integrate(fn: Callable[[np.ndarray], np.ndarray], lower: float, upper: float,
              tol: float = 1e-8, start_panels: int = 8, max_panels: int = 4096) -> float:
    """
    Integrate ``fn`` over [lower, upper].

    ``fn`` is called with a (panels, 16) array of nodes and must return values
    of the same shape. Panels double until two successive estimates differ by
    less than ``tol``.
    """
    panels = start_panels
    previous = _composite(fn, lower, upper, panels)
    change = float("inf")
    while panels < max_panels:
        panels *= 2
        current = _composite(fn, lower, upper, panels)
        change = abs(current - previous)
        if change < tol:
            logger.debug(f"Quadrature converged with {panels} panels: {current:.12g}")
            return current
        previous = current
    raise QuadratureError(
        f"quadrature did not converge to {tol:g} within {max_panels} panels "
        f"(last change {change:.3g})"
    )
