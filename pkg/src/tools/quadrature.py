"""
Quadrature node tables for expectations under the standard normal measure

Gauss-Hermite rules are rescaled so that sum(w) = 1 and
E[f(Z)] ~ sum(w * f(z)) for Z ~ N(0, 1). They resolve f(sqrt(v) Z) only
while sqrt(v) is small: a smooth activation at large scale is a near-kink at
zero that polynomial nodes spread over the whole line cannot follow.
Graded rules place composite Gauss-Legendre panels geometrically around such
transitions and carry the normal density in their weights.
"""

from dataclasses import dataclass
from functools import lru_cache
import logging
from typing import Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from src.config import config
from src.utils.exceptions import ValidationError

logger = logging.getLogger(__name__)

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
# hermgauss weights overflow beyond this order
MAX_HERMITE_ORDER = 256
# panel edges around a transition, in units of its width
GRADING = np.array([1.0, 4.0, 16.0, 64.0])
# edges on the scale of the normal density itself
NORMAL_BREAKS = np.array([2.0, 5.0])


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a 1-D rule"""
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return int(self.nodes.shape[0])


def _freeze(nodes: np.ndarray, weights: np.ndarray) -> QuadratureRule:
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights)


@lru_cache(maxsize=32)
def gauss_hermite_normal(order: int) -> QuadratureRule:
    """
    Gauss-Hermite rule for E[f(Z)], Z ~ N(0, 1)

    Args:
        order: Number of nodes (2 to MAX_HERMITE_ORDER)

    Returns:
        QuadratureRule with nodes z = sqrt(2) x and weights w / sqrt(pi)
    """
    if not 2 <= order <= MAX_HERMITE_ORDER:
        raise ValidationError(f"Gauss-Hermite order must lie in [2, {MAX_HERMITE_ORDER}], got {order}")
    x, w = hermgauss(order)
    if not np.all(np.isfinite(w)):
        raise ValidationError(f"Gauss-Hermite weights overflow at order {order}")
    return _freeze(np.sqrt(2.0) * x, w / np.sqrt(np.pi))


@lru_cache(maxsize=32)
def gauss_legendre_unit(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]"""
    if order < 1:
        raise ValidationError(f"Quadrature order must be >= 1, got {order}")
    x, w = leggauss(order)
    return _freeze(0.5 * (x + 1.0), 0.5 * w)


def normal_pdf(z: np.ndarray) -> np.ndarray:
    return INV_SQRT_2PI * np.exp(-0.5 * z * z)


def panel_order(order: int) -> int:
    """Gauss-Legendre nodes per panel matching a Gauss-Hermite order"""
    return max(config.quadrature.split_order, order // 8)


def graded_size(n_widths: int, order: int) -> int:
    """Number of nodes a graded rule with n_widths transition widths produces"""
    n_edges = 1 + 2 * n_widths * GRADING.size + 2 * NORMAL_BREAKS.size + 2
    return (n_edges - 1) * order


def graded_edges(center, widths: Sequence, radius: float) -> np.ndarray:
    """
    Panel edges on [-radius, radius], refined geometrically around center

    Args:
        center: Array of transition locations
        widths: Transition widths, each broadcastable to center; inf adds no refinement
        radius: Half-length of the integration range

    Returns:
        Sorted edges of shape center.shape + (n_edges,). Edges clipped onto
        each other leave empty panels with zero weight.
    """
    center = np.asarray(center, dtype=np.float64)
    anchor = center[..., None]
    parts = [anchor]
    for width in widths:
        offsets = np.broadcast_to(np.asarray(width, dtype=np.float64), center.shape)[..., None] * GRADING
        parts += [anchor - offsets, anchor + offsets]
    fixed = np.concatenate([-NORMAL_BREAKS, NORMAL_BREAKS, [-radius, radius]])
    parts.append(np.broadcast_to(fixed, center.shape + fixed.shape))
    edges = np.clip(np.concatenate(parts, axis=-1), -radius, radius)
    return np.sort(edges, axis=-1)


def panel_nodes(edges: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre nodes on the panels between consecutive edges

    Returns:
        (nodes, weights) of shape edges.shape[:-1] + (n_panels * order,);
        weights include the standard normal density
    """
    unit = gauss_legendre_unit(order)
    left = edges[..., :-1, None]
    length = np.diff(edges, axis=-1)[..., None]
    nodes = left + length * unit.nodes
    weights = length * unit.weights * normal_pdf(nodes)
    shape = edges.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def graded_normal_rule(widths: Sequence[float], order: int, radius: float = None) -> QuadratureRule:
    """Rule for E[f(Z)] when f changes over the given widths around zero"""
    radius = radius or config.quadrature.split_radius
    nodes, weights = panel_nodes(graded_edges(0.0, list(widths), radius), order)
    return _freeze(nodes, weights)


def normal_rule(variance: float, order: int) -> QuadratureRule:
    """
    Rule for E[g(sqrt(variance) Z)] where g bends over unit scale near zero

    Gauss-Hermite up to config.quadrature.hermite_max_variance, graded
    Gauss-Legendre panels beyond.
    """
    if variance <= config.quadrature.hermite_max_variance:
        return gauss_hermite_normal(order)
    return graded_normal_rule((1.0 / np.sqrt(variance),), panel_order(order))
