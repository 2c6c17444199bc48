"""
Gaussian expectations of activations

One-dimensional moments E[sigma(u)^2], E[sigma(u)], E[sigma'(u)^2] and the
dual expectations E[sigma(u) sigma(v)], E[sigma'(u) sigma'(v)] for
(u, v) ~ N(0, [[a, c], [c, b]]).

Piecewise-linear kinds use arc-cosine closed forms. Smooth kinds use a tensor
Gauss-Hermite rule in whitened coordinates u = sqrt(a) z1,
v = sqrt(b) (rho z1 + sqrt(1 - rho^2) z2) while both variances stay below
config.quadrature.hermite_max_variance, and the split Gauss-Legendre method
above it. The split method grades its panels around the zero crossings of
both factors and serves as the high-accuracy generic integrator.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.config import config
from src.tools.activations import ActivationKind, ActivationTag, _value, _derivative
from src.tools.quadrature import (
    gauss_hermite_normal,
    graded_edges,
    graded_normal_rule,
    graded_size,
    normal_rule,
    panel_nodes,
    panel_order,
)
from src.utils.exceptions import DomainError, ValidationError
from src.utils.validators import require, validate_positive_int

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# budget of activation evaluations per chunk
_EVALS_PER_CHUNK = 4_000_000


class Moment(Enum):
    """One-dimensional moments of an activation"""
    SQUARE = "square"
    MEAN = "mean"
    DERIV_SQUARE = "deriv_square"
    DERIV_MEAN = "deriv_mean"


class QuadMethod(Enum):
    """Integration method for Gaussian expectations"""
    AUTO = "auto"
    CLOSED_FORM = "closed_form"
    GAUSS_HERMITE = "gauss_hermite"
    SPLIT_LEGENDRE = "split_legendre"


@dataclass(frozen=True)
class Cov2:
    """
    2 x 2 covariance [[a, c], [c, b]]

    Raises:
        DomainError: for negative or non-finite variances or c^2 > ab
    """
    a: float
    b: float
    c: float

    def __post_init__(self):
        values = np.array([self.a, self.b, self.c], dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise DomainError(f"Covariance entries must be finite, got {values.tolist()}")
        if self.a < 0.0 or self.b < 0.0:
            raise DomainError(f"Variances must be >= 0, got a={self.a}, b={self.b}")
        if self.c * self.c > self.a * self.b * (1.0 + 1e-8) + 1e-300:
            raise DomainError(f"Invalid covariance: c^2 = {self.c * self.c:.6g} > ab = {self.a * self.b:.6g}")

    @property
    def rho(self) -> float:
        ab = self.a * self.b
        if ab == 0.0:
            return 0.0
        return float(np.clip(self.c / np.sqrt(ab), -1.0, 1.0))


def _resolve_order(quad_order) -> int:
    order = quad_order or config.quadrature.order
    require(validate_positive_int(order, "quad_order", 2))
    return order


def _check_variance(variance: float):
    if not np.isfinite(variance) or variance < 0.0:
        raise DomainError(f"Variance must be finite and >= 0, got {variance}")


def _piecewise_moment(kind: ActivationKind, variance: float, moment: Moment) -> float:
    eta = kind.eta if kind.tag is ActivationTag.LEAKY_RELU else 0.0
    if moment is Moment.SQUARE:
        return (1.0 + eta * eta) * variance / 2.0
    if moment is Moment.MEAN:
        return (1.0 - eta) * np.sqrt(variance / TWO_PI)
    if moment is Moment.DERIV_SQUARE:
        return (1.0 + eta * eta) / 2.0
    return (1.0 + eta) / 2.0


def _moment_integrand(kind: ActivationKind, x: np.ndarray, moment: Moment) -> np.ndarray:
    if moment is Moment.SQUARE:
        return _value(kind, x) ** 2
    if moment is Moment.MEAN:
        return _value(kind, x)
    if moment is Moment.DERIV_SQUARE:
        return _derivative(kind, x) ** 2
    return _derivative(kind, x)


def expect_1d(kind: ActivationKind, variance: float, moment: Moment, quad_order: int = None,
              method: QuadMethod = QuadMethod.AUTO) -> float:
    """
    One-dimensional moment of an activation under u ~ N(0, variance)

    Args:
        kind: Activation kind
        variance: Variance of u (>= 0)
        moment: Which moment to return
        quad_order: Quadrature order for non-closed-form kinds
        method: Integration method

    Returns:
        The expectation as a float
    """
    _check_variance(variance)
    if variance == 0.0:
        return float(_moment_integrand(kind, np.zeros(1), moment)[0])

    if method is QuadMethod.CLOSED_FORM and not kind.is_piecewise_linear:
        raise ValidationError(f"No closed form for {kind}")
    if kind.is_piecewise_linear and method in (QuadMethod.AUTO, QuadMethod.CLOSED_FORM):
        return float(_piecewise_moment(kind, variance, moment))

    order = _resolve_order(quad_order)
    if method is QuadMethod.SPLIT_LEGENDRE:
        rule = graded_normal_rule((1.0 / np.sqrt(variance),), panel_order(order))
    elif method is QuadMethod.GAUSS_HERMITE:
        rule = gauss_hermite_normal(order)
    else:
        rule = normal_rule(variance, order)
    values = _moment_integrand(kind, np.sqrt(variance) * rule.nodes, moment)
    return float(np.dot(rule.weights, values))


def _validate_batch(a: np.ndarray, b: np.ndarray, c: np.ndarray):
    for arr, name in ((a, "a"), (b, "b"), (c, "c")):
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"Covariance entries '{name}' must be finite")
    if np.any(a < 0.0) or np.any(b < 0.0):
        raise DomainError("Variances must be >= 0")
    excess = c * c - a * b * (1.0 + 1e-8)
    if np.any(excess > 1e-300):
        worst = int(np.argmax(excess))
        raise DomainError(f"Invalid covariance at entry {worst}: c^2 = {c[worst] ** 2:.6g} > ab = {a[worst] * b[worst]:.6g}")


def _closed_form(kind: ActivationKind, a: np.ndarray, b: np.ndarray, c: np.ndarray,
                 derivative: bool) -> np.ndarray:
    # theta via arctan2 keeps aligned pairs exact (theta = 0 when c^2 = ab)
    gap = np.sqrt(np.maximum(a * b - c * c, 0.0))
    theta = np.arctan2(gap, c)
    eta = kind.eta if kind.tag is ActivationTag.LEAKY_RELU else 0.0
    scale = (1.0 - eta) ** 2

    if derivative:
        return eta + scale * (np.pi - theta) / TWO_PI
    relu = (gap + (np.pi - theta) * c) / TWO_PI
    return eta * c + scale * relu


def _chunks(total: int, per_item: int):
    size = max(1, min(config.quadrature.chunk_size * 64, _EVALS_PER_CHUNK // max(per_item, 1)))
    for start in range(0, total, size):
        yield slice(start, min(start + size, total))


def _gauss_hermite_2d(f, a, b, rho, order: int) -> np.ndarray:
    rule = gauss_hermite_normal(order)
    z, w = rule.nodes, rule.weights
    out = np.empty(a.shape[0])
    for idx in _chunks(a.shape[0], order * order):
        ra, rb, rr = np.sqrt(a[idx]), np.sqrt(b[idx]), rho[idx]
        rs = np.sqrt(np.maximum(1.0 - rr * rr, 0.0))
        fu = f(ra[:, None] * z[None, :])
        v = rb[:, None, None] * (rr[:, None, None] * z[None, :, None] + rs[:, None, None] * z[None, None, :])
        inner = f(v) @ w
        out[idx] = (fu * inner) @ w
    return out


def _split_legendre_2d(f, a, b, rho, order: int) -> np.ndarray:
    radius = config.quadrature.split_radius
    n = panel_order(order)
    out = np.empty(a.shape[0])
    for idx in _chunks(a.shape[0], graded_size(2, n) * graded_size(1, n)):
        ra, rb, rr = np.sqrt(a[idx]), np.sqrt(b[idx]), rho[idx]
        rs = np.sqrt(np.maximum(1.0 - rr * rr, 0.0))

        # f(u) turns over 1 / ra in z1; the conditional mean of v crosses zero over max(rs, 1 / rb) / |rho|
        with np.errstate(divide="ignore"):
            mixing = np.maximum(rs, 1.0 / rb) / np.abs(rr)
        z1, w1 = panel_nodes(graded_edges(np.zeros_like(ra), [1.0 / ra, mixing], radius), n)

        # v crosses zero at z2 = -rho z1 / rs over 1 / (rb rs)
        crossing = -rr[:, None] * z1 / rs[:, None]
        z2, w2 = panel_nodes(graded_edges(crossing, [(1.0 / (rb * rs))[:, None]], radius), n)

        v = rb[:, None, None] * (rr[:, None, None] * z1[:, :, None] + rs[:, None, None] * z2)
        inner = np.einsum("ijk,ijk->ij", f(v), w2)
        out[idx] = np.einsum("ij,ij->i", f(ra[:, None] * z1) * inner, w1)
    return out


def _aligned(f, a, b, sign, hermite: bool, order: int) -> np.ndarray:
    # rank-one covariance: v = sign * sqrt(b / a) * u
    ra, rb = np.sqrt(a), np.sqrt(b)
    if hermite:
        rule = gauss_hermite_normal(order)
        z = rule.nodes[None, :]
        return (f(ra[:, None] * z) * f((sign * rb)[:, None] * z)) @ rule.weights
    edges = graded_edges(np.zeros_like(ra), [1.0 / ra, 1.0 / rb], config.quadrature.split_radius)
    z, w = panel_nodes(edges, panel_order(order))
    return np.einsum("ij,ij->i", f(ra[:, None] * z) * f((sign * rb)[:, None] * z), w)


def dual_expect_batch(kind: ActivationKind, a, b, c, derivative: bool = False, quad_order: int = None,
                      method: QuadMethod = QuadMethod.AUTO) -> np.ndarray:
    """
    Vectorised dual expectation over many covariances

    Args:
        kind: Activation kind
        a, b, c: Arrays of variances and covariances (broadcastable)
        derivative: Integrate sigma' instead of sigma
        quad_order: Gauss-Hermite order; graded panels use max(split_order, quad_order // 8) nodes
        method: Integration method

    Returns:
        Array of E[f(u) f(v)] with the broadcast shape of the inputs
    """
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (a, b, c)))
    shape = a.shape
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    _validate_batch(a, b, c)

    if method is QuadMethod.CLOSED_FORM and not kind.is_piecewise_linear:
        raise ValidationError(f"No closed form for {kind}")

    order = _resolve_order(quad_order)
    f = (lambda x: _derivative(kind, x)) if derivative else (lambda x: _value(kind, x))
    out = np.empty(a.shape[0])

    zero = (a == 0.0) | (b == 0.0)
    if np.any(zero):
        f0 = float(f(np.zeros(1))[0])
        other = a[zero] + b[zero]
        moment = Moment.DERIV_MEAN if derivative else Moment.MEAN
        out[zero] = [f0 * expect_1d(kind, float(v), moment, order, method) for v in other]

    live = ~zero
    if not np.any(live):
        return out.reshape(shape)

    la, lb, lc = a[live], b[live], c[live]
    if kind.is_piecewise_linear and method in (QuadMethod.AUTO, QuadMethod.CLOSED_FORM):
        out[live] = _closed_form(kind, la, lb, lc, derivative)
        return out.reshape(shape)

    rho = np.clip(lc / np.sqrt(la * lb), -1.0, 1.0)
    aligned = np.abs(rho) > 1.0 - config.kernel.degenerate_rho_tol
    if method is QuadMethod.GAUSS_HERMITE:
        hermite = np.ones(la.shape[0], dtype=bool)
    elif method is QuadMethod.SPLIT_LEGENDRE:
        hermite = np.zeros(la.shape[0], dtype=bool)
    else:
        hermite = np.maximum(la, lb) <= config.quadrature.hermite_max_variance

    values = np.empty(la.shape[0])
    for use_hermite in (True, False):
        group = hermite == use_hermite
        pick = group & aligned
        if np.any(pick):
            values[pick] = _aligned(f, la[pick], lb[pick], np.sign(rho[pick]), use_hermite, order)
        pick = group & ~aligned
        if np.any(pick):
            integrate = _gauss_hermite_2d if use_hermite else _split_legendre_2d
            values[pick] = integrate(f, la[pick], lb[pick], rho[pick], order)
    out[live] = values
    return out.reshape(shape)


def dual_expect(kind: ActivationKind, cov: Cov2, quad_order: int = None,
                method: QuadMethod = QuadMethod.AUTO) -> float:
    """E[sigma(u) sigma(v)] for (u, v) ~ N(0, cov)"""
    return float(dual_expect_batch(kind, cov.a, cov.b, cov.c, False, quad_order, method))


def dual_deriv_expect(kind: ActivationKind, cov: Cov2, quad_order: int = None,
                      method: QuadMethod = QuadMethod.AUTO) -> float:
    """E[sigma'(u) sigma'(v)] for (u, v) ~ N(0, cov)"""
    return float(dual_expect_batch(kind, cov.a, cov.b, cov.c, True, quad_order, method))
