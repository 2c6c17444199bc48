"""
Activation catalogue: values, derivatives, constants and Hermite coefficients

Every kind satisfies sigma(0) = 0 (the sigmoid is centred). Constants
beta1/beta2/beta3 bound the per-layer growth of the kernel diagonal and are
consumed by the eigenvalue bounds in bounds.py.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from src.config import config
from src.tools.quadrature import gauss_hermite_normal, normal_rule, INV_SQRT_2PI
from src.utils.exceptions import DomainError, ValidationError
from src.utils.validators import require, validate_finite, validate_positive_int

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class ActivationTag(Enum):
    """Supported activation families"""
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SWISH = "swish"


@dataclass(frozen=True)
class ActivationKind:
    """An activation family plus its slope parameter (LeakyReLU only)"""
    tag: ActivationTag
    eta: float = field(default=0.0)

    def __post_init__(self):
        if self.tag is ActivationTag.LEAKY_RELU:
            if not 0.0 < self.eta < 1.0:
                raise ValidationError(f"LeakyReLU slope must lie in (0, 1), got {self.eta}")
        elif self.eta != 0.0:
            # the slope only means something for LeakyReLU
            object.__setattr__(self, "eta", 0.0)

    @classmethod
    def parse(cls, name: str, eta: float = 0.1) -> "ActivationKind":
        """
        Build a kind from its tag string

        Args:
            name: One of relu, leaky_relu, sigmoid, tanh, swish
            eta: Slope used when name is leaky_relu
        """
        try:
            tag = ActivationTag(name.strip().lower())
        except ValueError:
            valid = ", ".join(t.value for t in ActivationTag)
            raise ValidationError(f"Unknown activation '{name}' (expected one of: {valid})")
        return cls(tag, eta if tag is ActivationTag.LEAKY_RELU else 0.0)

    @property
    def name(self) -> str:
        return self.tag.value

    @property
    def is_piecewise_linear(self) -> bool:
        return self.tag in (ActivationTag.RELU, ActivationTag.LEAKY_RELU)

    @property
    def is_odd(self) -> bool:
        return self.tag in (ActivationTag.SIGMOID, ActivationTag.TANH)

    def __str__(self) -> str:
        if self.tag is ActivationTag.LEAKY_RELU:
            return f"leaky_relu({self.eta:g})"
        return self.name


RELU = ActivationKind(ActivationTag.RELU)
SIGMOID = ActivationKind(ActivationTag.SIGMOID)
TANH = ActivationKind(ActivationTag.TANH)
SWISH = ActivationKind(ActivationTag.SWISH)


def leaky_relu(eta: float = 0.1) -> ActivationKind:
    return ActivationKind(ActivationTag.LEAKY_RELU, eta)


@dataclass(frozen=True)
class ActivationProfile:
    """Constants of one activation at a given network depth"""
    kind: ActivationKind
    beta1: float
    beta2: float
    beta3: float
    lipschitz: float
    hermite: Tuple[float, ...]


def _value(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    tag = kind.tag
    if tag is ActivationTag.RELU:
        return np.maximum(x, 0.0)
    if tag is ActivationTag.LEAKY_RELU:
        return np.where(x >= 0.0, x, kind.eta * x)
    if tag is ActivationTag.SIGMOID:
        return expit(x) - 0.5
    if tag is ActivationTag.TANH:
        return np.tanh(x)
    return x * expit(x)


def _derivative(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    tag = kind.tag
    if tag is ActivationTag.RELU:
        return (x >= 0.0).astype(np.float64)
    if tag is ActivationTag.LEAKY_RELU:
        return np.where(x >= 0.0, 1.0, kind.eta)
    if tag is ActivationTag.SIGMOID:
        s = expit(x)
        return s * (1.0 - s)
    if tag is ActivationTag.TANH:
        return 1.0 - np.tanh(x) ** 2
    s = expit(x)
    return s + x * s * (1.0 - s)


def act_eval(kind: ActivationKind, x: ArrayLike) -> ArrayLike:
    """
    Evaluate an activation elementwise

    Raises:
        DomainError: if any input is non-finite
    """
    arr = np.asarray(x, dtype=np.float64)
    require(validate_finite(arr, "activation input"), DomainError)
    out = _value(kind, arr)
    return float(out) if out.ndim == 0 else out


def act_deriv(kind: ActivationKind, x: ArrayLike) -> ArrayLike:
    """
    Evaluate the derivative elementwise (right derivative 1 at the ReLU kink)

    Raises:
        DomainError: if any input is non-finite
    """
    arr = np.asarray(x, dtype=np.float64)
    require(validate_finite(arr, "activation input"), DomainError)
    out = _derivative(kind, arr)
    return float(out) if out.ndim == 0 else out


def g_max(depth: int, eta: float = 0.0) -> float:
    """Worst-case pre-activation variance 2(2 + eta^2)^(L-2)"""
    require(validate_positive_int(depth, "depth", 2))
    return 2.0 * (2.0 + eta * eta) ** (depth - 2)


def footnote_variance(depth: int, eta: float = 0.0) -> float:
    """Alternative variance 3(1 + eta^2)(2 + eta^2)^(L-3) for the beta3 constant"""
    require(validate_positive_int(depth, "depth", 2))
    return 3.0 * (1.0 + eta * eta) * (2.0 + eta * eta) ** (depth - 3)


def f_curve(kind: ActivationKind, variance: float, quad_order: int = None) -> float:
    """
    2 E[sigma'(sqrt(y) Z)^2] for Z ~ N(0, 1)

    Used as f_S (sigmoid) and f_T (tanh); non-increasing in y for both.
    """
    if not np.isfinite(variance) or variance < 0.0:
        raise DomainError(f"Variance must be finite and >= 0, got {variance}")
    if variance == 0.0:
        return float(2.0 * _derivative(kind, np.zeros(1))[0] ** 2)

    rule = normal_rule(variance, quad_order or config.quadrature.order)
    values = _derivative(kind, np.sqrt(variance) * rule.nodes)
    return float(2.0 * np.dot(rule.weights, values * values))


def _variance_for_beta3(depth: int, eta: float) -> float:
    if config.kernel.beta3_variance == "footnote" and depth >= 3:
        return footnote_variance(depth, eta)
    return g_max(depth, eta)


def beta_constants(kind: ActivationKind, depth: int, quad_order: int = None,
                   eta: float = 0.0, variance: float = None) -> Tuple[float, float, float]:
    """
    Return (beta1, beta2, beta3) for an activation at depth L

    Args:
        kind: Activation kind (its own slope is used for LeakyReLU)
        depth: Network depth L >= 2
        quad_order: Gauss-Hermite order for the sigmoid/tanh beta3 (>= 32)
        eta: LeakyReLU slope entering G_max
        variance: Explicit variance for beta3, overriding G_max
    """
    require(validate_positive_int(depth, "depth", 2))
    quad_order = quad_order or config.quadrature.order
    require(validate_positive_int(quad_order, "quad_order", 32))

    tag = kind.tag
    if tag is ActivationTag.RELU:
        return 1.0, 1.0, 1.0
    if tag is ActivationTag.LEAKY_RELU:
        c = 1.0 + kind.eta ** 2
        return c, c, c
    if tag is ActivationTag.SWISH:
        return 1.0, 1.22, 0.5

    y = _variance_for_beta3(depth, eta) if variance is None else variance
    beta3 = f_curve(kind, y, quad_order)
    if tag is ActivationTag.SIGMOID:
        return 0.125, 0.125, beta3
    return 2.0, 2.0, beta3


def _swish_slope(x: float) -> float:
    s = expit(x)
    return s + x * s * (1.0 - s)


@lru_cache(maxsize=1)
def swish_derivative_range() -> Tuple[float, float]:
    """(inf, sup) of the Swish derivative, located by golden-section search"""
    high = minimize_scalar(lambda x: -_swish_slope(x), bracket=(0.0, 2.4, 6.0), method="golden", tol=1e-10)
    low = minimize_scalar(_swish_slope, bracket=(-6.0, -2.4, 0.0), method="golden", tol=1e-10)
    return float(low.fun), float(-high.fun)


def lipschitz_const(kind: ActivationKind) -> float:
    """Lipschitz constant sup |sigma'|"""
    tag = kind.tag
    if tag is ActivationTag.SIGMOID:
        return 0.25
    if tag is ActivationTag.SWISH:
        low, high = swish_derivative_range()
        return max(abs(low), high)
    return 1.0


def _hermite_basis(z: np.ndarray, max_order: int) -> np.ndarray:
    """Normalised probabilists' Hermite polynomials h_0..h_S at z, shape (S+1, len(z))"""
    basis = np.empty((max_order + 1, z.shape[0]))
    basis[0] = 1.0
    if max_order >= 1:
        basis[1] = z
    for n in range(1, max_order):
        basis[n + 1] = (z * basis[n] - np.sqrt(n) * basis[n - 1]) / np.sqrt(n + 1)
    return basis


def _relu_hermite(max_order: int) -> np.ndarray:
    # exact half-line moments: mu_k = phi(0)[h_k(0) + sqrt(k/(k-1)) h_{k-2}(0)]
    at_zero = np.zeros(max_order + 1)
    at_zero[0] = 1.0
    for k in range(2, max_order + 1):
        at_zero[k] = -np.sqrt((k - 1) / k) * at_zero[k - 2]

    mu = np.zeros(max_order + 1)
    mu[0] = INV_SQRT_2PI
    if max_order >= 1:
        mu[1] = 0.5
    for k in range(2, max_order + 1):
        mu[k] = INV_SQRT_2PI * (at_zero[k] + np.sqrt(k / (k - 1)) * at_zero[k - 2])
    return mu


def hermite_coefficients(kind: ActivationKind, max_order: int, quad_order: int = None) -> np.ndarray:
    """
    Normalised Hermite coefficients mu_0..mu_S of an activation

    Args:
        kind: Activation kind
        max_order: Highest index S
        quad_order: Gauss-Hermite order for smooth kinds (>= 64)
    """
    require(validate_positive_int(max_order, "max_order", 0))
    quad_order = quad_order or config.quadrature.hermite_order
    require(validate_positive_int(quad_order, "quad_order", 64))

    if kind.tag is ActivationTag.RELU:
        return _relu_hermite(max_order)
    if kind.tag is ActivationTag.LEAKY_RELU:
        mu = (1.0 - kind.eta) * _relu_hermite(max_order)
        if max_order >= 1:
            mu[1] += kind.eta
        return mu

    rule = gauss_hermite_normal(quad_order)
    basis = _hermite_basis(rule.nodes, max_order)
    mu = basis @ (rule.weights * _value(kind, rule.nodes))
    if kind.is_odd:
        mu[0::2] = 0.0
    return mu


def hermite_mu(kind: ActivationKind, k: int, quad_order: int = None) -> float:
    """k-th normalised Hermite coefficient E[sigma(Z) h_k(Z)]"""
    return float(hermite_coefficients(kind, k, quad_order)[k])


def diag_ratio_bounds(kind: ActivationKind, alpha: float, variance_cap: float) -> Tuple[float, float]:
    """
    (lower, upper) bounds on A_ii^(l) / A_ii^(l-1) for one layer

    Args:
        kind: Activation of the layer
        alpha: Skip coefficient alpha_(l-2)
        variance_cap: Upper bound G on A_ii^(l-1), used by the smooth lower bounds
    """
    if variance_cap <= 0.0:
        raise DomainError(f"Variance cap must be positive, got {variance_cap}")

    tag = kind.tag
    if tag is ActivationTag.RELU:
        return 1.0 + alpha, 1.0 + alpha
    if tag is ActivationTag.LEAKY_RELU:
        c = 1.0 + kind.eta ** 2 + alpha
        return c, c
    if tag is ActivationTag.SIGMOID:
        low = (0.5 - 0.5 / np.sqrt(1.0 + variance_cap / 4.0)) / variance_cap
        return float(low) + alpha, 0.125 + alpha
    if tag is ActivationTag.TANH:
        low = (2.0 - 2.0 / np.sqrt(1.0 + variance_cap)) / variance_cap
        return float(low) + alpha, 2.0 + alpha
    return 0.5 + alpha, 1.0 + alpha


def build_profile(kind: ActivationKind, depth: int, quad_order: int = None, max_order: int = 8,
                  eta: float = 0.0) -> ActivationProfile:
    """Collect the constants of an activation at depth L into one profile"""
    beta1, beta2, beta3 = beta_constants(kind, depth, quad_order, eta=eta)
    hermite = hermite_coefficients(kind, max_order)
    return ActivationProfile(
        kind=kind,
        beta1=beta1,
        beta2=beta2,
        beta3=beta3,
        lipschitz=lipschitz_const(kind),
        hermite=tuple(float(v) for v in hermite),
    )
