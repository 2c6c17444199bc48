"""
Closed-form eigenvalue and generalization bounds

Order-level statements are instantiated with every hidden constant set to 1,
except the constants that the derivations pin down (the 9 of the
smallest-singular-value bound and C1, C2). Reports carry the label
"certified-shape, uncertified-constant".
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigvalsh, solve

from src.tools.activations import (
    ActivationKind,
    ActivationProfile,
    ActivationTag,
    beta_constants,
    build_profile,
    hermite_mu,
)
from src.tools.network import Architecture
from src.utils.exceptions import DomainError, ValidationError
from src.utils.validators import require, validate_positive_int, validate_probability

logger = logging.getLogger(__name__)

CONSTANTS_LABEL = "certified-shape, uncertified-constant"
PROBABILITY_METADATA = {
    "prop4": "with probability at least 1 - e^(-d)",
    "thm1": "with probability at least 1 - e^(-d) over the input sample",
    "thm2": "with probability at least 1 - N exp(-C d) - 2 exp(-m) over initialization",
    "thm3": "with probability at least 1 - delta over the training sample",
}

# variances replacing G_max for single-activation networks
_COROLLARY_VARIANCE = {ActivationTag.SIGMOID: 0.5, ActivationTag.TANH: 2.0}


@dataclass
class Prop4Bound:
    """Lower bound on lambda_min(X^T X) for N points on the unit sphere in R^d"""
    value: float
    raw: float
    vacuous: bool


@dataclass
class GeneralizationBound:
    """Both terms of the expected 0-1 error bound"""
    value: float
    complexity_term: float
    confidence_term: float
    c2: float
    lip_max: float


@dataclass
class BoundReport:
    """All bounds for one architecture at a given (N, d)"""
    architecture: str
    n: int
    d: int
    lower_thm1: float
    upper_thm1: float
    lower_thm2_score: float
    upper_thm2_score: float
    prop4_term: float
    mu1_sq: float
    per_layer_factors: List[Tuple[float, float, float]]
    c1: float
    c2: float
    lip_max: float
    gen_bound: Optional[float] = None
    gen_terms: Optional[Dict[str, float]] = None
    prop4_vacuous: bool = False
    constants: str = CONSTANTS_LABEL
    probabilities: Dict[str, str] = field(default_factory=lambda: dict(PROBABILITY_METADATA))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["per_layer_factors"] = [list(t) for t in self.per_layer_factors]
        return data


def _check_sizes(n: int, d: int):
    require(validate_positive_int(n, "N", 1))
    require(validate_positive_int(d, "d", 1))


def prop4_bound(n: int, d: int) -> Prop4Bound:
    """max(N/d - 9 N^(2/3) d^(1/3), 0) with a vacuity flag"""
    _check_sizes(n, d)
    raw = n / d - 9.0 * n ** (2.0 / 3.0) * d ** (1.0 / 3.0)
    # cube roots are inexact; snap the exact root N = 729 d^4 to zero
    if abs(raw) <= 1e-9 * (n / d):
        raw = 0.0
    return Prop4Bound(value=max(raw, 0.0), raw=raw, vacuous=raw <= 0.0)


def _betas(arch: Architecture, quad_order: Optional[int], variance: Optional[float] = None) -> List[Tuple[float, float, float]]:
    """(beta1, beta2, beta3) for sigma_1..sigma_(L-1)"""
    return [beta_constants(kind, arch.depth, quad_order, eta=arch.eta, variance=variance)
            for kind in arch.activations]


def per_layer_factors(arch: Architecture, quad_order: int = None) -> List[Tuple[float, float, float]]:
    """(beta3 + alpha, beta2 + alpha, beta1 + alpha) for p = 2..L with sigma_(p-1), alpha_(p-2)"""
    betas = _betas(arch, quad_order)
    factors = []
    for p in range(2, arch.depth + 1):
        b1, b2, b3 = betas[p - 2]
        alpha = arch.alpha(p - 2)
        factors.append((b3 + alpha, b2 + alpha, b1 + alpha))
    return factors


def thm1_lower(arch: Architecture, n: int, d: int, quad_order: int = None,
               variance: Optional[float] = None) -> float:
    """
    2 mu_1(sigma_1)^2 * prop4_bound(N, d) * prod_{p=3..L} (beta3(sigma_(p-1)) + alpha_(p-2))

    Args:
        variance: Overrides G_max when evaluating beta3 (used by the
            single-activation specialisations)
    """
    _check_sizes(n, d)
    betas = _betas(arch, quad_order, variance)
    mu1 = hermite_mu(arch.activation(1), 1)
    product = 1.0
    for p in range(3, arch.depth + 1):
        product *= betas[p - 2][2] + arch.alpha(p - 2)
    return 2.0 * mu1 * mu1 * prop4_bound(n, d).value * product


def thm1_upper(arch: Architecture, n: int, d: int, quad_order: int = None) -> float:
    """
    (N/d) sum_{l=1..L} lead_l prod_{p=2..l-1} (beta1(sigma_(p-1)) + alpha_(p-2))
                              prod_{p=l+1..L} (beta2(sigma_(p-1)) + alpha_(p-2))

    lead_1 = 1 (G^(1) has unit diagonal) and lead_l = beta1(sigma_(l-1)).
    """
    _check_sizes(n, d)
    L = arch.depth
    betas = _betas(arch, quad_order)

    def beta1(layer):
        return betas[layer - 1][0]

    def beta2(layer):
        return betas[layer - 1][1]

    total = 0.0
    for l in range(1, L + 1):
        term = 1.0 if l == 1 else beta1(l - 1)
        for p in range(2, l):
            term *= beta1(p - 1) + arch.alpha(p - 2)
        for p in range(l + 1, L + 1):
            term *= beta2(p - 1) + arch.alpha(p - 2)
        total += term
    return (n / d) * total


def thm2_scores(arch: Architecture, n: int, d: int, quad_order: int = None) -> Tuple[float, float]:
    """
    Ranking scores from the finite-width bounds with hidden constants set to 1

    lower = (N/d) prod_{i=2..L-1} (beta3(sigma_i) + alpha_(i-1))
    upper = (N/d) sum_{k=0..L-1} prod_{i=k+2..L-1} (beta2(sigma_i) + alpha_(i-1))
    """
    _check_sizes(n, d)
    if arch.depth < 3:
        raise ValidationError(f"Finite-width scores need depth >= 3, got {arch.depth}")
    L = arch.depth
    betas = _betas(arch, quad_order)

    lower = 1.0
    for i in range(2, L):
        lower *= betas[i - 1][2] + arch.alpha(i - 1)

    upper = 0.0
    for k in range(0, L):
        term = 1.0
        for i in range(k + 2, L):
            term *= betas[i - 1][1] + arch.alpha(i - 1)
        upper += term

    ratio = n / d
    return ratio * lower, ratio * upper


def corollary_bounds(kind: Union[ActivationKind, Sequence[ActivationKind]], depth: int, skips: Sequence[int],
                     n: int, d: int, quad_order: int = None) -> Tuple[float, float]:
    """
    Eigenvalue bounds for networks with one activation in every layer

    Sigmoid and Tanh evaluate beta3 at the variances 1/2 and 2 instead of
    G_max. Passing several different kinds raises ValidationError.
    """
    if not isinstance(kind, ActivationKind):
        kinds = list(kind)
        if not kinds or any(k != kinds[0] for k in kinds):
            raise ValidationError("corollary_bounds requires a single activation kind in every layer")
        kind = kinds[0]

    arch = Architecture(depth, 1, (kind,) * (depth - 1), tuple(skips), d)
    variance = _COROLLARY_VARIANCE.get(kind.tag)
    lower = thm1_lower(arch, n, d, quad_order, variance=variance)
    upper = thm1_upper(arch, n, d, quad_order)
    return lower, upper


def profiles_for(arch: Architecture, quad_order: int = None) -> List[ActivationProfile]:
    return [build_profile(kind, arch.depth, quad_order, eta=arch.eta) for kind in arch.activations]


def _lip_max(profiles: Sequence[ActivationProfile]) -> float:
    if not profiles:
        raise ValidationError("At least one activation profile is required")
    return max(p.lipschitz for p in profiles)


def c1_constant(depth: int, lip_max: float) -> float:
    return float(np.sqrt(depth) / (3.0 * lip_max + 1.0) ** (depth - 1))


def c2_constant(depth: int, lip_max: float) -> float:
    return float(np.sqrt(depth) * (3.0 * lip_max + 1.0) ** (depth - 1))


def width_threshold(depth: int, lip_max: float, radius: float, epsilon: float) -> float:
    """(3 Lip_max + 1)^(4L-4) L^2 R^4 / (4 eps^2), the width proxy of the online-loss argument"""
    if radius <= 0.0 or epsilon <= 0.0:
        raise DomainError(f"Radius and epsilon must be positive, got R={radius}, eps={epsilon}")
    return float((3.0 * lip_max + 1.0) ** (4 * depth - 4) * depth ** 2 * radius ** 4 / (4.0 * epsilon ** 2))


def generalization_bound(lambda_min: float, y: np.ndarray, n: int, delta: float, depth: int,
                         profiles: Sequence[ActivationProfile]) -> GeneralizationBound:
    """
    C2(L) sqrt(y^T y / (lambda_min N)) + sqrt(log(1/delta) / N)

    Raises:
        DomainError: lambda_min <= 0 or delta outside (0, 1/e]
    """
    if not lambda_min > 0.0:
        raise DomainError(f"lambda_min must be positive for a non-vacuous bound, got {lambda_min}")
    require(validate_positive_int(n, "N", 1))
    require(validate_probability(delta), DomainError)
    if delta > np.exp(-1.0):
        raise DomainError(f"delta must be <= 1/e, got {delta}")

    y = np.asarray(y, dtype=np.float64)
    lip = _lip_max(profiles)
    c2 = c2_constant(depth, lip)
    complexity = c2 * float(np.sqrt(np.dot(y, y) / (lambda_min * n)))
    confidence = float(np.sqrt(np.log(1.0 / delta) / n))
    return GeneralizationBound(complexity + confidence, complexity, confidence, c2, lip)


def step_size_thm3(y: np.ndarray, m: int, n: int, kappa: float, depth: int,
                   profiles: Sequence[ActivationProfile], lambda_min: Optional[float] = None,
                   K: Optional[np.ndarray] = None) -> float:
    """
    kappa C1 sqrt(y^T K^-1 y) / (m sqrt(N))

    With only lambda_min given, y^T K^-1 y is relaxed to y^T y / lambda_min.
    """
    if kappa < 0.0:
        raise DomainError(f"kappa must be >= 0, got {kappa}")
    require(validate_positive_int(m, "m", 1))
    require(validate_positive_int(n, "N", 1))
    y = np.asarray(y, dtype=np.float64)
    c1 = c1_constant(depth, _lip_max(profiles))

    if K is not None:
        K = np.asarray(K, dtype=np.float64)
        smallest = float(eigvalsh(K, subset_by_index=[0, 0])[0])
        if smallest <= 0.0:
            raise DomainError(f"Kernel is singular (lambda_min = {smallest:.3e})")
        quad = float(y @ solve(K, y, assume_a="pos"))
    elif lambda_min is not None:
        if not lambda_min > 0.0:
            raise DomainError(f"lambda_min must be positive, got {lambda_min}")
        quad = float(y @ y) / lambda_min
    else:
        raise ValidationError("Either K or lambda_min must be supplied")

    return kappa * c1 * float(np.sqrt(quad)) / (m * np.sqrt(n))


def bound_report(arch: Architecture, n: int, d: int, quad_order: int = None,
                 lambda_min: Optional[float] = None, y: Optional[np.ndarray] = None,
                 delta: float = 0.05) -> BoundReport:
    """Evaluate every bound for an architecture and collect them with flags"""
    prop4 = prop4_bound(n, d)
    if prop4.vacuous:
        logger.warning(f"Lower bound is vacuous at N={n}, d={d} (raw value {prop4.raw:.4g})")

    lower, upper = thm1_lower(arch, n, d, quad_order), thm1_upper(arch, n, d, quad_order)
    if arch.depth >= 3:
        score_low, score_high = thm2_scores(arch, n, d, quad_order)
    else:
        score_low = score_high = n / d

    profiles = profiles_for(arch, quad_order)
    lip = _lip_max(profiles)
    mu1 = hermite_mu(arch.activation(1), 1)

    report = BoundReport(
        architecture=arch.encode(),
        n=n,
        d=d,
        lower_thm1=lower,
        upper_thm1=upper,
        lower_thm2_score=score_low,
        upper_thm2_score=score_high,
        prop4_term=prop4.value,
        mu1_sq=mu1 * mu1,
        per_layer_factors=per_layer_factors(arch, quad_order),
        c1=c1_constant(arch.depth, lip),
        c2=c2_constant(arch.depth, lip),
        lip_max=lip,
        prop4_vacuous=prop4.vacuous,
    )

    if lambda_min is not None:
        labels = np.ones(n) if y is None else np.asarray(y, dtype=np.float64)
        gen = generalization_bound(lambda_min, labels, n, delta, arch.depth, profiles)
        report.gen_bound = gen.value
        report.gen_terms = {"complexity": gen.complexity_term, "confidence": gen.confidence_term}

    return report
