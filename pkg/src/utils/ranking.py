"""
Rank correlation statistics for score-versus-accuracy analysis
"""

import logging
from typing import Sequence

import numpy as np
from scipy.stats import kendalltau, norm, spearmanr

from src.utils.exceptions import ValidationError

logger = logging.getLogger(__name__)


def _paired(scores: Sequence[float], targets: Sequence[float]):
    x = np.asarray(scores, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"Length mismatch: {x.shape} scores vs {y.shape} targets")
    if x.shape[0] < 2:
        raise ValidationError("At least two pairs are needed for a rank correlation")
    return x, y


def kendall_tau(scores: Sequence[float], targets: Sequence[float]) -> float:
    """Kendall tau-b with tie correction"""
    x, y = _paired(scores, targets)
    tau = kendalltau(x, y, variant="b")[0]
    return float(tau) if np.isfinite(tau) else 0.0


def spearman_rho(scores: Sequence[float], targets: Sequence[float]) -> float:
    x, y = _paired(scores, targets)
    rho = spearmanr(x, y)[0]
    return float(rho) if np.isfinite(rho) else 0.0


def kendall_null_threshold(n: int, level: float = 0.05) -> float:
    """Two-sided critical |tau| under independence (normal approximation)"""
    if n < 2:
        raise ValidationError(f"Need n >= 2, got {n}")
    sd = np.sqrt(2.0 * (2 * n + 5) / (9.0 * n * (n - 1)))
    return float(norm.ppf(1.0 - level / 2.0) * sd)
