from typing import Tuple, Optional, Sequence, Type
import logging

import numpy as np

from src.utils.exceptions import ValidationError, NTKError

logger = logging.getLogger(__name__)


def require(check: Tuple[bool, Optional[str]], error: Type[NTKError] = ValidationError):
    """
    Raise the given error type when a validator reports failure

    Args:
        check: (is_valid, error_message) pair returned by a validate_* function
        error: Exception class to raise
    """
    is_valid, message = check
    if not is_valid:
        raise error(message)


def validate_positive_int(value: int, name: str, minimum: int = 1) -> Tuple[bool, Optional[str]]:
    """
    Validate an integer argument against a lower limit

    Returns:
        Tuple of (is_valid, error_message)
    """
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        return False, f"{name} must be an integer, got {type(value).__name__}"
    if value < minimum:
        return False, f"{name} must be >= {minimum}, got {value}"
    return True, None


def validate_architecture(depth: int, width: int, n_activations: int, skips: Sequence[int],
                          input_dim: int) -> Tuple[bool, Optional[str]]:
    """
    Validate the shape of an architecture description

    Args:
        depth: Number of weight layers L
        width: Hidden width m
        n_activations: Length of the activation sequence
        skips: Skip bits, one per position 1..L-2
        input_dim: Input dimension d

    Returns:
        Tuple of (is_valid, error_message)
    """
    for value, name, minimum in ((depth, "depth", 2), (width, "width", 1), (input_dim, "input_dim", 1)):
        is_valid, error = validate_positive_int(value, name, minimum)
        if not is_valid:
            return False, error

    if n_activations != depth - 1:
        return False, f"Expected {depth - 1} activations for depth {depth}, got {n_activations}"

    if len(skips) != max(depth - 2, 0):
        return False, f"Expected {max(depth - 2, 0)} skip bits for depth {depth}, got {len(skips)}"

    bad = [s for s in skips if s not in (0, 1)]
    if bad:
        return False, f"Skip bits must be 0 or 1, got {bad}"

    return True, None


def validate_finite(values: np.ndarray, name: str) -> Tuple[bool, Optional[str]]:
    """Validate that every entry of an array is finite"""
    if not np.all(np.isfinite(values)):
        return False, f"{name} contains non-finite values"
    return True, None


def validate_unit_rows(X: np.ndarray, tol: float = 1e-8) -> Tuple[bool, Optional[str]]:
    """
    Validate that X is an N x d matrix with unit-norm rows

    Returns:
        Tuple of (is_valid, error_message); the message names the first bad row
    """
    if X.ndim != 2:
        return False, f"Input must be a 2-D array, got shape {X.shape}"
    if X.shape[0] == 0 or X.shape[1] == 0:
        return False, f"Input must be non-empty, got shape {X.shape}"

    is_valid, error = validate_finite(X, "input matrix")
    if not is_valid:
        return False, error

    deviation = np.abs(np.linalg.norm(X, axis=1) - 1.0)
    bad_rows = np.flatnonzero(deviation > tol)
    if bad_rows.size:
        row = int(bad_rows[0])
        return False, f"Row {row} is not unit-norm (|norm - 1| = {deviation[row]:.3e} > {tol:g})"

    return True, None


def validate_symmetric(M: np.ndarray, tol: float = 1e-8) -> Tuple[bool, Optional[str]]:
    """Validate that M is square and symmetric up to a relative tolerance"""
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False, f"Matrix must be square, got shape {M.shape}"

    is_valid, error = validate_finite(M, "matrix")
    if not is_valid:
        return False, error

    scale = max(float(np.max(np.abs(M))), 1.0)
    asymmetry = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asymmetry > tol * scale:
        return False, f"Matrix is not symmetric (max |M - M^T| = {asymmetry:.3e})"

    return True, None


def validate_labels(y: np.ndarray) -> Tuple[bool, Optional[str]]:
    """Validate that labels are all +1 or -1"""
    bad = np.flatnonzero(~np.isin(y, (-1.0, 1.0)))
    if bad.size:
        row = int(bad[0])
        return False, f"Label at row {row} must be +1 or -1, got {y[row]}"
    return True, None


def validate_probability(delta: float, name: str = "delta") -> Tuple[bool, Optional[str]]:
    """Validate a failure probability in the open interval (0, 1)"""
    if not 0.0 < delta < 1.0:
        return False, f"{name} must lie in (0, 1), got {delta}"
    return True, None
