"""
Synthetic datasets on the unit sphere and CSV ingestion
"""

import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from src.config import config
from src.utils.exceptions import MarginTooLargeError, ValidationError
from src.utils.validators import require, validate_labels, validate_positive_int, validate_unit_rows

logger = logging.getLogger(__name__)

# rejection sampling gives up after this many draws per requested point
MAX_DRAWS_PER_POINT = 100


class InputDistribution(Enum):
    SPHERE_UNIFORM = "sphere_uniform"
    GAUSSIAN_NORMALIZED = "gaussian_normalized"


class LabelRule(Enum):
    RANDOM_SIGN = "random_sign"
    LINEAR_TEACHER = "linear_teacher"


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic dataset"""
    n: int
    d: int
    distribution: InputDistribution = InputDistribution.SPHERE_UNIFORM
    label_rule: LabelRule = LabelRule.RANDOM_SIGN
    margin: float = 0.0
    seed: int = 0

    def __post_init__(self):
        require(validate_positive_int(self.n, "N", 1))
        require(validate_positive_int(self.d, "d", 2))
        if self.label_rule is LabelRule.LINEAR_TEACHER and not 0.0 <= self.margin < 1.0:
            raise ValidationError(f"Margin must lie in [0, 1), got {self.margin}")


@dataclass
class Dataset:
    """Unit-norm inputs X (N x d) with labels y in {-1, +1}"""
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        require(validate_unit_rows(self.X, config.kernel.unit_norm_tol))
        if self.y.shape[0] != self.X.shape[0]:
            raise ValidationError(f"Got {self.y.shape[0]} labels for {self.X.shape[0]} rows")
        require(validate_labels(self.y))

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows])


def _draw_inputs(rng: np.random.Generator, count: int, d: int, distribution: InputDistribution) -> np.ndarray:
    if distribution is InputDistribution.SPHERE_UNIFORM:
        raw = rng.standard_normal((count, d))
    else:
        raw = rng.standard_normal((count, d)) / np.sqrt(d)
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def generate(spec: SynthSpec) -> Dataset:
    """
    Draw a dataset from a synthetic recipe

    Raises:
        MarginTooLargeError: when the linear-teacher rejection loop needs more
            than 100 N draws
    """
    rng = np.random.default_rng(spec.seed)

    if spec.label_rule is LabelRule.RANDOM_SIGN:
        X = _draw_inputs(rng, spec.n, spec.d, spec.distribution)
        y = rng.choice(np.array([-1.0, 1.0]), size=spec.n)
        return Dataset(X, y)

    teacher = rng.standard_normal(spec.d)
    teacher /= np.linalg.norm(teacher)

    kept, draws = [], 0
    budget = MAX_DRAWS_PER_POINT * spec.n
    accepted = 0
    while accepted < spec.n:
        batch = min(max(2 * (spec.n - accepted), 64), budget - draws)
        if batch <= 0:
            raise MarginTooLargeError(
                f"Margin {spec.margin} rejected too many samples ({accepted}/{spec.n} accepted after {draws} draws)")
        X = _draw_inputs(rng, batch, spec.d, spec.distribution)
        draws += batch
        X = X[np.abs(X @ teacher) >= spec.margin]
        kept.append(X)
        accepted += X.shape[0]

    X = np.concatenate(kept)[:spec.n]
    y = np.where(X @ teacher >= 0.0, 1.0, -1.0)
    logger.info(f"Generated {spec.n} linear-teacher points (margin {spec.margin}) from {draws} draws")
    return Dataset(X, y)


def _bad_row(frame: pd.DataFrame) -> Optional[int]:
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy().nonzero()[0]
    return int(bad[0]) if bad.size else None


def _map_labels(raw: np.ndarray) -> np.ndarray:
    values = set(np.unique(raw).tolist())
    if values <= {0.0, 1.0} and 0.0 in values:
        logger.warning("Labels in {0, 1} found; mapping 0 -> -1 and 1 -> +1")
        return np.where(raw > 0.5, 1.0, -1.0)
    return raw


def load_csv(path: str, header: bool = False) -> Dataset:
    """
    Read a dataset with one sample per row and the label in the last column

    Rows are L2-normalised on load.

    Args:
        path: CSV file path
        header: Skip one header line

    Returns:
        Dataset with unit-norm rows

    Raises:
        ValidationError: missing file, unparseable cell, zero row or bad label
    """
    if not os.path.exists(path):
        raise ValidationError(f"Dataset file not found: {path}")

    try:
        frame = pd.read_csv(path, header=0 if header else None, dtype=str, skipinitialspace=True,
                            keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"Could not parse {path}: {e}")
    if frame.shape[1] < 2:
        raise ValidationError(f"Expected at least one feature column and a label column in {path}")
    if frame.shape[0] == 0:
        raise ValidationError(f"No rows in {path}")

    row = _bad_row(frame)
    if row is not None:
        raise ValidationError(f"Could not parse row {row} of {path}")

    values = frame.apply(pd.to_numeric).to_numpy(dtype=np.float64)
    X, labels = values[:, :-1], _map_labels(values[:, -1])

    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValidationError(f"Row {int(zero[0])} of {path} is all zeros and cannot be normalised")

    delta = float(np.max(np.abs(norms - 1.0)))
    if delta > 1e-6:
        logger.warning(f"Renormalised rows of {path}; max |norm - 1| was {delta:.3e}")
    X = X / norms[:, None]
    return Dataset(X, labels)


def write_csv(dataset: Dataset, path: str, header: bool = False):
    """Write features and label per row at full float64 precision"""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame = pd.DataFrame(np.column_stack([dataset.X, dataset.y]))
    if header:
        frame.columns = [f"x{i}" for i in range(dataset.d)] + ["y"]
    frame.to_csv(path, header=header, index=False, float_format=config.output.float_format)


def train_val_split(dataset: Dataset, val_fraction: float, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """Shuffle and split into training and validation parts"""
    if not 0.0 < val_fraction < 1.0:
        raise ValidationError(f"Validation fraction must lie in (0, 1), got {val_fraction}")
    order = np.random.default_rng(seed).permutation(dataset.n)
    cut = dataset.n - max(1, int(round(val_fraction * dataset.n)))
    return dataset.subset(order[:cut]), dataset.subset(order[cut:])
