import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from src.config import config
from src.tools.network import (
    Architecture,
    InitConvention,
    Params,
    backward_deltas,
    forward_batch,
    init,
)
from src.utils.datasets import Dataset
from src.utils.exceptions import DivergenceError, ValidationError
from src.utils.validators import require, validate_positive_int

logger = logging.getLogger(__name__)


class TrainMode(Enum):
    """
    ALGORITHM1: one pass in data order, returns a uniformly drawn stored iterate
    PRACTICAL: several shuffled epochs, returns the final iterate
    """
    ALGORITHM1 = "algorithm1"
    PRACTICAL = "practical"


@dataclass
class TrainResult:
    params: Params
    loss_trace: np.ndarray
    mode: TrainMode
    gamma: float
    epochs: int
    selected_iterate: Optional[int] = None
    metadata: dict = field(default_factory=dict)


def cross_entropy(z: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Logistic loss log(1 + exp(-z)), stable for large |z|"""
    out = np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def cross_entropy_grad(z: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """d/dz log(1 + exp(-z)) = -1 / (1 + exp(z))"""
    out = -expit(-np.asarray(z, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def predict(params: Params, arch: Architecture, X: np.ndarray) -> np.ndarray:
    out, _ = forward_batch(params, arch, X)
    return out


def evaluate_accuracy(params: Params, arch: Architecture, data: Dataset) -> float:
    """Fraction of samples with sign(f(x)) == y (sign(0) counts as +1)"""
    outputs = predict(params, arch, data.X)
    if not np.all(np.isfinite(outputs)):
        return 0.0
    predicted = np.where(outputs >= 0.0, 1.0, -1.0)
    return float(np.mean(predicted == data.y))


class SGDTrainer:
    """
    Constant-step SGD on the logistic loss of y f(x)

    Samples are visited one at a time; the step is
    W <- W - gamma * l'(y f(x)) y grad_W f(x).
    """

    def __init__(
        self,
        gamma: float,
        mode: TrainMode = TrainMode.PRACTICAL,
        epochs: int = 1,
        seed: int = 0,
        convention: InitConvention = InitConvention.PAPER_INIT,
        divergence_threshold: float = None
    ):
        if not np.isfinite(gamma) or gamma < 0.0:
            raise ValidationError(f"Step size must be finite and >= 0, got {gamma}")
        require(validate_positive_int(epochs, "epochs", 1))
        self.gamma = float(gamma)
        self.mode = mode
        self.epochs = 1 if mode is TrainMode.ALGORITHM1 else epochs
        self.seed = seed
        self.convention = convention
        self.divergence_threshold = divergence_threshold or config.network.divergence_threshold

    def _step(self, params: Params, arch: Architecture, x: np.ndarray, label: float, iteration: int) -> float:
        out, cache = forward_batch(params, arch, x[None, :])
        f = float(out[0])
        if not np.isfinite(f) or abs(f) > self.divergence_threshold:
            raise DivergenceError(f"Output {f:.3e} exceeded the divergence threshold at iteration {iteration}",
                                  iteration=iteration)

        margin = label * f
        loss = cross_entropy(margin)
        if not np.isfinite(loss):
            raise DivergenceError(f"Non-finite loss at iteration {iteration}", iteration=iteration)

        scale = self.gamma * cross_entropy_grad(margin) * label
        if scale != 0.0:
            deltas = backward_deltas(params, arch, cache)
            for layer in range(1, arch.depth):
                params.weights[layer - 1] -= scale * np.outer(deltas[layer - 1][0], cache.features[layer - 1][0])
            params.weights[-1] -= scale * cache.features[-1][0]
        return loss

    def train(self, arch: Architecture, data: Dataset, params: Optional[Params] = None) -> TrainResult:
        """
        Run SGD from a fresh initialisation (or a copy of `params`)

        Raises:
            DivergenceError: with the 1-based iteration that blew up
        """
        if data.d != arch.input_dim:
            raise ValidationError(f"Data dimension {data.d} does not match architecture input_dim {arch.input_dim}")

        current = params.copy() if params is not None else init(arch, self.convention, self.seed)
        rng = np.random.default_rng([self.seed, 1])
        losses = []

        if self.mode is TrainMode.ALGORITHM1:
            # the returned iterate index is drawn before the pass; only that iterate is stored
            chosen = int(rng.integers(1, data.n + 1))
            selected = None
            for i in range(1, data.n + 1):
                if i == chosen:
                    selected = current.copy()
                losses.append(self._step(current, arch, data.X[i - 1], data.y[i - 1], i))
            logger.info(f"Algorithm-1 pass finished for {arch.encode()}; returning iterate {chosen}")
            return TrainResult(selected, np.array(losses), self.mode, self.gamma, 1, selected_iterate=chosen)

        iteration = 0
        for epoch in range(self.epochs):
            for idx in rng.permutation(data.n):
                iteration += 1
                losses.append(self._step(current, arch, data.X[idx], data.y[idx], iteration))
            logger.debug(f"Epoch {epoch + 1}/{self.epochs}: mean loss {np.mean(losses[-data.n:]):.4f}")

        logger.info(f"Trained {arch.encode()} for {self.epochs} epochs (final mean loss {np.mean(losses[-data.n:]):.4f})")
        return TrainResult(current, np.array(losses), self.mode, self.gamma, self.epochs)


def sgd_train(arch: Architecture, data: Dataset, gamma: float, seed: int = 0,
              mode: TrainMode = TrainMode.PRACTICAL, epochs: int = 1,
              convention: InitConvention = InitConvention.PAPER_INIT) -> Tuple[Params, np.ndarray]:
    """
    Convenience function to train one network

    Returns:
        (trained Params, per-step loss trace)
    """
    trainer = SGDTrainer(gamma, mode, epochs, seed, convention)
    result = trainer.train(arch, data)
    return result.params, result.loss_trace
