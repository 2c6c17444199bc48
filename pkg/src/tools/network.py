"""
Finite-width residual MLP with mixed activations

f_0 = x, f_1 = sigma_1(W_1 x), f_l = sigma_l(W_l f_(l-1)) + alpha_(l-1) f_(l-1)
for 2 <= l <= L-1, and f = <W_L, f_(L-1)>.

Two parameterisations are exposed. paper_init draws N(0, 1/m) weights and
evaluates the recursion as written; kernel_matched draws N(0, 1) weights and
scales every activation output by sqrt(2/m), so hidden pre-activations have
the variances of the infinite-width recursion in kernel.py.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from src.config import config
from src.tools.activations import ActivationKind, ActivationTag, _value, _derivative
from src.utils.exceptions import ValidationError
from src.utils.validators import require, validate_architecture, validate_unit_rows

logger = logging.getLogger(__name__)


class InitConvention(Enum):
    """Weight initialisation and forward scaling convention"""
    PAPER_INIT = "paper_init"
    KERNEL_MATCHED = "kernel_matched"


@dataclass(frozen=True)
class Architecture:
    """
    Depth, width, per-layer activations and skip bits of a network

    activations holds sigma_1..sigma_(L-1); skips holds alpha_1..alpha_(L-2).
    """
    depth: int
    width: int
    activations: Tuple[ActivationKind, ...]
    skips: Tuple[int, ...]
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "skips", tuple(int(s) for s in self.skips))
        require(validate_architecture(self.depth, self.width, len(self.activations), self.skips, self.input_dim))

    def alpha(self, index: int) -> float:
        """Skip coefficient alpha_index, with alpha_0 = 0"""
        if index == 0:
            return 0.0
        if not 1 <= index <= len(self.skips):
            raise ValidationError(f"Skip index {index} out of range for depth {self.depth}")
        return float(self.skips[index - 1])

    def activation(self, layer: int) -> ActivationKind:
        """Activation sigma_layer (1-based)"""
        return self.activations[layer - 1]

    @property
    def eta(self) -> float:
        slopes = [k.eta for k in self.activations if k.tag is ActivationTag.LEAKY_RELU]
        return max(slopes) if slopes else 0.0

    @property
    def n_params(self) -> int:
        m = self.width
        return m * self.input_dim + (self.depth - 2) * m * m + m

    @property
    def activation_code(self) -> str:
        return "-".join(k.name for k in self.activations)

    @property
    def skip_code(self) -> str:
        return "".join(str(s) for s in self.skips)

    def encode(self) -> str:
        return f"{self.activation_code}|{self.skip_code}"

    def prefix(self, depth: int) -> "Architecture":
        """The same network truncated to a smaller depth"""
        if not 2 <= depth <= self.depth:
            raise ValidationError(f"Prefix depth must lie in [2, {self.depth}], got {depth}")
        return Architecture(depth, self.width, self.activations[:depth - 1], self.skips[:max(depth - 2, 0)],
                            self.input_dim)

    @classmethod
    def from_codes(cls, activation_code: str, skip_code: str, width: int, input_dim: int,
                   eta: float = 0.1, depth: Optional[int] = None) -> "Architecture":
        """
        Parse the '-'-joined activation tags and the skip bit string

        Args:
            activation_code: e.g. "relu-tanh-swish"
            skip_code: e.g. "01"; empty for depth 2
            width: Hidden width m
            input_dim: Input dimension d
            eta: LeakyReLU slope
            depth: Optional explicit depth, checked against the codes
        """
        kinds = tuple(ActivationKind.parse(tag, eta) for tag in activation_code.split("-") if tag)
        bad = [ch for ch in skip_code if ch not in "01"]
        if bad:
            raise ValidationError(f"Skip code must contain only 0/1, got '{skip_code}'")
        skips = tuple(int(ch) for ch in skip_code)
        return cls(depth if depth is not None else len(kinds) + 1, width, kinds, skips, input_dim)

    @classmethod
    def uniform(cls, kind: ActivationKind, depth: int, width: int, input_dim: int,
                skip: int = 0) -> "Architecture":
        """Single activation everywhere with a constant skip bit"""
        return cls(depth, width, (kind,) * (depth - 1), (skip,) * max(depth - 2, 0), input_dim)


def layer_shapes(arch: Architecture) -> List[Tuple[int, ...]]:
    m = arch.width
    shapes = [(m, arch.input_dim)] + [(m, m)] * (arch.depth - 2)
    return shapes + [(m,)]


@dataclass
class Params:
    """Weights W_1..W_L of one network"""
    weights: List[np.ndarray]
    convention: InitConvention = InitConvention.PAPER_INIT
    seed: Optional[int] = None

    @property
    def n_params(self) -> int:
        return int(sum(w.size for w in self.weights))

    def check(self, arch: Architecture):
        expected = layer_shapes(arch)
        actual = [tuple(w.shape) for w in self.weights]
        if actual != expected:
            raise ValidationError(f"Weight shapes {actual} do not match architecture {expected}")

    def flatten(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    @classmethod
    def from_flat(cls, flat: np.ndarray, arch: Architecture,
                  convention: InitConvention = InitConvention.PAPER_INIT, seed: Optional[int] = None) -> "Params":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != arch.n_params:
            raise ValidationError(f"Expected {arch.n_params} parameters, got {flat.size}")
        weights, offset = [], 0
        for shape in layer_shapes(arch):
            size = int(np.prod(shape))
            weights.append(flat[offset:offset + size].reshape(shape).copy())
            offset += size
        return cls(weights, convention, seed)

    def copy(self) -> "Params":
        return Params([w.copy() for w in self.weights], self.convention, self.seed)


@dataclass
class ForwardCache:
    """Per-layer pre-activations h_1..h_(L-1) and features f_0..f_(L-1) for a batch"""
    pre_activations: List[np.ndarray] = field(default_factory=list)
    features: List[np.ndarray] = field(default_factory=list)
    scale: float = 1.0


def init(arch: Architecture, convention: InitConvention = InitConvention.PAPER_INIT,
         seed: int = 0) -> Params:
    """
    Draw Gaussian weights for an architecture

    paper_init uses N(0, 1/m) entries; kernel_matched uses N(0, 1) entries.
    """
    rng = np.random.default_rng(seed)
    std = 1.0 / np.sqrt(arch.width) if convention is InitConvention.PAPER_INIT else 1.0
    weights = [std * rng.standard_normal(shape) for shape in layer_shapes(arch)]
    return Params(weights, convention, seed)


def feature_scale(arch: Architecture, convention: InitConvention) -> float:
    if convention is InitConvention.KERNEL_MATCHED:
        return float(np.sqrt(2.0 / arch.width))
    return 1.0


def _as_batch(arch: Architecture, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ValidationError(f"Input shape {X.shape} does not match input_dim {arch.input_dim}")
    return X


def forward_batch(params: Params, arch: Architecture, X: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """
    Forward pass over the rows of X

    Returns:
        (outputs of shape (N,), cache of per-layer quantities)
    """
    params.check(arch)
    X = _as_batch(arch, X)
    scale = feature_scale(arch, params.convention)
    W = params.weights

    cache = ForwardCache(scale=scale)
    cache.features.append(X)
    h = X @ W[0].T
    a = scale * _value(arch.activation(1), h)
    cache.pre_activations.append(h)
    cache.features.append(a)

    for layer in range(2, arch.depth):
        h = a @ W[layer - 1].T
        a = scale * _value(arch.activation(layer), h) + arch.alpha(layer - 1) * a
        cache.pre_activations.append(h)
        cache.features.append(a)

    return a @ W[-1], cache


def forward(params: Params, arch: Architecture, x: np.ndarray) -> Tuple[float, ForwardCache]:
    """Forward pass for a single input vector"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"forward expects a single vector, got shape {x.shape}")
    out, cache = forward_batch(params, arch, x)
    return float(out[0]), cache


def backward_deltas(params: Params, arch: Architecture, cache: ForwardCache) -> List[np.ndarray]:
    """
    Reverse-mode sensitivities delta_l = df/dh_l for l = 1..L-1

    The skip path adds alpha_(l-1) times the upstream gradient to df/df_(l-1).
    """
    W = params.weights
    n = cache.features[0].shape[0]
    upstream = np.broadcast_to(W[-1], (n, arch.width)).copy()
    deltas = [None] * (arch.depth - 1)

    for layer in range(arch.depth - 1, 0, -1):
        h = cache.pre_activations[layer - 1]
        delta = upstream * (cache.scale * _derivative(arch.activation(layer), h))
        deltas[layer - 1] = delta
        if layer > 1:
            upstream = delta @ W[layer - 1] + arch.alpha(layer - 1) * upstream

    return deltas


def layerwise_factors(params: Params, arch: Architecture, X: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Per-layer (input features, output sensitivities) pairs

    The gradient of f(x_i) with respect to W_l is the outer product of the
    pair's i-th rows, so JJ^T is the sum over pairs of (F F^T) * (B B^T).
    """
    _, cache = forward_batch(params, arch, X)
    deltas = backward_deltas(params, arch, cache)
    pairs = [(cache.features[layer - 1], deltas[layer - 1]) for layer in range(1, arch.depth)]
    n = cache.features[0].shape[0]
    pairs.append((cache.features[-1], np.ones((n, 1))))
    return pairs


def per_sample_jacobians(params: Params, arch: Architecture, X: np.ndarray) -> np.ndarray:
    """Flattened gradients of f(x_i), one row per sample, in Params.flatten order"""
    blocks = []
    for features, sensitivities in layerwise_factors(params, arch, X):
        if sensitivities.shape[1] == 1:
            blocks.append(features * sensitivities)
        else:
            outer = sensitivities[:, :, None] * features[:, None, :]
            blocks.append(outer.reshape(outer.shape[0], -1))
    return np.concatenate(blocks, axis=1)


def jacobian(params: Params, arch: Architecture, x: np.ndarray) -> np.ndarray:
    """Exact gradient of f(x) with respect to all weights"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"jacobian expects a single vector, got shape {x.shape}")
    return per_sample_jacobians(params, arch, x)[0]


def ntk_empirical(params: Params, arch: Architecture, X: np.ndarray, method: str = "layerwise") -> np.ndarray:
    """
    Empirical NTK JJ^T

    Args:
        method: "layerwise" (Hadamard sum of per-layer Grams) or "direct"
            (explicit N x P Jacobian)
    """
    X = _as_batch(arch, X)
    require(validate_unit_rows(X, config.kernel.unit_norm_tol))

    if method == "direct":
        J = per_sample_jacobians(params, arch, X)
        K = J @ J.T
    elif method == "layerwise":
        K = np.zeros((X.shape[0], X.shape[0]))
        for features, sensitivities in layerwise_factors(params, arch, X):
            K += (features @ features.T) * (sensitivities @ sensitivities.T)
    else:
        raise ValidationError(f"Unknown empirical NTK method '{method}'")

    return 0.5 * (K + K.T)


def grad_norm_diag(params: Params, arch: Architecture, X: np.ndarray, batch_size: int = None) -> np.ndarray:
    """
    Squared gradient norms ||grad_W f(x_i)||^2 without forming the Gram matrix

    Memory is bounded by batch_size rows at a time.
    """
    X = _as_batch(arch, X)
    require(validate_unit_rows(X, config.kernel.unit_norm_tol))
    batch_size = batch_size or config.network.batch_size

    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], batch_size):
        rows = slice(start, start + batch_size)
        total = np.zeros(X[rows].shape[0])
        for features, sensitivities in layerwise_factors(params, arch, X[rows]):
            total += np.einsum("ij,ij->i", features, features) * np.einsum("ij,ij->i", sensitivities, sensitivities)
        out[rows] = total
    return out
