"""
Infinite-width NTK of mixed-activation residual MLPs

Recursion over layers:
    A^(1) = G^(1) = X X^T
    G^(l)_ij    = 2 E[sigma_(l-1)(u) sigma_(l-1)(v)],   (u, v) ~ marginal of A^(l-1)
    Gdot^(l)_ij = 2 E[sigma_(l-1)'(u) sigma_(l-1)'(v)]
    A^(2) = G^(2),  A^(l) = G^(l) + alpha_(l-2) A^(l-1)  (alpha_0 = 0)

and a Hadamard-product assembly of K^(L) selected by KernelForm.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh, eigvalsh
from scipy.sparse.linalg import eigsh

from src.config import config
from src.tools.activations import ActivationKind, hermite_coefficients
from src.tools.gauss import Moment, QuadMethod, dual_expect_batch, expect_1d
from src.tools.network import Architecture
from src.utils.exceptions import NumericalError, ValidationError
from src.utils.validators import require, validate_positive_int, validate_symmetric, validate_unit_rows

logger = logging.getLogger(__name__)


class KernelForm(Enum):
    """
    Assembly of K^(L) from the layer matrices

    SKIP_AUGMENTED: A^(L) + sum_l G^(l) o prod_{p>l} (Gdot^(p) + alpha_(p-2))
    DISPLAYED:      G^(L) + sum_l G^(l) o Gdot^(l+1) o prod_{p>l+1} (Gdot^(p) + alpha_(p-2))
    CHAIN_RULE:     A^(L) + sum_l A^(l) o Gdot^(l+1) o prod_{p>l+1} (Gdot^(p) + alpha_(p-2))

    All three agree when every skip is off. CHAIN_RULE is the limit of the
    kernel_matched finite network.
    """
    SKIP_AUGMENTED = "skip_augmented"
    DISPLAYED = "displayed"
    CHAIN_RULE = "chain_rule"


@dataclass
class KernelStack:
    """Layer matrices of the recursion plus the assembled kernel"""
    G: List[np.ndarray]
    Gdot: List[np.ndarray]
    A: List[np.ndarray]
    K: np.ndarray
    alphas: Tuple[float, ...] = field(default_factory=tuple)
    form: KernelForm = KernelForm.SKIP_AUGMENTED

    @property
    def depth(self) -> int:
        return len(self.G)

    @property
    def n_points(self) -> int:
        return int(self.K.shape[0])

    def g(self, layer: int) -> np.ndarray:
        return self.G[layer - 1]

    def gdot(self, layer: int) -> np.ndarray:
        return self.Gdot[layer - 2]

    def a(self, layer: int) -> np.ndarray:
        return self.A[layer - 1]


def _assemble(G: List[np.ndarray], Gdot: List[np.ndarray], A: List[np.ndarray], alphas: Tuple[float, ...],
              depth: int, form: KernelForm) -> np.ndarray:
    L = depth
    lead = G[L - 1] if form is KernelForm.DISPLAYED else A[L - 1]
    K = lead.copy()
    running = np.ones_like(K)

    for layer in range(L - 1, 0, -1):
        gdot_next = Gdot[layer - 1]
        shifted = gdot_next + alphas[layer - 1]
        if form is KernelForm.SKIP_AUGMENTED:
            running = running * shifted
            K += G[layer - 1] * running
        else:
            base = A[layer - 1] if form is KernelForm.CHAIN_RULE else G[layer - 1]
            K += base * gdot_next * running
            running = running * shifted

    return 0.5 * (K + K.T)


def assemble_ntk(stack: KernelStack, depth: Optional[int] = None, form: Optional[KernelForm] = None) -> np.ndarray:
    """
    Assemble K for the network truncated to `depth` layers

    Every layer matrix up to `depth` depends only on the truncated network,
    so one deep stack serves every shorter depth.
    """
    depth = depth or stack.depth
    if not 2 <= depth <= stack.depth:
        raise ValidationError(f"Depth must lie in [2, {stack.depth}], got {depth}")
    return _assemble(stack.G, stack.Gdot, stack.A, stack.alphas, depth, form or stack.form)


def repair_psd(M: np.ndarray, clip_tol: float = None, fail_tol: float = None) -> np.ndarray:
    """
    Clip slightly negative eigenvalues of a Gram matrix

    Eigenvalues below -clip_tol * trace/N are set to zero; anything below
    -fail_tol * trace/N raises NumericalError. Returns M unchanged when it is
    already PSD to within clip_tol.
    """
    clip_tol = config.kernel.psd_clip_tol if clip_tol is None else clip_tol
    fail_tol = config.kernel.psd_fail_tol if fail_tol is None else fail_tol
    n = M.shape[0]
    scale = max(float(np.trace(M)) / n, np.finfo(float).tiny)

    values, vectors = eigh(M)
    if values[0] >= -clip_tol * scale:
        return M
    if values[0] < -fail_tol * scale:
        raise NumericalError(f"Gram matrix is not PSD: min eigenvalue {values[0]:.3e} < {-fail_tol * scale:.3e}")

    logger.warning(f"Clipping negative eigenvalues (min {values[0]:.3e}) of a {n}x{n} Gram matrix")
    values = np.where(values < -clip_tol * scale, 0.0, values)
    repaired = (vectors * values) @ vectors.T
    return 0.5 * (repaired + repaired.T)


def _pair_values(kind: ActivationKind, a, b, c, derivative: bool, quad_order: int, method: QuadMethod,
                 threads: int) -> np.ndarray:
    if threads <= 1 or a.shape[0] < 2 * threads:
        return dual_expect_batch(kind, a, b, c, derivative, quad_order, method)

    bounds = np.linspace(0, a.shape[0], threads + 1).astype(int)
    parts = [slice(bounds[i], bounds[i + 1]) for i in range(threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(
            lambda s: dual_expect_batch(kind, a[s], b[s], c[s], derivative, quad_order, method), parts))
    return np.concatenate(results)


def layer_gram(prev: np.ndarray, kind: ActivationKind, derivative: bool = False, quad_order: int = None,
               method: QuadMethod = QuadMethod.AUTO, threads: int = None) -> np.ndarray:
    """
    2 E[f(u) f(v)] over the 2 x 2 marginals of a covariance matrix

    Args:
        prev: Covariance A^(l-1), assumed PSD
        kind: Activation sigma_(l-1)
        derivative: Use sigma' (Gdot) instead of sigma (G)
    """
    n = prev.shape[0]
    rows, cols = np.triu_indices(n)
    diag = np.clip(np.diag(prev), 0.0, None)
    a, b = diag[rows], diag[cols]
    bound = np.sqrt(a * b)
    c = np.clip(prev[rows, cols], -bound, bound)

    values = _pair_values(kind, a, b, c, derivative, quad_order, method, threads or config.kernel.threads)
    out = np.empty((n, n))
    out[rows, cols] = values
    out[cols, rows] = values
    return 2.0 * out


def _check_kernel(K: np.ndarray):
    n = K.shape[0]
    scale = max(float(np.trace(K)) / n, np.finfo(float).tiny)
    smallest = float(eigvalsh(K, subset_by_index=[0, 0])[0])
    if smallest < -config.kernel.psd_fail_tol * scale:
        raise NumericalError(f"Assembled kernel is not PSD: min eigenvalue {smallest:.3e}")
    if smallest < -1e-8 * scale:
        logger.warning(f"Assembled kernel has a small negative eigenvalue {smallest:.3e}")


def ntk_infinite(X: np.ndarray, arch: Architecture, quad_order: int = None,
                 method: QuadMethod = QuadMethod.AUTO, form: KernelForm = KernelForm.SKIP_AUGMENTED,
                 threads: int = None) -> KernelStack:
    """
    Limiting NTK of an architecture on unit-norm inputs

    Args:
        X: N x d matrix with unit-norm rows
        arch: Network architecture (its width is ignored)
        quad_order: Gauss-Hermite order for smooth activations
        method: Gaussian expectation method
        form: Hadamard assembly of K
        threads: Worker threads for the entry computations

    Returns:
        KernelStack with G^(1..L), Gdot^(2..L), A^(1..L) and K^(L)

    Raises:
        ValidationError: shape mismatch, non-unit rows or too many points
        NumericalError: PSD repair failure
    """
    X = np.asarray(X, dtype=np.float64)
    require(validate_unit_rows(X, config.kernel.unit_norm_tol))
    if X.shape[1] != arch.input_dim:
        raise ValidationError(f"Input dimension {X.shape[1]} does not match architecture ({arch.input_dim})")
    if X.shape[0] > config.kernel.max_points:
        raise ValidationError(f"N = {X.shape[0]} exceeds the dense kernel limit {config.kernel.max_points}")
    if quad_order is not None:
        require(validate_positive_int(quad_order, "quad_order", 2))

    first = X @ X.T
    first = 0.5 * (first + first.T)
    G, A, Gdot = [first], [first], []
    alphas = tuple(arch.alpha(i) for i in range(arch.depth - 1))

    for layer in range(2, arch.depth + 1):
        kind = arch.activation(layer - 1)
        marginal = repair_psd(A[-1])
        g = layer_gram(marginal, kind, False, quad_order, method, threads)
        gdot = layer_gram(marginal, kind, True, quad_order, method, threads)
        G.append(g)
        Gdot.append(gdot)
        A.append(g + alphas[layer - 2] * A[-1] if layer >= 3 else g.copy())
        logger.debug(f"Layer {layer}: {kind} diag(G) mean {np.mean(np.diag(g)):.6g}")

    K = _assemble(G, Gdot, A, alphas, arch.depth, form)
    _check_kernel(K)
    logger.info(f"Built {form.value} NTK for {arch.encode()} on N={X.shape[0]}")
    return KernelStack(G=G, Gdot=Gdot, A=A, K=K, alphas=alphas, form=form)


def ntk_diagonal(arch: Architecture, quad_order: int = None, form: KernelForm = KernelForm.SKIP_AUGMENTED,
                 method: QuadMethod = QuadMethod.AUTO) -> float:
    """
    Shared diagonal entry K_ii for unit-norm inputs

    Only 1-D expectations are needed, so trace-based scores cost O(L).
    """
    A = [np.ones((1, 1))]
    G, Gdot = [np.ones((1, 1))], []
    alphas = tuple(arch.alpha(i) for i in range(arch.depth - 1))

    for layer in range(2, arch.depth + 1):
        kind = arch.activation(layer - 1)
        variance = float(A[-1][0, 0])
        g = 2.0 * expect_1d(kind, variance, Moment.SQUARE, quad_order, method)
        gdot = 2.0 * expect_1d(kind, variance, Moment.DERIV_SQUARE, quad_order, method)
        G.append(np.full((1, 1), g))
        Gdot.append(np.full((1, 1), gdot))
        A.append(G[-1] + alphas[layer - 2] * A[-1] if layer >= 3 else G[-1].copy())

    return float(_assemble(G, Gdot, A, alphas, arch.depth, form)[0, 0])


def hermite_kernel_layer2(X: np.ndarray, kind: ActivationKind, max_order: int, quad_order: int = None) -> np.ndarray:
    """
    Truncated Hermite series 2 sum_{s<=S} mu_s^2 (X X^T)^{os} of G^(2)

    (X X^T)^{o0} is the all-ones matrix.
    """
    require(validate_positive_int(max_order, "S", 1))
    X = np.asarray(X, dtype=np.float64)
    require(validate_unit_rows(X, config.kernel.unit_norm_tol))

    mu = hermite_coefficients(kind, max_order, quad_order)
    gram = np.clip(X @ X.T, -1.0, 1.0)
    out = np.zeros_like(gram)
    power = np.ones_like(gram)
    for s in range(max_order + 1):
        out += mu[s] ** 2 * power
        power = power * gram
    return 2.0 * out


def min_eigenvalue(M: np.ndarray) -> float:
    """
    Smallest eigenvalue of a symmetric matrix

    Dense decomposition up to the configured size limit, Lanczos beyond it.
    """
    M = np.asarray(M, dtype=np.float64)
    require(validate_symmetric(M, config.kernel.symmetry_tol))
    sym = 0.5 * (M + M.T)
    if sym.shape[0] <= config.kernel.max_points:
        return float(eigvalsh(sym, subset_by_index=[0, 0])[0])
    return float(eigsh(sym, k=1, which="SA", return_eigenvectors=False)[0])


def trace_over_d(M: np.ndarray, d: int) -> float:
    """(1/d) sum_i M_ii"""
    require(validate_positive_int(d, "d", 1))
    return float(np.trace(M)) / d


def frobenius(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, "fro"))
