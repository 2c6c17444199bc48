"""
Curve experiments: smallest NTK eigenvalue against depth, and the distance
between finite-width and limiting kernels against width
"""

import logging
from enum import Enum
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.tools.activations import ActivationKind
from src.tools.kernel import KernelForm, assemble_ntk, frobenius, min_eigenvalue, ntk_infinite, trace_over_d
from src.tools.network import Architecture, InitConvention, init, ntk_empirical
from src.utils.datasets import SynthSpec, generate
from src.utils.exceptions import ValidationError
from src.utils.validators import require, validate_positive_int

logger = logging.getLogger(__name__)

SWEEP_MIN_DEPTH = 3
SWEEP_MAX_DEPTH = 12


class SkipConfig(Enum):
    NONE = "none"
    ALL = "all"
    FIRST_HALF = "first_half"
    SECOND_HALF = "second_half"

    @classmethod
    def parse(cls, name: str) -> "SkipConfig":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(f"Unknown skip config '{name}' (expected one of: {', '.join(c.value for c in cls)})")


def skip_vector(skip_config: SkipConfig, depth: int) -> Tuple[int, ...]:
    """
    Skip bits alpha_1..alpha_(L-2) for a named configuration

    The halves switch on floor((L-2)/2) leading or trailing positions.
    """
    n = max(depth - 2, 0)
    half = n // 2
    if skip_config is SkipConfig.NONE:
        return (0,) * n
    if skip_config is SkipConfig.ALL:
        return (1,) * n
    if skip_config is SkipConfig.FIRST_HALF:
        return tuple(1 if i < half else 0 for i in range(n))
    return tuple(1 if i >= n - half else 0 for i in range(n))


def _kernel_row(kind: ActivationKind, skip_config: SkipConfig, depth: int, K: np.ndarray, d: int) -> dict:
    return {
        "kind": kind.name,
        "skip_config": skip_config.value,
        "depth": depth,
        "lambda_min": min_eigenvalue(K),
        "trace_over_d": trace_over_d(K, d),
        "frobenius": frobenius(K),
    }


def depth_sweep(
    kinds: Sequence[ActivationKind],
    skip_configs: Sequence[SkipConfig],
    depths: Iterable[int],
    n: int = 64,
    d: int = 16,
    seed: int = 0,
    quad_order: int = None,
    form: KernelForm = KernelForm.SKIP_AUGMENTED,
    threads: int = None
) -> pd.DataFrame:
    """
    Smallest eigenvalue of the limiting NTK across depths

    One row per (kind, skip_config, depth) on a fixed sphere-uniform sample.
    For none/all the deepest stack is built once and shallower kernels are
    re-assembled from its prefix.
    """
    depths = sorted(set(int(L) for L in depths))
    if not depths or depths[0] < SWEEP_MIN_DEPTH or depths[-1] > SWEEP_MAX_DEPTH:
        raise ValidationError(f"Depths must lie in [{SWEEP_MIN_DEPTH}, {SWEEP_MAX_DEPTH}], got {depths}")
    require(validate_positive_int(n, "N", 1))

    X = generate(SynthSpec(n, d, seed=seed)).X
    rows: List[dict] = []

    for kind in kinds:
        for skip_config in skip_configs:
            deepest = depths[-1]
            if skip_config in (SkipConfig.NONE, SkipConfig.ALL):
                arch = Architecture(deepest, 1, (kind,) * (deepest - 1), skip_vector(skip_config, deepest), d)
                stack = ntk_infinite(X, arch, quad_order, form=form, threads=threads)
                for L in depths:
                    rows.append(_kernel_row(kind, skip_config, L, assemble_ntk(stack, L, form), d))
            else:
                for L in depths:
                    arch = Architecture(L, 1, (kind,) * (L - 1), skip_vector(skip_config, L), d)
                    stack = ntk_infinite(X, arch, quad_order, form=form, threads=threads)
                    rows.append(_kernel_row(kind, skip_config, L, stack.K, d))
            logger.info(f"Swept {kind.name}/{skip_config.value} over depths {depths[0]}..{depths[-1]}")

    return pd.DataFrame(rows, columns=["kind", "skip_config", "depth", "lambda_min", "trace_over_d", "frobenius"])


def convergence_study(
    kind: ActivationKind,
    depth: int,
    skip: int,
    widths: Sequence[int],
    seeds: Sequence[int],
    n: int = 16,
    d: int = 8,
    data_seed: int = 0,
    quad_order: int = None
) -> pd.DataFrame:
    """
    Relative Frobenius distance between the kernel_matched empirical NTK and
    the chain-rule limiting NTK, one row per (width, seed)
    """
    if not widths or not seeds:
        raise ValidationError("At least one width and one seed are required")

    X = generate(SynthSpec(n, d, seed=data_seed)).X
    skips = (int(skip),) * max(depth - 2, 0)
    limit_arch = Architecture(depth, 1, (kind,) * (depth - 1), skips, d)
    K_inf = ntk_infinite(X, limit_arch, quad_order, form=KernelForm.CHAIN_RULE).K
    scale = frobenius(K_inf)

    rows = []
    for m in widths:
        require(validate_positive_int(m, "width", 1))
        arch = Architecture(depth, int(m), limit_arch.activations, skips, d)
        for seed in seeds:
            params = init(arch, InitConvention.KERNEL_MATCHED, int(seed))
            K_emp = ntk_empirical(params, arch, X)
            rows.append({
                "kind": kind.name,
                "depth": depth,
                "skip": int(skip),
                "width": int(m),
                "seed": int(seed),
                "rel_error": frobenius(K_emp - K_inf) / scale,
            })
        logger.info(f"Width {m}: mean relative error {np.mean([r['rel_error'] for r in rows[-len(seeds):]]):.4f}")

    return pd.DataFrame(rows, columns=["kind", "depth", "skip", "width", "seed", "rel_error"])


def convergence_summary(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and spread of the relative error per width"""
    summary = frame.groupby("width")["rel_error"].agg(["mean", "std", "count"]).reset_index()
    return summary.rename(columns={"mean": "mean_rel_error", "std": "std_rel_error", "count": "n_seeds"})
