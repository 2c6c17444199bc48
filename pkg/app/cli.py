"""
Command-line entry point

    python app/cli.py [global flags] <kernel|sweep|bounds|search|convergence|train> [flags]
    python app/cli.py --from-manifest runs/manifest.json

Exit codes: 0 success, 2 input or domain error, 3 numerical error,
4 training divergence or failed search.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import config, configure_logging
from src.agents.search_agent import ScoreMode, SearchSpace, SkipPolicy
from src.agents.tracking_agent import RunTracker
from src.agents.trainer_agent import SGDTrainer, TrainMode, evaluate_accuracy
from src.tools.activations import ActivationKind
from src.tools.bounds import bound_report, generalization_bound, profiles_for, step_size_thm3
from src.tools.kernel import KernelForm, frobenius, min_eigenvalue, ntk_infinite, trace_over_d
from src.tools.network import Architecture
from src.utils.datasets import Dataset, InputDistribution, LabelRule, SynthSpec, generate, load_csv, train_val_split
from src.utils.exceptions import (
    DivergenceError,
    DomainError,
    NTKError,
    NumericalError,
    SearchError,
    ValidationError,
)
from src.utils.serialization import (
    read_json,
    write_json,
    write_manifest,
    write_matrix_binary,
    write_matrix_csv,
    write_params_binary,
    write_table_csv,
)
from src.workflows.eigen_nas_graph import run_eigen_nas_workflow
from src.workflows.experiments import SkipConfig, convergence_study, convergence_summary, depth_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGED = 4


def _split(text: str) -> List[str]:
    return [part.strip() for part in text.replace("-", ",").split(",") if part.strip()]


def parse_kinds(text: str, eta: float) -> List[ActivationKind]:
    return [ActivationKind.parse(name, eta) for name in _split(text)]


def parse_ints(text: str) -> List[int]:
    try:
        return [int(part) for part in _split(text)]
    except ValueError:
        raise ValidationError(f"Expected a comma-separated list of integers, got '{text}'")


def build_arch(args: argparse.Namespace, input_dim: int) -> Architecture:
    """Architecture from --act/--skips/--depth/--width; lengths are validated against the depth"""
    kinds = parse_kinds(args.act, args.eta)
    depth = args.depth if args.depth is not None else len(kinds) + 1
    if args.skips is None:
        skips = (0,) * max(depth - 2, 0)
    else:
        if any(ch not in "01" for ch in args.skips):
            raise ValidationError(f"--skips must be a 0/1 string, got '{args.skips}'")
        skips = tuple(int(ch) for ch in args.skips)
    return Architecture(depth, args.width, tuple(kinds), skips, input_dim)


def load_data(args: argparse.Namespace, n: Optional[int] = None) -> Dataset:
    """--data CSV if given, otherwise a synthetic sample"""
    if getattr(args, "data", None):
        return load_csv(args.data, header=args.header)
    spec = SynthSpec(
        n=n or args.n,
        d=args.d,
        distribution=InputDistribution(args.distribution),
        label_rule=LabelRule(args.labels),
        margin=args.margin,
        seed=args.seed,
    )
    return generate(spec)


def _output_dir(args: argparse.Namespace) -> str:
    return args.output_dir or config.output.output_dir


def _manifest_arguments(args: argparse.Namespace) -> Dict:
    skip = {"func", "from_manifest"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_kernel(args: argparse.Namespace) -> int:
    data = load_data(args)
    arch = build_arch(args, data.d)
    form = KernelForm(args.form)
    stack = ntk_infinite(data.X, arch, args.quad_order, form=form, threads=args.threads)
    K = stack.K

    out = _output_dir(args)
    write_matrix_csv(K, f"{out}/kernel.csv")
    write_matrix_binary(K, f"{out}/kernel.bin", arch.depth)
    summary = {
        "architecture": arch.encode(),
        "form": form.value,
        "n": data.n,
        "d": data.d,
        "lambda_min": min_eigenvalue(K),
        "trace_over_d": trace_over_d(K, data.d),
        "frobenius": frobenius(K),
    }
    write_json(summary, f"{out}/kernel.json")
    write_manifest("kernel", _manifest_arguments(args), out)
    print(f"lambda_min={summary['lambda_min']:.10g} trace/d={summary['trace_over_d']:.10g} "
          f"frobenius={summary['frobenius']:.10g}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    kinds = parse_kinds(args.kinds, args.eta)
    skip_configs = [SkipConfig.parse(name) for name in args.skip_configs.split(",") if name.strip()]
    frame = depth_sweep(kinds, skip_configs, range(args.min_depth, args.max_depth + 1), args.n, args.d,
                        args.seed, args.quad_order, KernelForm(args.form), args.threads)

    out = _output_dir(args)
    write_table_csv(frame, f"{out}/sweep.csv")
    write_manifest("sweep", _manifest_arguments(args), out)
    print(f"Wrote {len(frame)} rows to {out}/sweep.csv")
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    # a --data CSV fixes N and d; otherwise the bounds need no sample at all
    data = load_data(args) if args.data or args.with_kernel else None
    n, d = (data.n, data.d) if data is not None else (args.n, args.d)
    arch = build_arch(args, d)
    lambda_min, y = None, None
    if args.with_kernel:
        lambda_min = min_eigenvalue(ntk_infinite(data.X, arch, args.quad_order, threads=args.threads).K)
        y = data.y
        if lambda_min <= 0.0:
            logger.warning(f"Kernel is singular (lambda_min = {lambda_min:.3e}); skipping the generalization bound")
            lambda_min = None
    report = bound_report(arch, n, d, args.quad_order, lambda_min, y, args.delta)

    out = _output_dir(args)
    write_json(report.to_dict(), f"{out}/bounds.json")
    write_manifest("bounds", _manifest_arguments(args), out)
    print(f"lower={report.lower_thm1:.10g} upper={report.upper_thm1:.10g} "
          f"vacuous={report.prop4_vacuous} C2={report.c2:.6g}")
    return EXIT_OK


def cmd_search(args: argparse.Namespace) -> int:
    if args.data:
        train, val = train_val_split(load_data(args), args.val_fraction, args.seed)
    else:
        # one draw so both splits share the same linear teacher
        joint = load_data(args, n=args.n_train + args.n_val)
        train, val = joint.subset(slice(0, args.n_train)), joint.subset(slice(args.n_train, None))

    tags = tuple(k.tag for k in parse_kinds(args.kinds, args.eta))
    space = SearchSpace(args.depth, args.width, train.d, tags, SkipPolicy(args.skip_policy), args.eta)

    tracker = None
    if args.db:
        Path(args.db).parent.mkdir(parents=True, exist_ok=True)
        tracker = RunTracker(f"sqlite:///{args.db}")
    result = run_eigen_nas_workflow(
        space, train, val,
        M=args.samples,
        k=args.top_k,
        mode=ScoreMode.parse(args.mode),
        train_budget=args.budget,
        seed=args.seed,
        gamma=args.gamma,
        quad_order=args.quad_order,
        draws=args.draws,
        threads=args.threads,
        tracker=tracker
    )

    out = _output_dir(args)
    records = [c.to_record() for c in result.ranked]
    write_table_csv(pd.DataFrame(records), f"{out}/candidates.csv")
    write_json(records, f"{out}/candidates.json")
    write_json({"best": result.best.to_record(), "kendall_tau": result.kendall_tau, "run_id": result.run_id,
                "n_train": train.n, "n_val": val.n, "width": space.width}, f"{out}/best.json")
    write_manifest("search", _manifest_arguments(args), out)
    print(f"best={result.best.arch.encode()} val_accuracy={result.best.val_accuracy:.4f} "
          f"score={result.best.score:.6g}")
    return EXIT_OK


def cmd_convergence(args: argparse.Namespace) -> int:
    kind = ActivationKind.parse(args.kind, args.eta)
    frame = convergence_study(kind, args.depth or 3, args.skip, parse_ints(args.widths),
                              list(range(args.seeds)), args.n, args.d, args.seed, args.quad_order)
    summary = convergence_summary(frame)

    out = _output_dir(args)
    write_table_csv(frame, f"{out}/convergence.csv")
    write_table_csv(summary, f"{out}/convergence_summary.csv")
    write_manifest("convergence", _manifest_arguments(args), out,
                   extra={"convention": "kernel_matched", "form": KernelForm.CHAIN_RULE.value})
    for row in summary.itertuples():
        print(f"m={row.width}: mean relative error {row.mean_rel_error:.4f}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    data = load_data(args)
    arch = build_arch(args, data.d)
    profiles = profiles_for(arch, args.quad_order)

    K = None
    if args.kappa is not None or args.bound:
        K = ntk_infinite(data.X, arch, args.quad_order, threads=args.threads).K

    if args.kappa is not None:
        gamma = step_size_thm3(data.y, arch.width, data.n, args.kappa, arch.depth, profiles, K=K)
        logger.info(f"Step size from kappa={args.kappa}: gamma={gamma:.6g}")
    elif args.gamma is not None:
        gamma = args.gamma
    else:
        raise ValidationError("One of --gamma or --kappa is required")

    trainer = SGDTrainer(gamma, TrainMode(args.mode), args.epochs, args.seed)
    result = trainer.train(arch, data)
    accuracy = evaluate_accuracy(result.params, arch, data)

    out = _output_dir(args)
    write_params_binary(result.params.weights, f"{out}/params.bin")
    write_table_csv(pd.DataFrame({"step": np.arange(1, len(result.loss_trace) + 1), "loss": result.loss_trace}),
                    f"{out}/loss.csv")

    summary = {
        "architecture": arch.encode(),
        "mode": result.mode.value,
        "gamma": gamma,
        "kappa": args.kappa,
        "epochs": result.epochs,
        "selected_iterate": result.selected_iterate,
        "train_accuracy": accuracy,
        "final_loss": float(result.loss_trace[-1]),
        "gen_bound": None,
    }
    if K is not None:
        lambda_min = min_eigenvalue(K)
        if lambda_min > 0.0:
            bound = generalization_bound(lambda_min, data.y, data.n, args.delta, arch.depth, profiles)
            summary["gen_bound"] = bound.value
            summary["gen_terms"] = {"complexity": bound.complexity_term, "confidence": bound.confidence_term}
        else:
            logger.warning(f"Kernel is singular (lambda_min = {lambda_min:.3e}); no generalization bound")
        summary["lambda_min"] = lambda_min

    write_json(summary, f"{out}/train.json")
    write_manifest("train", _manifest_arguments(args), out)
    print(f"gamma={gamma:.6g} train_accuracy={accuracy:.4f} final_loss={summary['final_loss']:.6g}")
    return EXIT_OK


COMMANDS = {
    "kernel": cmd_kernel,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
    "search": cmd_search,
    "convergence": cmd_convergence,
    "train": cmd_train,
}


def _add_arch_flags(parser: argparse.ArgumentParser, act: str = "relu,relu"):
    parser.add_argument("--act", default=act, help="Comma-separated activations sigma_1..sigma_(L-1)")
    parser.add_argument("--skips", default=None, help="Skip bits alpha_1..alpha_(L-2), e.g. 101")
    parser.add_argument("--depth", type=int, default=None, help="Depth L (default: len(act) + 1)")
    parser.add_argument("--width", type=int, default=config.network.default_width, help="Hidden width m")


def _add_data_flags(parser: argparse.ArgumentParser, n: int = 64, d: int = 16):
    parser.add_argument("--data", default=None, help="CSV file (features..., label); overrides --n/--d")
    parser.add_argument("--header", action="store_true", help="CSV has a header row")
    parser.add_argument("--n", type=int, default=n, help="Number of synthetic points")
    parser.add_argument("--d", type=int, default=d, help="Input dimension")
    parser.add_argument("--distribution", default=InputDistribution.SPHERE_UNIFORM.value,
                        choices=[v.value for v in InputDistribution])
    parser.add_argument("--labels", default=LabelRule.RANDOM_SIGN.value, choices=[v.value for v in LabelRule])
    parser.add_argument("--margin", type=float, default=0.0, help="Linear-teacher margin")


def common_flags(suppress: bool = False) -> argparse.ArgumentParser:
    """
    Flags accepted both before and after the subcommand

    Subcommand copies use SUPPRESS defaults so that a flag given before the
    subcommand is not reset by the subparser.
    """
    def default(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=default(None), help="Output directory (env NTK_OUTPUT_DIR)")
    common.add_argument("--seed", type=int, default=default(0))
    common.add_argument("--quad-order", type=int, default=default(None), help="Gauss-Hermite order")
    common.add_argument("--threads", type=int, default=default(1))
    common.add_argument("--eta", type=float, default=default(0.1), help="LeakyReLU slope")
    common.add_argument("--log-level", default=default(None))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="NTK analysis and train-free architecture search for residual MLPs",
                                     parents=[common_flags()])
    parser.add_argument("--from-manifest", default=None, help="Re-run from a manifest.json")
    subparsers = parser.add_subparsers(dest="subcommand")
    shared = [common_flags(suppress=True)]

    kernel = subparsers.add_parser("kernel", help="Limiting NTK of one architecture", parents=shared)
    _add_arch_flags(kernel)
    _add_data_flags(kernel)
    kernel.add_argument("--form", default=KernelForm.SKIP_AUGMENTED.value, choices=[f.value for f in KernelForm])

    sweep = subparsers.add_parser("sweep", help="Smallest eigenvalue against depth", parents=shared)
    sweep.add_argument("--kinds", default="relu,leaky_relu,sigmoid,tanh,swish")
    sweep.add_argument("--skip-configs", default="none,all,first_half,second_half")
    sweep.add_argument("--min-depth", type=int, default=3)
    sweep.add_argument("--max-depth", type=int, default=12)
    sweep.add_argument("--n", type=int, default=64)
    sweep.add_argument("--d", type=int, default=16)
    sweep.add_argument("--form", default=KernelForm.SKIP_AUGMENTED.value, choices=[f.value for f in KernelForm])

    bounds = subparsers.add_parser("bounds", help="Eigenvalue and generalization bounds", parents=shared)
    _add_arch_flags(bounds)
    _add_data_flags(bounds)
    bounds.add_argument("--delta", type=float, default=0.05)
    bounds.add_argument("--with-kernel", action="store_true",
                        help="Compute lambda_min on data and add the generalization bound")

    search = subparsers.add_parser("search", help="Eigen-NAS search", parents=shared)
    search.add_argument("--depth", type=int, default=5)
    search.add_argument("--width", type=int, default=config.search.width)
    search.add_argument("--kinds", default="relu,leaky_relu,sigmoid,tanh,swish")
    search.add_argument("--skip-policy", default=SkipPolicy.FREE.value, choices=[p.value for p in SkipPolicy])
    search.add_argument("--samples", "-M", type=int, default=config.search.n_samples)
    search.add_argument("--top-k", "-k", type=int, default=config.search.top_k)
    search.add_argument("--mode", default=config.search.score_mode)
    search.add_argument("--budget", type=int, default=config.search.train_epochs, help="Training epochs")
    search.add_argument("--gamma", type=float, default=config.search.learning_rate)
    search.add_argument("--draws", type=int, default=config.search.score_draws)
    search.add_argument("--n-train", type=int, default=config.search.n_train)
    search.add_argument("--n-val", type=int, default=config.search.n_val)
    search.add_argument("--db", default=None, help="SQLite path for the run ledger")
    search.add_argument("--val-fraction", type=float, default=0.33, help="Validation share of a --data CSV")
    _add_data_flags(search)
    search.set_defaults(labels=LabelRule.LINEAR_TEACHER.value, margin=0.2)

    convergence = subparsers.add_parser("convergence", help="Finite-width to limiting kernel distance", parents=shared)
    convergence.add_argument("--kind", default="tanh")
    convergence.add_argument("--depth", type=int, default=3)
    convergence.add_argument("--skip", type=int, default=1, choices=[0, 1])
    convergence.add_argument("--widths", default="64,256,1024,4096")
    convergence.add_argument("--seeds", type=int, default=5, help="Number of initialisation seeds")
    convergence.add_argument("--n", type=int, default=16)
    convergence.add_argument("--d", type=int, default=8)

    train = subparsers.add_parser("train", help="SGD training with the step-size rule and bound", parents=shared)
    _add_arch_flags(train)
    _add_data_flags(train, n=256, d=16)
    train.add_argument("--gamma", type=float, default=None)
    train.add_argument("--kappa", type=float, default=None)
    train.add_argument("--mode", default=TrainMode.PRACTICAL.value, choices=[m.value for m in TrainMode])
    train.add_argument("--epochs", type=int, default=5)
    train.add_argument("--delta", type=float, default=0.05)
    train.add_argument("--bound", action="store_true", help="Also evaluate the generalization bound")

    return parser


def resolve_args(parser: argparse.ArgumentParser, argv: Optional[Sequence[str]]) -> argparse.Namespace:
    """Parse argv, replaying a manifest when --from-manifest is given"""
    args = parser.parse_args(argv)
    if args.from_manifest:
        manifest = read_json(args.from_manifest)
        replay = parser.parse_args([manifest["subcommand"]])
        for key, value in manifest["arguments"].items():
            setattr(replay, key, value)
        replay.subcommand = manifest["subcommand"]
        replay.from_manifest = args.from_manifest
        if args.output_dir:
            replay.output_dir = args.output_dir
        args = replay
    if not args.subcommand:
        parser.error("a subcommand is required unless --from-manifest is given")
    args.func = COMMANDS[args.subcommand]
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = resolve_args(parser, argv)
    configure_logging(args.log_level)

    try:
        return args.func(args)
    except (ValidationError, DomainError) as e:
        logger.error(f"Input error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as e:
        logger.error(f"Numerical error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DivergenceError as e:
        logger.error(f"Training diverged at iteration {e.iteration}: {e}")
        print(f"error: diverged at iteration {e.iteration}: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except SearchError as e:
        logger.error(f"Search failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except NTKError as e:
        logger.error(f"Unexpected toolkit error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
