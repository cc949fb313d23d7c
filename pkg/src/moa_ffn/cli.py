"""
Command-line entry point: ``moa-ffn {train,ablate,witness,bench,grad-check}``.

Exit codes: 0 success, 2 config or data error, 3 numeric failure,
4 witness assertion failure.
"""

from typing import Any, Dict, List, Optional, Sequence
import argparse
import logging
import os
import sys

from .base import ConfigError, MoAError
from .config import RunConfig, load_ablation_grid
from .expressivity.report import parse_tamper
from .pipeline import EXIT_FAILURE, RunPipeline, exit_code_for

logger = logging.getLogger(__name__)

OUT_ENV = "MOA_OUT"


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Run config file (section.key = value lines)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one config key; repeatable",
    )
    parser.add_argument("--seed", type=int, help="Seed for every random stream of the run")
    parser.add_argument("--jobs", type=int, help="Worker processes")
    parser.add_argument("--out", help=f"Output root (the {OUT_ENV} environment variable wins)")
    parser.add_argument("--name", help="Suffix for the run directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moa-ffn",
        description="Mixture-of-activations feedforward layers: training, ablation, "
        "expressivity witnesses and overhead benchmarks.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train the toy language model")
    _common(train)

    ablate = commands.add_parser("ablate", help="Run an ablation grid over FFN arms")
    _common(ablate)
    ablate.add_argument("--grid", required=True, help="Ablation grid file")

    witness = commands.add_parser("witness", help="Run the expressivity witness suite")
    _common(witness)
    witness.add_argument("suite", nargs="?", default="all", choices=["all", "theorem1", "theorem2"])
    witness.add_argument(
        "--budget",
        default="quick",
        choices=["quick", "full"],
        help="Fit protocol. 'quick' uses reduced restarts/steps and only reports the "
        "representable-fit row; 'full' uses the fit.* config section and asserts that "
        "row at <= 1e-6 along with the lower-bound floors",
    )
    witness.add_argument("--tamper", help=argparse.SUPPRESS)

    bench = commands.add_parser("bench", help="Parameter, FLOP and step-time overhead")
    _common(bench)
    bench.add_argument("--flavor", default="type2", choices=["type1", "type2"])

    grad = commands.add_parser("grad-check", help="Finite-difference check of every FFN variant")
    _common(grad)
    grad.add_argument("--d-model", type=int, default=8)
    grad.add_argument("--points", type=int, default=20)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file, then ``--set`` overrides, then the dedicated flags."""
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides: List[str] = list(args.overrides)
    if args.seed is not None:
        overrides += [f"run.seed={args.seed}", f"train.seeds={args.seed}"]
    if args.jobs is not None:
        overrides.append(f"run.jobs={args.jobs}")
    out = os.environ.get(OUT_ENV) or args.out
    if out:
        overrides.append(f"output.dir={out}")
    if args.name:
        overrides.append(f"run.name={args.name}")
    return config.apply_overrides(overrides)


def dispatch(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    pipeline = RunPipeline(config.output_dir, args.command, config.name or None)
    if args.command == "train":
        return pipeline.run_train(config)
    if args.command == "ablate":
        return pipeline.run_ablate(config, load_ablation_grid(args.grid))
    if args.command == "witness":
        return pipeline.run_witness(config, args.suite, args.budget, parse_tamper(args.tamper))
    if args.command == "bench":
        return pipeline.run_bench(config, args.flavor)
    return pipeline.run_gradcheck(config, d_model=args.d_model, points=args.points)


def print_results(results: Dict[str, Any]) -> None:
    print("\n" + "=" * 50)
    print(f"MOA-FFN {results['command'].upper()} RESULTS")
    print("=" * 50)
    print(f"Status: {results['status']}")
    print(f"Run directory: {results['run_dir']}")
    print(f"Files Created: {len(results['files_created'])}")
    for path in results["files_created"]:
        print(f"  - {path}")
    if results["errors"]:
        print(f"\nErrors ({len(results['errors'])}):")
        for error in results["errors"]:
            print(f"  - {error}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        results = dispatch(args, config)
    except ConfigError as e:
        print(f"moa-ffn {args.command}: config error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except MoAError as e:
        print(f"moa-ffn {args.command}: {e}", file=sys.stderr)
        return exit_code_for(e)
    print_results(results)
    return int(results.get("exit_code", EXIT_FAILURE))


if __name__ == "__main__":
    sys.exit(main())
