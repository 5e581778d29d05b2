"""
Command-Line Interface
Subcommands for runs, seed ensembles, verification, condition checks and log-gap tables
"""

import argparse
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional

from src.config import load_config, parse_overrides, parse_verify_overrides
from src.core import ConfigError, ObjectiveRegistryError, ParamsError
from src.objectives import registry_list
from src.pipeline.experiment_builder import ExperimentBuilder
from src.settings import get_default_jobs, get_output_dir, get_quiet
from src.verify import THEOREM_IDS, VerifyConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def print_results(results: Dict[str, Any]):
    """Print formatted results."""
    print("\n" + "=" * 60)
    print(f"{results.get('command', 'command').upper()} RESULTS")
    print("=" * 60)

    status_emoji = "✅" if results.get("status") == "success" else "❌"
    print(f"\n{status_emoji} Status: {results.get('status', 'unknown').upper()}")

    if "execution_time_seconds" in results:
        print(f"⏱️  Execution Time: {results['execution_time_seconds']:.2f} seconds")

    if results.get("artifacts"):
        print("\n📁 Outputs:")
        for label, path in results["artifacts"].items():
            print(f"   {label:22} {path}")

    if results.get("status") == "error":
        print(f"\n❌ Error: {results.get('error', 'Unknown error')}")


def _add_run_options(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--config", "-c",
        help="Run config file (key=value text, or YAML when the name ends in .yaml/.yml)",
    )
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key; repeatable",
    )
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--sigma", type=float, help="Noise intensity")
    parser.add_argument(
        "--scheme",
        choices=["euler", "semi_exact", "deterministic"],
        help="Time-stepping scheme",
    )


def _add_common_options(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--output-dir", "-o",
        help=f"Directory for generated outputs (default: $CBO_OUTPUT_DIR or {get_output_dir()})",
    )
    parser.add_argument("--quiet", "-q", action="store_true", help="Suppress progress output")
    parser.add_argument(
        "--log-jsonl",
        action="store_true",
        help="Append the execution log to the command's JSONL output as a final object",
    )


def _add_jobs_option(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--jobs", "-j",
        type=int,
        help="Worker processes for independent runs (default: $CBO_JOBS or 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbo_pipeline.py",
        description="Consensus-based optimization engine and verification harness",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # One run from a config file, overriding the noise level
  %(prog)s run --config configs/rastrigin_defaults.cfg --sigma 2

  # Twenty seeds on four worker processes
  %(prog)s ensemble --config configs/rastrigin_defaults.cfg --seeds 20 --jobs 4

  # The full verification suite, or a single check
  %(prog)s verify all
  %(prog)s verify thm34ii --sigma 2

  # Log-gap curves for sigma in {0, 1, 2}
  %(prog)s gap --scheme semi_exact --sigmas 0,1,2
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one optimization and export its trajectory")
    _add_run_options(run)
    _add_common_options(run)

    ensemble = sub.add_parser("ensemble", help="Run seeds 0..n-1 and aggregate their summaries")
    _add_run_options(ensemble)
    _add_common_options(ensemble)
    _add_jobs_option(ensemble)
    ensemble.add_argument("--seeds", "-n", type=int, default=20, help="Number of seeds (default: 20)")

    verify = sub.add_parser("verify", help="Compare the simulator against closed-form oracles")
    verify.add_argument("suite", nargs="?", default="all", choices=("all",) + THEOREM_IDS)
    verify.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a verification setting (lambda, sigma, h, runs, steps, seed, ...); repeatable",
    )
    verify.add_argument("--seed", type=int, help="Master seed")
    verify.add_argument("--sigma", type=float, help="Noise intensity")
    verify.add_argument("--runs", type=int, help="Monte Carlo runs")
    verify.add_argument("--steps", type=int, help="Steps per run")
    verify.add_argument("--jsonl", help="Report file (default: <output-dir>/verification.jsonl)")
    _add_common_options(verify)
    _add_jobs_option(verify)

    conditions = sub.add_parser("conditions", help="Check the parameter hypotheses for a config")
    _add_run_options(conditions)
    _add_common_options(conditions)

    sub.add_parser("list-objectives", help="List the registered objectives")

    gap = sub.add_parser("gap", help="Write mean log pairwise gap curves")
    gap.add_argument("--scheme", choices=["euler", "semi_exact"], default="semi_exact")
    gap.add_argument("--sigmas", default="0,1,2", help="Comma-separated noise levels (default: 0,1,2)")
    gap.add_argument("--runs", type=int, default=100, help="Runs per noise level (default: 100)")
    gap.add_argument("--seed", type=int, help="Master seed")
    gap.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a pairwise setting (lambda, h, window_end, ...); repeatable",
    )
    gap.add_argument("--out", help="CSV path (default: <output-dir>/log_gap_<scheme>.csv)")
    _add_common_options(gap)

    return parser


def _run_config(args):
    overrides = parse_overrides(args.set)
    for key in ("seed", "sigma", "scheme", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    return load_config(args.config, overrides, defaults={"jobs": str(get_default_jobs())})


def _builder(args, config=None) -> ExperimentBuilder:
    quiet = args.quiet or get_quiet()
    return ExperimentBuilder(config=config, output_dir=args.output_dir, quiet=quiet)


def _finish(builder: ExperimentBuilder, args, results: Dict[str, Any]) -> int:
    if args.log_jsonl and builder.jsonl_path:
        builder.append_log_object(builder.jsonl_path)
    if not builder.quiet:
        print_results(results)
    if results.get("status") != "success":
        return EXIT_FAILURE
    return EXIT_OK


def cmd_run(args) -> int:
    """One run: trajectory CSV plus JSONL step records and a final summary object."""
    builder = _builder(args, _run_config(args))
    results = builder.run_single()
    builder.save_results(results, "run")
    return _finish(builder, args, results)


def cmd_ensemble(args) -> int:
    """Seeds 0..n-1 of one config; any failed seed gives exit 1 after the survivors are exported."""
    if args.seeds < 1:
        raise ConfigError(f"must be >= 1, got {args.seeds}", key="seeds")
    config = _run_config(args)
    builder = _builder(args, config)
    results = builder.run_ensemble(args.seeds, jobs=config.jobs)
    builder.save_results(results, "ensemble")
    return _finish(builder, args, results)


def _verify_overrides(args) -> Dict[str, Any]:
    raw = parse_overrides(args.set)
    flags = {"seed": args.seed, "sigma": args.sigma, "runs": args.runs, "n_steps": args.steps,
             "jobs": getattr(args, "jobs", None)}
    for key, value in flags.items():
        if value is not None:
            raw[key] = str(value)
    if "jobs" not in raw:
        raw["jobs"] = str(get_default_jobs())
    return parse_verify_overrides(raw)


def cmd_verify(args) -> int:
    """Selected verification reports; any failure gives exit 1, skips do not."""
    suite = list(THEOREM_IDS) if args.suite == "all" else [args.suite]
    builder = _builder(args)
    results = builder.run_verification(suite, _verify_overrides(args), jsonl_path=args.jsonl)
    builder.save_results(results, "verification")
    return _finish(builder, args, results)


def cmd_conditions(args) -> int:
    builder = _builder(args, _run_config(args))
    results = builder.check_conditions()
    return _finish(builder, args, results)


def cmd_list_objectives(args=None) -> int:
    for name, params, description in registry_list():
        required = ", ".join(params) if params else "none"
        print(f"{name:12} params: {required:8} {description}")
    return EXIT_OK


def _parse_sigmas(text: str) -> List[float]:
    try:
        sigmas = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got '{text}'", key="sigmas")
    if not sigmas or any(s < 0 for s in sigmas):
        raise ConfigError("expected one or more noise levels >= 0", key="sigmas")
    return sigmas


def cmd_gap(args) -> int:
    """Tidy log-gap CSV: columns sigma, step, time, mean_log_gap, std_error."""
    if args.runs < 2:
        raise ConfigError(f"must be >= 2, got {args.runs}", key="runs")
    raw = parse_overrides(args.set)
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    base = replace(VerifyConfig(scheme=args.scheme), **parse_verify_overrides(raw))
    builder = _builder(args)
    results = builder.log_gap_table(base, _parse_sigmas(args.sigmas), args.runs, csv_path=args.out)
    return _finish(builder, args, results)


COMMANDS = {
    "run": cmd_run,
    "ensemble": cmd_ensemble,
    "verify": cmd_verify,
    "conditions": cmd_conditions,
    "list-objectives": cmd_list_objectives,
    "gap": cmd_gap,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes 0, 1 and 2."""
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ObjectiveRegistryError, ParamsError) as e:
        print(f"❌ Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"❌ IO error: {e}", file=sys.stderr)
        return EXIT_FAILURE
