import argparse
import sys

from src.config import load_config
from src.errors import ConfigError
from src.orchestrator import ToolkitOrchestrator
from utils.logger import setup_logger

logger = setup_logger("cli")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CHECKS = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Current-vortex sheet verification toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults and SHEET_* environment apply otherwise)")
    common.add_argument("--out", help="Output directory for tables and reports")
    common.add_argument("--seed", type=int, help="Seed for randomized suites")
    common.add_argument("--jobs", type=int, help="Worker cap for parallel checks")

    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (("check-stability", "Stability margins, μ, hyperbolicity and ellipticity of a trace CSV"),
                            ("compute-mu", "Symmetrizer μ table for a trace CSV")):
        p = sub.add_parser(verb, parents=[common], help=help_text)
        p.add_argument("--trace", help="Trace CSV (overrides trace_csv in the config)")
    sub.add_parser("dtn", parents=[common], help="DtN spectra of cos(f_mode x1) under ψ = psi_amplitude sin(x1)")
    sub.add_parser("symbols", parents=[common], help="Symbol symmetrization residuals and sample tables")
    sub.add_parser("evolve", parents=[common], help="Frozen-coefficient interface evolution against the normal-mode oracle")
    sub.add_parser("energies", parents=[common], help="ℰ, ℰ̃, energy-layer ε sweep and embedding spot check")
    p = sub.add_parser("verify", parents=[common], help="Run the invariant suite")
    p.add_argument("--checks", nargs="+", help="Subset of checks to run (default: all)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, jobs=args.jobs, output_dir=args.out)
    except ConfigError as e:
        logger.error(f"Configuration rejected: {e}")
        print(f"\n{args.verb} failed: {e}")
        return EXIT_FAILED

    logger.info(f"Starting {args.verb} (seed {config.seed}, output {config.output_dir})")
    kwargs = {}
    if args.verb in ("check-stability", "compute-mu"):
        kwargs["trace_csv"] = args.trace
    if args.verb == "verify":
        kwargs.update(checks=args.checks, jobs=args.jobs)
    result = ToolkitOrchestrator(config).run(args.verb, **kwargs)

    if result["status"] != "success":
        print(f"\n{result['error']}")
        return EXIT_FAILED

    print("\n" + "=" * 50)
    print(f"{args.verb.upper()} {'PASSED' if result['all_passed'] else 'FINISHED WITH FAILING CHECKS'}")
    print("=" * 50)
    for name, check in result.get("checks", {}).items():
        print(f"[{'PASS' if check['passed'] else 'FAIL'}] {name}")
    for name, path in result["artifacts"].items():
        print(f"{name}: {path}")
    return EXIT_OK if result["all_passed"] else EXIT_CHECKS


if __name__ == "__main__":
    sys.exit(main())
