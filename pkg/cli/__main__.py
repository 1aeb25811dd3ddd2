"""
kdlab command line.

Exit codes: 0 success, 2 configuration error, 3 runtime contract error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from cli.analyze import format_table, size_table
from cli.manifest import load_manifest
from cli.run import run_experiment
from cli.settings import load_settings
from engine import ConfigurationError, KDLabError, ValidationError


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdlab",
        description="Knowledge distillation experiments on synthetic tasks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Distill as described by a manifest
  python -m cli run configs/manifests/general.json --out runs/general

  # Same run with another seed
  python -m cli run configs/manifests/general.json --out runs/general_s2 --seed 2

  # Compare model sizes (named specs or spec files)
  python -m cli analyze bert_base t6 t3 t3_small t4_tiny bigru
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Train teachers and distill a student")
    run.add_argument("manifest", help="Experiment manifest (JSON)")
    run.add_argument("--out", required=True, help="Output directory for report.json, train.log and checkpoints")
    run.add_argument("--seed", type=int, default=None, help="Override training.seed [default: manifest value]")

    analyze = commands.add_parser("analyze", help="Compare parameter counts of model specs")
    analyze.add_argument("specs", nargs="+", help="Named specs or spec JSON files; sizes relative to the first")
    return parser


def _report_configuration_error(error: ConfigurationError) -> None:
    if isinstance(error, ValidationError):
        print(f"Configuration invalid ({len(error.errors)} problems):", file=sys.stderr)
        for problem in error.errors:
            print(f"  - {problem}", file=sys.stderr)
    else:
        print(f"Configuration error: {error}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    settings = load_settings()
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        if args.command == "run":
            manifest = load_manifest(args.manifest)
            report = run_experiment(manifest, args.out, seed=args.seed, show_progress=settings.show_progress)
            print(f"Final dev metrics: {report['final']}")
        else:
            print(format_table(size_table(args.specs)))
    except ConfigurationError as e:
        _report_configuration_error(e)
        return EXIT_CONFIGURATION
    except KDLabError as e:
        print(f"Run failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
