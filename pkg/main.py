"""Main entry point for cepstral CCA."""
import sys
import argparse
from pathlib import Path

from src.config import GRID_RESOLUTION, MAX_ITERATIONS, NLL_REL_TOL, OUTPUT_DIR, SCORE_TOL_PER_FREQ
from src.logger import logger


def _add_order_options(parser: argparse.ArgumentParser) -> None:
    order = parser.add_mutually_exclusive_group()
    order.add_argument("--k", type=int, help="Fixed truncation order K")
    order.add_argument(
        "--k-range",
        help="Candidate orders a:b for AIC selection (default: 1:min(30, (T-1)//2))",
    )


def _add_fit_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--max-iterations",
        type=int,
        default=MAX_ITERATIONS,
        help=f"Fisher scoring iteration limit (default: {MAX_ITERATIONS})",
    )
    parser.add_argument(
        "--score-tol",
        type=float,
        default=SCORE_TOL_PER_FREQ,
        help=f"Score-norm tolerance per frequency (default: {SCORE_TOL_PER_FREQ:g})",
    )
    parser.add_argument(
        "--nll-tol",
        type=float,
        default=NLL_REL_TOL,
        help=f"Relative likelihood-change tolerance (default: {NLL_REL_TOL:g})",
    )


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--out",
        type=Path,
        default=OUTPUT_DIR,
        help=f"Output directory (default: {OUTPUT_DIR})",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads (default: all cores; CEPSTRA_CCA_THREADS overrides)",
    )


def _add_series_options(parser: argparse.ArgumentParser, outcomes: bool = False) -> None:
    parser.add_argument("--series", type=Path, required=True, help="Series CSV: subject,t1,...,tT")
    if outcomes:
        parser.add_argument(
            "--outcomes", type=Path, required=True, help="Outcomes CSV: subject,<name1>,...,<nameP>"
        )
    parser.add_argument(
        "--sampling-rate",
        type=float,
        default=None,
        help="Sampling rate in Hz; adds Hz frequency columns to the outputs",
    )
    parser.add_argument(
        "--grid",
        type=int,
        default=GRID_RESOLUTION,
        help=f"Frequency grid resolution over [0, 0.5] (default: {GRID_RESOLUTION})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Canonical correlation analysis of log-spectra and static outcomes",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py spectra --series s.csv --k-range 1:10 --out out/
  python main.py fit --series s.csv --k 4 --out out/
  python main.py cca --series s.csv --outcomes z.csv --standardize --out out/
  python main.py simulate --n 100 --t 100 --replicates 500 --seed 42 --out out/
  python main.py rerun --manifest out/manifest.json
        """,
    )

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # Spectra command
    spectra_parser = subparsers.add_parser("spectra", help="Periodograms and estimated log-spectra")
    _add_series_options(spectra_parser)
    _add_order_options(spectra_parser)
    _add_fit_options(spectra_parser)
    _add_common_options(spectra_parser)

    # Fit command
    fit_parser = subparsers.add_parser("fit", help="Cepstral coefficients per subject")
    _add_series_options(fit_parser)
    _add_order_options(fit_parser)
    _add_fit_options(fit_parser)
    _add_common_options(fit_parser)

    # CCA command
    cca_parser = subparsers.add_parser("cca", help="Canonical correlations of cepstra and outcomes")
    _add_series_options(cca_parser, outcomes=True)
    cca_parser.add_argument(
        "--standardize",
        action="store_true",
        help="Standardize outcomes to mean 0 / variance 1 first",
    )
    _add_order_options(cca_parser)
    _add_fit_options(cca_parser)
    _add_common_options(cca_parser)

    # Simulate command
    sim_parser = subparsers.add_parser("simulate", help="Monte Carlo error study")
    sim_parser.add_argument("--n", type=int, default=100, help="Subjects per replicate (default: 100)")
    sim_parser.add_argument("--t", type=int, default=100, help="Series length (default: 100)")
    sim_parser.add_argument("--replicates", type=int, default=500, help="Replicates (default: 500)")
    sim_parser.add_argument("--seed", type=int, default=42, help="Master seed (default: 42)")
    sim_parser.add_argument(
        "--write-panel",
        action="store_true",
        help="Also write the first replicate as series.csv/outcomes.csv",
    )
    sim_parser.add_argument(
        "--check-reference",
        action="store_true",
        help="Fail (exit 4) when errors miss the tabulated reference values",
    )
    _add_order_options(sim_parser)
    _add_fit_options(sim_parser)
    _add_common_options(sim_parser)

    # Rerun command
    rerun_parser = subparsers.add_parser("rerun", help="Re-run a command from its manifest")
    rerun_parser.add_argument("--manifest", type=Path, required=True, help="manifest.json of a previous run")
    rerun_parser.add_argument("--out", type=Path, default=None, help="Write into another directory")

    return parser


def config_options(args: argparse.Namespace) -> dict:
    """RunConfig fields from parsed arguments."""
    from src.cli import resolve_threads

    options = {
        "command": args.command,
        "out": args.out,
        "k": args.k,
        "k_range": args.k_range,
        "max_iterations": args.max_iterations,
        "score_tolerance": args.score_tol,
        "nll_tolerance": args.nll_tol,
        "threads": resolve_threads(args.threads),
    }
    for name in ("series", "outcomes", "sampling_rate", "grid", "standardize",
                 "n", "t", "replicates", "seed", "write_panel", "check_reference"):
        if hasattr(args, name):
            options[name] = getattr(args, name)
    return options


def main():
    parser = build_parser()
    args = parser.parse_args()

    if args.command is None:
        logger.warning("No command specified")
        parser.print_help()
        sys.exit(1)

    from src.cli import RunConfig, config_from_manifest, run_command

    if args.command == "rerun":
        logger.info(f"Re-running from manifest {args.manifest}")
        sys.exit(run_command(lambda: config_from_manifest(args.manifest, args.out)))

    sys.exit(run_command(lambda: RunConfig(**config_options(args))))


if __name__ == "__main__":
    main()
