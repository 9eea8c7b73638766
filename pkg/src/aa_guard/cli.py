"""``aa-guard`` command line.

Exit codes: 0 completed without flagged events, 2 completed with flagged
events, 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import DomainError, InconsistencyError, InsufficientDataError, ParseError
from .ingestion import aggregate, load_events, load_universe
from .report import DEFAULT_FLAG_THRESHOLD, audit, emit_report, flagged, load_report
from .resampler import ResamplePlan
from .synthetic import generate, load_spec, write_events_csv

log = logging.getLogger("aa_guard")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2


def _infer_format(path: Path, explicit: str | None, choices: Sequence[str]) -> str:
    if explicit:
        return explicit
    suffix = path.suffix.lower().lstrip(".")
    if suffix in choices:
        return suffix
    raise DomainError(f"cannot infer format of {path}; pass one of {list(choices)} explicitly")


def cmd_validate(args: argparse.Namespace) -> int:
    source = Path(args.input)
    fmt = _infer_format(source, args.format, ("csv", "jsonl"))
    records = load_events(source, fmt)
    universe = load_universe(args.universe) if args.universe else None
    matrix = aggregate(records, universe)
    if args.outcome == "binary":
        matrix = matrix.binarized()
    log.info("loaded %d records: %d users x %d events", len(records), matrix.n_users, matrix.n_events)

    plan = ResamplePlan(
        iterations=args.iterations,
        master_seed=args.seed,
        alpha=args.alpha,
        split_fraction=args.split_fraction,
        include_zero_users=not args.exclude_zero_users,
    )
    report = audit(matrix, plan, flag_threshold=args.flag_threshold, workers=args.workers)
    out = Path(args.out)
    report_format = _infer_format(out, args.report_format, ("json", "csv"))
    plots_dir = Path(args.plots_dir) if args.plots_dir else out.parent
    for path in emit_report(report, report_format, out, plots_dir):
        log.info("wrote %s", path)
    _print_summary(report.flagged_events, report.spearman_frequency_vs_d,
                   report.spearman_skewness_vs_d, args.flag_threshold)
    return EXIT_FLAGGED if report.flagged_events else EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    matrix = generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        rows = write_events_csv(spec, matrix, fh)
    universe_out = Path(args.universe_out) if args.universe_out else out.with_suffix(".users.txt")
    universe_out.write_text("".join(u + "\n" for u in matrix.user_ids), encoding="utf-8")
    log.info("wrote %d event rows to %s and %d users to %s", rows, out, matrix.n_users, universe_out)
    return EXIT_OK


def _fmt_rho(rho: float | None) -> str:
    return "undefined" if rho is None else f"{rho:+.4f}"


def _print_summary(flags: list[str], rho_freq: float | None, rho_skew: float | None,
                   threshold: float) -> None:
    print(f"spearman(frequency, D) = {_fmt_rho(rho_freq)}")
    print(f"spearman(skewness, D)  = {_fmt_rho(rho_skew)}")
    if flags:
        print(f"{len(flags)} event(s) flagged at Bonferroni-adjusted KS p < {threshold:g}:")
    else:
        print(f"no events flagged at Bonferroni-adjusted KS p < {threshold:g}")


def cmd_diagnose(args: argparse.Namespace) -> int:
    report = load_report(args.report)
    threshold = report.flag_threshold if args.flag_threshold is None else args.flag_threshold
    flags = flagged(report.events, threshold)
    _print_summary(flags, report.spearman_frequency_vs_d, report.spearman_skewness_vs_d, threshold)
    for event_id in flags:
        ev = report.event(event_id)
        note = "  [low-data]" if ev.low_data else ""
        print(f"  {ev.event_id}: D={ev.ks_d:.4f} ks_p={ev.ks_p:.3g} "
              f"bonferroni={ev.ks_p_bonferroni:.3g} type1={ev.empirical_type1_rate:.4f} "
              f"obs={ev.n_observations} skew={ev.skewness:.3g}{note}")
    return EXIT_FLAGGED if flags else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aa-guard",
        description="Audit metrics for A/B-test validity with resampled A/A tests.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="run the A/A audit on an event log")
    v.add_argument("--input", required=True, help="event log (CSV or JSONL)")
    v.add_argument("--format", choices=("csv", "jsonl"), help="input format (default: from extension)")
    v.add_argument("--universe", help="file with one user id per line; absent users get zero outcomes")
    v.add_argument("--iterations", type=int, default=5000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--alpha", type=float, default=0.05)
    v.add_argument("--flag-threshold", type=float, default=DEFAULT_FLAG_THRESHOLD)
    v.add_argument("--split-fraction", type=float, default=0.5)
    v.add_argument("--exclude-zero-users", action="store_true",
                   help="per event, only compare users with a nonzero outcome")
    v.add_argument("--outcome", choices=("sum", "binary"), default="sum",
                   help="per-user outcome: summed values (counts by default) or 0/1 indicator")
    v.add_argument("--workers", type=int, default=1, help="threads for the resampling phase")
    v.add_argument("--out", required=True, help="report path (.json or .csv)")
    v.add_argument("--report-format", choices=("json", "csv"))
    v.add_argument("--plots-dir", help="directory for fig1/fig2/fig3 CSVs (default: next to --out)")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("synth", help="write a synthetic event log from a population spec")
    s.add_argument("--spec", required=True, help="population spec (YAML or JSON)")
    s.add_argument("--out", required=True, help="event log CSV to write")
    s.add_argument("--universe-out", help="user list to write (default: <out>.users.txt)")
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("diagnose", help="summarize a report written by validate")
    d.add_argument("--report", required=True)
    d.add_argument("--flag-threshold", type=float, default=None,
                   help="override the threshold stored in the report")
    d.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DomainError, InconsistencyError, InsufficientDataError, ParseError,
            KeyError, OSError, ValueError) as exc:
        print(f"aa-guard: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
