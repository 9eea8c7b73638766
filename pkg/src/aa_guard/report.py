"""End-to-end audit, per-event diagnostics and report serialization."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .ingestion import UserMetricMatrix
from .resampler import PvalueSample, ResamplePlan, run_aa_audit
from .stats_core import bonferroni_adjust, ks_uniform_test, spearman_rho, summarize

PVALUE_BINS = 20
OUTCOME_BINS = 20
LOW_DATA_OBSERVATIONS = 10
DEFAULT_FLAG_THRESHOLD = 1e-4
SIGNIFICANT_DIGITS = 10
SCHEMA_VERSION = 1


@dataclass
class EventAudit:
    event_id: str
    n_users: int
    n_observations: int
    frequency: int
    mean_outcome: float
    skewness: float
    ks_d: float
    ks_p: float
    ks_p_bonferroni: float
    empirical_type1_rate: float
    reject_count: int
    low_data: bool
    small_sample: bool
    pvalue_histogram: list[int]
    outcome_bin_edges: list[float]
    outcome_density: list[float]


@dataclass
class AuditReport:
    events: list[EventAudit]
    spearman_frequency_vs_d: float | None
    spearman_skewness_vs_d: float | None
    iterations: int
    seed: int
    alpha: float
    split_fraction: float
    include_zero_users: bool
    flag_threshold: float
    flagged_events: list[str] = field(default_factory=list)

    def event(self, event_id: str) -> EventAudit:
        for ev in self.events:
            if ev.event_id == event_id:
                return ev
        raise KeyError(event_id)


def _outcome_histogram(column: np.ndarray) -> tuple[list[float], list[float]]:
    density, edges = np.histogram(column, bins=OUTCOME_BINS, density=True)
    return edges.tolist(), density.tolist()


def flagged(events: list[EventAudit], threshold: float) -> list[str]:
    """Events with Bonferroni-adjusted KS p below ``threshold``, most extreme first."""
    hits = [ev for ev in events if ev.ks_p_bonferroni < threshold]
    hits.sort(key=lambda ev: (ev.ks_p, ev.event_id))
    return [ev.event_id for ev in hits]


def _rank_correlation(x: list[float], y: list[float]) -> float | None:
    if len(x) < 2:
        return None
    rho = spearman_rho(x, y)
    return None if math.isnan(rho) else rho


def build_report(
    matrix: UserMetricMatrix,
    plan: ResamplePlan,
    samples: dict[str, PvalueSample],
    flag_threshold: float = DEFAULT_FLAG_THRESHOLD,
) -> AuditReport:
    """Assemble diagnostics from already computed A/A p-values."""
    ks = {e: ks_uniform_test(samples[e].pvalues) for e in matrix.event_ids}
    adjusted = bonferroni_adjust([ks[e].p for e in matrix.event_ids])
    events = []
    for j, event in enumerate(matrix.event_ids):
        column = matrix.column(j)
        summary = summarize(column)
        s = samples[event]
        hist, _ = np.histogram(s.pvalues, bins=PVALUE_BINS, range=(0.0, 1.0))
        edges, density = _outcome_histogram(column)
        n_obs = int(matrix.observation_counts[j])
        events.append(EventAudit(
            event_id=event,
            n_users=matrix.n_users,
            n_observations=n_obs,
            frequency=n_obs,
            mean_outcome=summary.mean,
            skewness=summary.skewness,
            ks_d=ks[event].d,
            ks_p=ks[event].p,
            ks_p_bonferroni=adjusted[j],
            empirical_type1_rate=s.reject_count_at_alpha / s.pvalues.size,
            reject_count=s.reject_count_at_alpha,
            low_data=n_obs < LOW_DATA_OBSERVATIONS,
            small_sample=ks[event].small_sample,
            pvalue_histogram=[int(c) for c in hist],
            outcome_bin_edges=edges,
            outcome_density=density,
        ))
    d = [ev.ks_d for ev in events]
    # ranks are unchanged by log10, so raw counts give the same correlation
    freq = [float(ev.n_observations) for ev in events]
    skew = [ev.skewness for ev in events]
    return AuditReport(
        events=events,
        spearman_frequency_vs_d=_rank_correlation(freq, d),
        spearman_skewness_vs_d=_rank_correlation(skew, d),
        iterations=plan.iterations,
        seed=plan.master_seed,
        alpha=plan.alpha,
        split_fraction=plan.split_fraction,
        include_zero_users=plan.include_zero_users,
        flag_threshold=flag_threshold,
        flagged_events=flagged(events, flag_threshold),
    )


def audit(
    matrix: UserMetricMatrix,
    plan: ResamplePlan,
    flag_threshold: float = DEFAULT_FLAG_THRESHOLD,
    workers: int = 1,
    progress: Callable[[int], None] | None = None,
) -> AuditReport:
    """Run the A/A resampling audit and summarize every event."""
    samples = run_aa_audit(matrix, plan, workers=workers, progress=progress)
    return build_report(matrix, plan, samples, flag_threshold)


# -- serialization -----------------------------------------------------------

def _round_sig(x: float) -> float | None:
    if x is None or math.isnan(x):
        return None
    if math.isinf(x):
        return None
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return _round_sig(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_to_dict(report: AuditReport) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "plan": {
            "iterations": report.iterations,
            "seed": report.seed,
            "alpha": report.alpha,
            "split_fraction": report.split_fraction,
            "include_zero_users": report.include_zero_users,
        },
        "flag_threshold": report.flag_threshold,
        "spearman_frequency_vs_d": report.spearman_frequency_vs_d,
        "spearman_skewness_vs_d": report.spearman_skewness_vs_d,
        "flagged_events": list(report.flagged_events),
        "events": [asdict(ev) for ev in report.events],
    }


def report_from_dict(raw: dict[str, Any]) -> AuditReport:
    plan = raw["plan"]
    nan_if_none = lambda v: math.nan if v is None else v  # noqa: E731
    float_fields = {f.name for f in fields(EventAudit) if f.type == "float"}
    events = []
    for ev in raw["events"]:
        ev = dict(ev)
        for name in float_fields:
            ev[name] = nan_if_none(ev[name])
        events.append(EventAudit(**ev))
    return AuditReport(
        events=events,
        spearman_frequency_vs_d=raw["spearman_frequency_vs_d"],
        spearman_skewness_vs_d=raw["spearman_skewness_vs_d"],
        iterations=plan["iterations"],
        seed=plan["seed"],
        alpha=plan["alpha"],
        split_fraction=plan["split_fraction"],
        include_zero_users=plan["include_zero_users"],
        flag_threshold=raw["flag_threshold"],
        flagged_events=list(raw["flagged_events"]),
    )


def dumps_report(report: AuditReport) -> str:
    """Deterministic JSON: fixed key order, floats at 10 significant digits."""
    return json.dumps(_jsonable(report_to_dict(report)), indent=2, allow_nan=False) + "\n"


def load_report(path: str | Path) -> AuditReport:
    with open(path, encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


SCALAR_FIELDS = [f.name for f in fields(EventAudit)
                 if f.name not in ("pvalue_histogram", "outcome_bin_edges", "outcome_density")]


def _fmt(x: Any) -> str:
    if isinstance(x, float):
        r = _round_sig(x)
        return "" if r is None else repr(r)
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_plot_data(report: AuditReport, plots_dir: str | Path) -> list[Path]:
    """Plot-ready CSVs: D and KS p per event, observations vs D, outcome densities."""
    plots_dir = Path(plots_dir)
    plots_dir.mkdir(parents=True, exist_ok=True)
    fig1 = plots_dir / "fig1.csv"
    fig2 = plots_dir / "fig2.csv"
    fig3 = plots_dir / "fig3.csv"
    _write_csv(fig1, ["event", "d", "ks_p"],
               [[ev.event_id, ev.ks_d, ev.ks_p] for ev in report.events])
    _write_csv(fig2, ["event", "n_observations", "d"],
               [[ev.event_id, ev.n_observations, ev.ks_d] for ev in report.events])
    rows = []
    for ev in report.events:
        edges = ev.outcome_bin_edges
        for b, dens in enumerate(ev.outcome_density):
            rows.append([ev.event_id, edges[b], edges[b + 1], dens, ev.skewness])
    _write_csv(fig3, ["event", "bin_left", "bin_right", "density", "skewness"], rows)
    return [fig1, fig2, fig3]


def emit_report(
    report: AuditReport,
    format: str,
    destination: str | Path,
    plots_dir: str | Path | None = None,
) -> list[Path]:
    """Write the report as JSON or CSV plus the three plot-data CSVs.

    Plot files go to ``plots_dir`` (default: next to ``destination``).
    Returns every path written. I/O failures raise ``OSError`` naming the path.
    """
    destination = Path(destination)
    if format not in ("json", "csv"):
        raise ValueError(f"unknown report format {format!r}; expected json or csv")
    try:
        if destination.parent and not destination.parent.exists():
            destination.parent.mkdir(parents=True, exist_ok=True)
        if format == "json":
            with open(destination, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(dumps_report(report))
        else:
            _write_csv(destination, SCALAR_FIELDS,
                       [[getattr(ev, f) for f in SCALAR_FIELDS] for ev in report.events])
        written = [destination]
        written += write_plot_data(report, plots_dir if plots_dir is not None else destination.parent)
    except OSError as exc:
        where = exc.filename or os.fspath(destination)
        raise OSError(exc.errno, f"cannot write report to {where}: {exc.strerror}", where) from exc
    return written
