"""Validate the normality assumption behind z-test A/B analysis with
resampled A/A tests and a Kolmogorov-Smirnov uniformity check."""

__version__ = "0.1.0"

from .errors import DomainError, InconsistencyError, InsufficientDataError, ParseError
from .ingestion import EventLogRecord, UserMetricMatrix, aggregate, load_events
from .report import AuditReport, EventAudit, audit, emit_report, load_report
from .resampler import PvalueSample, ResamplePlan, run_aa_audit, split_population
from .stats_core import (
    AteEstimate,
    KsResult,
    SampleSummary,
    ate_estimate,
    bonferroni_adjust,
    inverse_normal_cdf,
    kolmogorov_sf,
    ks_uniform_test,
    normal_cdf,
    spearman_rho,
    summarize,
)
from .synthetic import EventSpec, PopulationSpec, generate

__all__ = [
    "AteEstimate", "AuditReport", "DomainError", "EventAudit", "EventLogRecord",
    "EventSpec", "InconsistencyError", "InsufficientDataError", "KsResult",
    "ParseError", "PopulationSpec", "PvalueSample", "ResamplePlan", "SampleSummary",
    "UserMetricMatrix", "aggregate", "ate_estimate", "audit", "bonferroni_adjust",
    "emit_report", "generate", "inverse_normal_cdf", "kolmogorov_sf",
    "ks_uniform_test", "load_events", "load_report", "normal_cdf", "run_aa_audit",
    "spearman_rho", "split_population", "summarize",
]
