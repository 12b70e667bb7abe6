"""Infer network structure from repeated, noisy edge observations."""

__version__ = "0.1.0"

from .engine import EmConfig, EmTrace, init_params, resolve_label_swap, run_em
from .estimator import NetworkReconstructor, check_counts
from .models import (
    IIDParams,
    MultiLevelParams,
    MultiModalParams,
    PerNodeParams,
    PosteriorEdges,
    canonicalize_levels,
    profile_loglik,
)
from .obsdata import NodeUniverse, ObservationCounts, pair_classes, parse_counts, parse_reports, parse_snapshot_log
from .posterior import derived_rates, expected_degree, metric_stats, mh_sample, sample_networks

__all__ = [
    "EmConfig",
    "EmTrace",
    "IIDParams",
    "MultiLevelParams",
    "MultiModalParams",
    "NetworkReconstructor",
    "NodeUniverse",
    "ObservationCounts",
    "PerNodeParams",
    "PosteriorEdges",
    "canonicalize_levels",
    "check_counts",
    "derived_rates",
    "expected_degree",
    "init_params",
    "metric_stats",
    "mh_sample",
    "pair_classes",
    "parse_counts",
    "parse_reports",
    "parse_snapshot_log",
    "profile_loglik",
    "resolve_label_swap",
    "run_em",
    "sample_networks",
]
