"""Hybrid SDN control plane: size-capped local control groups of edge switches
handle intra-group traffic themselves; a lazy central controller handles the rest."""

from .config import SimConfig, load_config
from .grouping import Grouping, inc_update, ini_group, w_inter
from .sim import MetricsReport, compare_runs, latency_classification, run
from .traffic import Trace, compute_intensity_matrix, generate_synthetic_trace, load_trace

__all__ = [
    "Grouping", "MetricsReport", "SimConfig", "Trace", "compare_runs",
    "compute_intensity_matrix", "generate_synthetic_trace", "inc_update", "ini_group",
    "latency_classification", "load_config", "load_trace", "run", "w_inter",
]
__version__ = "0.1.0"
