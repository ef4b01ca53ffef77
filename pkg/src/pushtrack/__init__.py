"""Hybrid infrastructure/ad hoc content dissemination with acknowledgement-driven re-injection."""
from .contacts import ContactTrace, DatasetStats, dataset_stats, derive_contacts, load_contacts
from .controller import ConfigError, WhenStrategy, WhomStrategy, objective_value
from .engine import LinkSpec, Simulator
from .metrics import RunReport, export, load_report, offload_ratio
from .mobility import MobilityTrace, SyntheticConfig, generate_synthetic, load_trace, subsample
from .oracle import greedy_dominating_set, reachability_digraph
from .scenarios import (FloatingConfig, Mode, PeriodicConfig, replication_seed, run_floating,
                        run_periodic, run_reference)

__all__ = [
    "ConfigError", "ContactTrace", "DatasetStats", "FloatingConfig", "LinkSpec", "MobilityTrace",
    "Mode", "PeriodicConfig", "RunReport", "Simulator", "SyntheticConfig", "WhenStrategy",
    "WhomStrategy", "dataset_stats", "derive_contacts", "export", "generate_synthetic",
    "greedy_dominating_set", "load_contacts", "load_report", "load_trace", "objective_value",
    "offload_ratio", "reachability_digraph", "replication_seed", "run_floating", "run_periodic",
    "run_reference", "subsample",
]
