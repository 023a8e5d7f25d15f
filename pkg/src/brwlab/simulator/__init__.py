"""Branching random walk simulators: exact event-driven and hybrid front."""

from .core import (DEFAULT_EVENT_CAP, DEFAULT_POPULATION_CAP, FrontTrajectory, Particle,
                   PopulationTrajectory, SimConfig, Termination, TreeRecord, front_replicas,
                   replica_generator, simulate, simulate_front, simulate_replicas, simulate_tree)
from .scans import (CapScanRow, CapScanResult, StartComparison, cap_hit_scan,
                    start_position_irrelevance_check)

__all__ = [
    "DEFAULT_EVENT_CAP", "DEFAULT_POPULATION_CAP", "FrontTrajectory", "Particle",
    "PopulationTrajectory", "SimConfig", "Termination", "TreeRecord", "front_replicas",
    "replica_generator", "simulate", "simulate_front", "simulate_replicas", "simulate_tree",
    "CapScanRow", "CapScanResult", "StartComparison", "cap_hit_scan",
    "start_position_irrelevance_check",
]
