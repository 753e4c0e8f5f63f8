"""Simulator and optimization engine for an actively amplified STAR surface
assisting an edge-computing cell: per-slot transmit-power and offload-split
solvers wrapped in a queue-aware learning controller."""

from .scenario import Scenario, load_scenario, sample_users, save_scenario
from .channel import ChannelRealization, RisState, sample_channels
from .env import EnvOptions, MecEnv
from .orchestrator import (EpisodeRecord, SweepSpec, run_benchmark, run_episode,
                           run_queue_baseline, run_sweep)

__all__ = [
    "Scenario", "load_scenario", "save_scenario", "sample_users",
    "ChannelRealization", "RisState", "sample_channels",
    "MecEnv", "EnvOptions",
    "EpisodeRecord", "SweepSpec", "run_episode", "run_benchmark",
    "run_queue_baseline", "run_sweep",
]

__version__ = "0.1.0"
