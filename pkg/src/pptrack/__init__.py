"""Adaptive-critic optimal tracking control with prescribed-performance
barrier penalties, simulated on a two-link manipulator."""

from .config import ConfigError, ScenarioPreset, load_preset, parse_config
from .simulation import EpisodeAborted, SimConfig, TrajectoryLog, run_scenario

__all__ = [
    "ConfigError",
    "EpisodeAborted",
    "ScenarioPreset",
    "SimConfig",
    "TrajectoryLog",
    "load_preset",
    "parse_config",
    "run_scenario",
]
