"""Aerial-manipulator torch relay simulator.

A quadrotor carrying a 3-DoF arm is flown by a cascade controller with
arm-disturbance feed-forward, locates a marker-tagged target torch with EPnP
and runs a takeoff-to-landing lighting mission.
"""
from ._accel import NUMBA_ENABLED, backend
from .config import ConfigInvalid, ScenarioConfig, default_config, load_config
from .sim import EmptyRun, NumericalDivergence, export_metrics, run_batch, run_scenario
from .task import TaskState

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "backend", "ConfigInvalid", "ScenarioConfig", "default_config", "load_config",
    "EmptyRun", "NumericalDivergence", "export_metrics", "run_batch", "run_scenario", "TaskState",
]
