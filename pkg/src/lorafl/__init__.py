"""Simulator for federated learning over LoRa networks."""

from .config import ConfigError, ScenarioConfig, load_config
from .runner import run_replication, run_scenario

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "run_replication", "run_scenario"]
__version__ = "0.1.0"
