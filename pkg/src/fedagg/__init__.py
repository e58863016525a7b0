"""Federated aggregation simulator with dual-criterion (quantity + quality) weighting."""

from .baselines import STRATEGIES
from .config import ExperimentConfig, load_config, parse_config
from .orchestrator import run_sweep

__all__ = ["STRATEGIES", "ExperimentConfig", "load_config", "parse_config", "run_sweep"]
__version__ = "0.1.0"
