"""Discrete-round simulator for energy-efficient wireless federated learning.

Joint quantization-level selection, client scheduling, OFDMA channel
allocation and CPU-frequency control, solved each round by a closed-form
per-client optimizer inside a genetic channel search, with virtual queues
enforcing the long-term learning budgets.
"""

from .config import ExperimentConfig, load_config
from .simctl import run_experiment, run_sweep

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "load_config", "run_experiment", "run_sweep", "__version__"]
