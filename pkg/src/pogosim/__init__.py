"""Deterministic headless simulator for Pogobot-class swarm robots.

Damped rigid-disk physics, probabilistic directional IR messaging, an
isolated per-robot controller runtime, columnar trajectory recording,
a parallel batch sweep runner and offline controller-parameter
optimization.
"""

from pogosim.config import SimConfig, load_config
from pogosim.runtime import ControllerHooks, RunArtifacts, run_simulation

__version__ = "0.1.0"

__all__ = ["SimConfig", "load_config", "ControllerHooks", "RunArtifacts",
           "run_simulation", "__version__"]
