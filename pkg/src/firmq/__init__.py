"""Firm real-time single-server queue simulator with loss-ratio verification tools."""

from .engine import SimOutcome, run, run_coupled
from .model import Status, Trace, generate_trace
from .sched import POLICY_NAMES, PolicySpec

__version__ = "0.1.0"

__all__ = ["POLICY_NAMES", "PolicySpec", "SimOutcome", "Status", "Trace",
           "generate_trace", "run", "run_coupled", "__version__"]
