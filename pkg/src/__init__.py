"""
Friedrichs WCL: weak coupling limit laboratory for Friedrichs Hamiltonians
"""

__version__ = "0.1.0"

from .catalog import get_catalog, get_model_by_id, load_model
from .config import Config, SweepConfig, get_config
from .davies import closed_form, dynamic, run_routes, stationary
from .dilation import build_system, group_Ut, resolvent_Q, run_diagnostics
from .model import assemble, build_grid, check_assumptions
from .orchestration import run_sweep

__all__ = [
    "load_model",
    "get_catalog",
    "get_model_by_id",
    "check_assumptions",
    "build_grid",
    "assemble",
    "closed_form",
    "stationary",
    "dynamic",
    "run_routes",
    "build_system",
    "resolvent_Q",
    "group_Ut",
    "run_diagnostics",
    "run_sweep",
    "Config",
    "SweepConfig",
    "get_config",
]
