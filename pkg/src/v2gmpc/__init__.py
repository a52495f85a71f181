"""Discrete-time EV charging-pool simulation with receding-horizon MPC.

Modules:
  scenario     scenario synthesis and configuration (chargers, sessions,
               transformer series, demand-response events, prices)
  simengine    pilot-quantized plant, bookkeeping, forecasts
  prediction   lifted pool model and per-solve constraint data
  optimizer    LP/MILP problem container and HiGHS-backed solvers
  controllers  AFAP plus the four MPC strategies
  degradation  calendar and cyclic battery capacity-loss accounting
  metrics      run and batch statistics, report writers
  cli          experiment entry point (single / batch / m-sweep / bench)
"""

from .controllers import CONTROLLER_KINDS, Controller, ControllerConfig
from .degradation import DegradationParams, run_degradation
from .metrics import RunStats, batch, summarize
from .scenario import GenerationParams, Scenario, SimConfig, build_scenario
from .simengine import SimEnv

__all__ = [
    "CONTROLLER_KINDS",
    "Controller",
    "ControllerConfig",
    "DegradationParams",
    "run_degradation",
    "RunStats",
    "batch",
    "summarize",
    "GenerationParams",
    "Scenario",
    "SimConfig",
    "build_scenario",
    "SimEnv",
]

__version__ = "0.1.0"
