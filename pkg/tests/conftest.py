"""Shared fixtures: desk-scale closed-loop batches reused across tests.

The acceptance tests all evaluate the same 50-seed, five-controller batch;
running it once per session keeps the suite inside its runtime budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import pytest

from v2gmpc.cli import run_simulation
from v2gmpc.controllers import CONTROLLER_KINDS
from v2gmpc.metrics import RunStats
from v2gmpc.scenario import GenerationParams, SimConfig, build_scenario

BATCH_SEEDS = tuple(range(50))
SWEEP_SEEDS = tuple(range(6))
SWEEP_M_VALUES = (0.8, 0.9, 1.0, 1.1, 1.2)


@dataclass(frozen=True)
class RunResult:
    stats: RunStats
    sum_d_cal: float
    sum_d_cyc: float
    applied_power: tuple[float, ...]  # flattened per-step signed kW, for identity checks


def _run_cell(seed: int, kind: str, m: float) -> RunResult:
    config = SimConfig(seed=seed, discharge_multiplier=m)
    scenario = build_scenario(config, GenerationParams(), seed=seed)
    stats, env, controller, _ = run_simulation(scenario, kind, config.horizon_steps)
    applied = []
    for record in env.records:
        applied.extend(np.asarray(record.p_charge_kw) - np.asarray(record.p_discharge_kw))
    return RunResult(
        stats=stats,
        sum_d_cal=stats.sum_d_cal,
        sum_d_cyc=stats.sum_d_cyc,
        applied_power=tuple(float(p) for p in applied),
    )


@pytest.fixture(scope="session")
def batch50():
    """50 paired seeds x 5 controllers at m=1.2 defaults; returns (runs, elapsed_s).

    runs maps (kind, seed) -> RunResult.
    """
    t0 = time.perf_counter()
    runs = {}
    for seed in BATCH_SEEDS:
        for kind in CONTROLLER_KINDS:
            runs[(kind, seed)] = _run_cell(seed, kind, m=1.2)
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="session")
def msweep():
    """Paired-seed sweep over the discharge-price multiplier m.

    Returns runs mapping (m, kind, seed) -> RunResult.
    """
    runs = {}
    for m in SWEEP_M_VALUES:
        for seed in SWEEP_SEEDS:
            for kind in CONTROLLER_KINDS:
                runs[(m, kind, seed)] = _run_cell(seed, kind, m=m)
    return runs


def tiny_config(**overrides) -> tuple[SimConfig, GenerationParams]:
    """A fast scenario for CLI/metrics tests (2 chargers, 6-hour day)."""
    config = SimConfig(n_chargers=2, n_transformers=1, horizon_steps=6, seed=3)
    params = GenerationParams(target_ev_count=5)
    if overrides:
        config = replace(config, **{k: v for k, v in overrides.items()
                                    if k in SimConfig.__dataclass_fields__})
        params = replace(params, **{k: v for k, v in overrides.items()
                                    if k in GenerationParams.__dataclass_fields__})
    return config, params
