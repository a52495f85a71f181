"""Run-level and batch-level result accounting.

`summarize` folds one simulation (environment records, controller log,
degradation) into a flat record; `batch` aggregates many paired runs into
per-controller means and sample standard deviations, the shape in which
strategies are compared.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .controllers import Controller
from .degradation import DegradationParams, DegradationResult, run_degradation
from .simengine import SimEnv

__all__ = [
    "RunStats",
    "BatchStats",
    "summarize",
    "batch",
    "write_run_json",
    "write_batch_csv",
    "DEPARTURE_TOL",
]

DEPARTURE_TOL = 1e-3  # SoC shortfall below which a departure still counts as met


@dataclass
class RunStats:
    controller: str
    seed: int
    horizon: int
    price_multiplier: float
    profit_eur: float
    energy_charged_kwh: float
    energy_discharged_kwh: float
    sum_d_cal: float
    sum_d_cyc: float
    sum_q_lost: float
    overload_steps: int
    dr_overload_steps: int
    dr_active_steps: int
    departures_total: int
    departures_met: int
    flex_offered_kwh: float
    mean_solve_ms: float
    max_solve_ms: float
    slack_steps: int
    fallback_steps: int

    @property
    def departure_service_rate(self) -> float:
        if self.departures_total == 0:
            return 1.0
        return self.departures_met / self.departures_total


@dataclass
class BatchStats:
    controller: str
    n_runs: int
    means: dict[str, float]
    stds: dict[str, float]  # sample std (ddof=1); zero when n_runs == 1


_AGGREGATED_FIELDS = (
    "profit_eur",
    "energy_charged_kwh",
    "energy_discharged_kwh",
    "sum_d_cal",
    "sum_d_cyc",
    "sum_q_lost",
    "overload_steps",
    "dr_overload_steps",
    "departures_total",
    "departures_met",
    "flex_offered_kwh",
    "mean_solve_ms",
    "max_solve_ms",
    "slack_steps",
    "fallback_steps",
)


def summarize(
    env: SimEnv,
    controller: Controller,
    price_multiplier: float = 1.0,
    degradation_params: DegradationParams | None = None,
) -> tuple[RunStats, list[DegradationResult]]:
    """Fold a finished run into one flat record (plus per-EV degradation)."""
    config = env.scenario.config
    dt = config.delta_t_h
    records = env.records
    if not records:
        raise ValueError("environment has no recorded steps")

    params = degradation_params or DegradationParams()
    deg_results, deg_totals = run_degradation(env.ev_traces, dt, params)

    profit = sum(r.cash_eur for r in records)
    charged = sum(float(r.p_charge_kw.sum()) for r in records) * dt
    discharged = sum(float(r.p_discharge_kw.sum()) for r in records) * dt
    overload_steps = sum(int(r.overload.sum()) for r in records)
    dr_overloads = sum(int((r.overload & r.dr_active).sum()) for r in records)
    dr_steps = sum(int(r.dr_active.sum()) for r in records)

    met = sum(
        1 for _, soc, required in env.departure_log if soc >= required - DEPARTURE_TOL
    )
    log = controller.log
    solve_ms = [row.solve_ms for row in log] or [0.0]
    flex_kwh = sum(row.total_flex_kw for row in log) * dt

    stats = RunStats(
        controller=controller.config.kind,
        seed=env.seed,
        horizon=controller.config.horizon,
        price_multiplier=price_multiplier,
        profit_eur=profit,
        energy_charged_kwh=charged,
        energy_discharged_kwh=discharged,
        sum_d_cal=deg_totals["sum_d_cal"],
        sum_d_cyc=deg_totals["sum_d_cyc"],
        sum_q_lost=deg_totals["sum_q_lost"],
        overload_steps=overload_steps,
        dr_overload_steps=dr_overloads,
        dr_active_steps=dr_steps,
        departures_total=len(env.departure_log),
        departures_met=met,
        flex_offered_kwh=flex_kwh,
        mean_solve_ms=float(np.mean(solve_ms)),
        max_solve_ms=float(np.max(solve_ms)),
        slack_steps=sum(1 for row in log if row.slack_used > 1e-9),
        fallback_steps=sum(
            1 for row in log if row.status not in ("optimal", "afap", "idle")
        ),
    )
    return stats, deg_results


def batch(runs: list[RunStats]) -> list[BatchStats]:
    """Group runs by controller and reduce to mean and sample std."""
    if not runs:
        return []
    by_controller: dict[str, list[RunStats]] = {}
    for run in runs:
        by_controller.setdefault(run.controller, []).append(run)
    out = []
    for controller, group in by_controller.items():
        means, stds = {}, {}
        for name in _AGGREGATED_FIELDS:
            values = np.array([float(getattr(r, name)) for r in group])
            means[name] = float(values.mean())
            stds[name] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        rates = np.array([r.departure_service_rate for r in group])
        means["departure_service_rate"] = float(rates.mean())
        stds["departure_service_rate"] = (
            float(rates.std(ddof=1)) if len(rates) > 1 else 0.0
        )
        out.append(
            BatchStats(
                controller=controller,
                n_runs=len(group),
                means=means,
                stds=stds,
            )
        )
    return out


def write_run_json(path: str | Path, stats: RunStats) -> None:
    payload = asdict(stats)
    payload["departure_service_rate"] = stats.departure_service_rate
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_batch_csv(path: str | Path, results: list[BatchStats]) -> None:
    fields = list(_AGGREGATED_FIELDS) + ["departure_service_rate"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["controller", "n_runs"]
            + [f"{name}_mean" for name in fields]
            + [f"{name}_std" for name in fields]
        )
        for result in results:
            writer.writerow(
                [result.controller, result.n_runs]
                + [f"{result.means[name]:.9g}" for name in fields]
                + [f"{result.stds[name]:.9g}" for name in fields]
            )
