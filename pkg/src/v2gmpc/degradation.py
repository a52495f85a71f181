"""Post-hoc battery capacity-loss accounting.

Capacity loss is split into a calendar component, driven by time spent at a
given average state of charge, and a cyclic component driven by energy
throughput.  Losses are evaluated per EV over its connected span only and
are never fed back into the controllers.

Unit conventions: the temperature enters the exponential in kelvin, and the
duration in the calendar term is measured in days.  The SoC-deviation term
of the cyclic loss is a time-weighted average and therefore unit-free, while
the throughput term uses kWh.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DegradationParams",
    "DegradationResult",
    "calendar_loss",
    "cyclic_loss",
    "run_degradation",
    "write_degradation_csv",
]

KELVIN_OFFSET = 273.15
HOURS_PER_DAY = 24.0


@dataclass(frozen=True)
class DegradationParams:
    eps0: float = 6.23e6
    eps1: float = 1.38e6
    eps2: float = 6976.0
    theta_c: float = 28.0
    zeta0: float = 4.02e-4
    zeta1: float = 2.04e-3
    t_tot_days: float = 730.0
    q_acc_kwh: float = 11160.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) <= 0:
                raise ValueError(f"degradation parameter {name} must be positive")


@dataclass(frozen=True)
class DegradationResult:
    ev_id: int
    d_cal: float
    d_cyc: float
    energy_throughput_kwh: float
    mean_soc: float

    @property
    def q_lost(self) -> float:
        return self.d_cal + self.d_cyc


def calendar_loss(
    soc_trace: np.ndarray,
    duration_days: float,
    params: DegradationParams = DegradationParams(),
) -> float:
    """Calendar capacity loss over `duration_days` at the trace's mean SoC."""
    soc_trace = np.asarray(soc_trace, dtype=float)
    if soc_trace.size == 0:
        raise ValueError("soc_trace must be nonempty")
    if duration_days <= 0:
        raise ValueError("duration_days must be > 0")
    mean_soc = float(soc_trace.mean())
    theta_k = params.theta_c + KELVIN_OFFSET
    return (
        0.75
        * (params.eps0 * mean_soc - params.eps1)
        * np.exp(-params.eps2 / theta_k)
        * duration_days
        / params.t_tot_days**0.25
    )


def cyclic_loss(
    soc_trace: np.ndarray,
    power_trace_kw: np.ndarray,
    delta_t_h: float,
    params: DegradationParams = DegradationParams(),
) -> float:
    """Cyclic capacity loss from throughput and SoC excursion.

    `power_trace_kw` holds signed per-step battery power; both charge and
    discharge magnitudes count toward throughput.
    """
    soc_trace = np.asarray(soc_trace, dtype=float)
    power_trace_kw = np.asarray(power_trace_kw, dtype=float)
    if soc_trace.shape != power_trace_kw.shape:
        raise ValueError("soc_trace and power_trace_kw must have equal length")
    if delta_t_h <= 0:
        raise ValueError("delta_t_h must be > 0")
    if soc_trace.size == 0:
        return 0.0
    duration_h = soc_trace.size * delta_t_h
    mean_soc = soc_trace.mean()
    deviation = float(np.abs(mean_soc - soc_trace).sum()) * delta_t_h / duration_h
    throughput_kwh = float(np.abs(power_trace_kw).sum()) * delta_t_h
    return (params.zeta0 + params.zeta1 * deviation) * throughput_kwh / np.sqrt(
        params.q_acc_kwh
    )


def run_degradation(
    traces: dict[int, tuple[np.ndarray, np.ndarray]],
    delta_t_h: float,
    params: DegradationParams = DegradationParams(),
) -> tuple[list[DegradationResult], dict[str, float]]:
    """Apply both losses per EV and sum fleetwide.

    `traces` maps ev_id -> (soc_trace, power_trace_kw) over the EV's
    connected steps.
    """
    results = []
    for ev_id in sorted(traces):
        soc_trace, power_trace = traces[ev_id]
        soc_trace = np.asarray(soc_trace, dtype=float)
        power_trace = np.asarray(power_trace, dtype=float)
        if soc_trace.size == 0:
            results.append(DegradationResult(ev_id, 0.0, 0.0, 0.0, 0.0))
            continue
        duration_days = soc_trace.size * delta_t_h / HOURS_PER_DAY
        d_cal = calendar_loss(soc_trace, duration_days, params)
        d_cyc = cyclic_loss(soc_trace, power_trace, delta_t_h, params)
        throughput = float(np.abs(power_trace).sum()) * delta_t_h
        results.append(
            DegradationResult(
                ev_id=ev_id,
                d_cal=d_cal,
                d_cyc=d_cyc,
                energy_throughput_kwh=throughput,
                mean_soc=float(soc_trace.mean()),
            )
        )
    totals = {
        "sum_d_cal": sum(r.d_cal for r in results),
        "sum_d_cyc": sum(r.d_cyc for r in results),
        "sum_q_lost": sum(r.q_lost for r in results),
    }
    return results, totals


def write_degradation_csv(path: str | Path, results: list[DegradationResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["ev_id", "d_cal", "d_cyc", "q_lost", "energy_throughput_kwh", "mean_soc"]
        )
        for r in results:
            writer.writerow(
                [
                    r.ev_id,
                    f"{r.d_cal:.12e}",
                    f"{r.d_cyc:.12e}",
                    f"{r.q_lost:.12e}",
                    f"{r.energy_throughput_kwh:.6f}",
                    f"{r.mean_soc:.9f}",
                ]
            )
