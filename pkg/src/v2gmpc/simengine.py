"""Discrete-time charging-pool environment.

Advances the per-charger state one step at a time: normalizes controller
actions to requested powers, quantizes them onto the pilot-signal grid,
clips against SoC limits, settles cash flows, and tracks transformer
overloads and demand-response compliance.  Overloads are observations only;
they never alter the dynamics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario import ChargerSpec, EvSession, Scenario, MAX_CURRENT_A, MIN_CURRENT_A

__all__ = [
    "PoolState",
    "StepRecord",
    "SimEnv",
    "quantize_power",
    "feasible_levels_kw",
    "forecast_series",
    "FORECAST_SD_FRACTION",
]

FORECAST_SD_FRACTION = 0.05
_OVERLOAD_TOL = 1e-9


@dataclass
class ChargerSlot:
    session: EvSession | None = None
    soc: float = 0.0

    @property
    def connected(self) -> bool:
        return self.session is not None


@dataclass
class PoolState:
    """Measured state of the pool at step k."""

    step: int
    slots: list[ChargerSlot]

    @property
    def soc(self) -> np.ndarray:
        return np.array([s.soc for s in self.slots])

    @property
    def connected(self) -> np.ndarray:
        return np.array([s.connected for s in self.slots], dtype=bool)


@dataclass
class StepRecord:
    step: int
    p_charge_kw: np.ndarray
    p_discharge_kw: np.ndarray
    transformer_net_kw: np.ndarray
    transformer_limit_kw: np.ndarray
    overload: np.ndarray
    dr_active: np.ndarray
    cash_eur: float
    arrivals: list[int] = field(default_factory=list)
    departures: list[tuple[int, float, bool]] = field(default_factory=list)  # (ev, soc, met)


def feasible_levels_kw(spec: ChargerSpec, direction: str) -> np.ndarray:
    """The actuable power set: zero plus the 6..32 A pilot levels."""
    unit = spec.level_kw(direction)
    return np.concatenate(
        [[0.0], unit * np.arange(MIN_CURRENT_A, MAX_CURRENT_A + 1)]
    )


def quantize_power(requested_kw: float, spec: ChargerSpec, direction: str) -> float:
    """Snap a request to the nearest feasible level, ties toward the lower."""
    if requested_kw < 0:
        raise ValueError("requested_kw must be >= 0")
    levels = feasible_levels_kw(spec, direction)
    idx = int(np.argmin(np.abs(levels - requested_kw)))  # first hit wins ties
    return float(levels[idx])


def _floor_level(value_kw: float, spec: ChargerSpec, direction: str) -> float:
    levels = feasible_levels_kw(spec, direction)
    below = levels[levels <= value_kw + 1e-12]
    return float(below[-1]) if below.size else 0.0


def forecast_series(
    actual: np.ndarray, k: int, horizon: int, rng: np.random.Generator
) -> np.ndarray:
    """Gaussian forecast of `actual[k : k+horizon]`, sigma at 5% of actual.

    Steps past the end of the series are zero-padded (end of day).
    """
    actual = np.asarray(actual, dtype=float)
    out = np.zeros(horizon)
    for h in range(horizon):
        idx = k + h
        if idx >= len(actual):
            continue
        value = actual[idx]
        out[h] = max(0.0, rng.normal(value, FORECAST_SD_FRACTION * abs(value)))
    return out


def discharge_floor(session: EvSession, soc: float) -> float:
    """Minimum SoC the plant lets a connected EV discharge down to."""
    return soc if soc < session.soc_floor else session.soc_floor


class SimEnv:
    """Single-writer sequential environment for one scenario run."""

    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.config.seed if seed is None else seed
        self._sessions_by_charger: list[list[EvSession]] = [
            [] for _ in scenario.chargers
        ]
        for s in scenario.sessions:
            self._sessions_by_charger[s.charger_id].append(s)
        for lst in self._sessions_by_charger:
            lst.sort(key=lambda s: s.arrival_step)
        self.state: PoolState | None = None
        self.records: list[StepRecord] = []
        self.ev_traces: dict[int, tuple[list[float], list[float]]] = {}
        self.departure_log: list[tuple[int, float, float]] = []  # (ev, soc, required)
        self._next_idx: list[int] = []

    @property
    def n_chargers(self) -> int:
        return len(self.scenario.chargers)

    def reset(self) -> PoolState:
        config = self.scenario.config
        slots = [ChargerSlot() for _ in range(config.n_chargers)]
        self._next_idx = [0] * config.n_chargers
        self.records = []
        self.ev_traces = {s.id: ([], []) for s in self.scenario.sessions}
        self.departure_log = []
        self.state = PoolState(step=0, slots=slots)
        self._connect_arrivals(0)
        return self.state

    def _connect_arrivals(self, k: int) -> None:
        for i, slot in enumerate(self.state.slots):
            idx = self._next_idx[i]
            sessions = self._sessions_by_charger[i]
            if idx < len(sessions) and sessions[idx].arrival_step == k:
                session = sessions[idx]
                slot.session = session
                slot.soc = session.soc_arrival
                self._next_idx[i] += 1
                if self.records and self.records[-1].step == k - 1:
                    self.records[-1].arrivals.append(session.id)

    def forecast_rng(self, k: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, 1000003, k])

    def transformer_forecasts(
        self, k: int, horizon: int
    ) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """(load, pv, announced-DR-reduction) per transformer over the horizon.

        The first entry of load and PV is the current measurement; later
        steps carry forecast noise.  DR reductions appear only for events
        already inside their notice window.
        """
        rng = self.forecast_rng(k)
        out = []
        for tr in self.scenario.transformers:
            load = forecast_series(tr.inflexible_load_kw, k, horizon, rng)
            pv = forecast_series(tr.pv_generation_kw, k, horizon, rng)
            if k < self.scenario.config.sim_steps:
                load[0] = tr.inflexible_load_kw[k]
                pv[0] = tr.pv_generation_kw[k]
            dr = np.array(
                [
                    tr.announced_dr_kw(now=k, k=k + h)
                    if k + h < self.scenario.config.sim_steps
                    else 0.0
                    for h in range(horizon)
                ]
            )
            out.append((load, pv, dr))
        return out

    def _apply_action(
        self, slot: ChargerSlot, spec: ChargerSpec, action: float, delta_t_h: float
    ) -> tuple[float, float]:
        """Quantize and clip one charger's action; returns (P^c, P^d) in kW."""
        if not slot.connected or action == 0.0:
            return 0.0, 0.0
        session = slot.session
        if action > 0:
            requested = min(action, 1.0) * spec.max_charge_kw
            headroom = (1.0 - slot.soc) * session.capacity_kwh / (
                delta_t_h * session.eta_charge
            )
            applied = quantize_power(min(requested, max(headroom, 0.0)), spec, "charge")
            if applied > headroom + 1e-9:
                applied = _floor_level(headroom, spec, "charge")
            return applied, 0.0
        requested = min(-action, 1.0) * spec.max_discharge_kw
        floor = discharge_floor(session, slot.soc)
        available = (slot.soc - floor) * session.capacity_kwh * session.eta_discharge / delta_t_h
        applied = quantize_power(min(requested, max(available, 0.0)), spec, "discharge")
        if applied > available + 1e-9:
            applied = _floor_level(available, spec, "discharge")
        return 0.0, applied

    def step(self, actions: np.ndarray) -> tuple[PoolState, StepRecord]:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n_chargers,):
            raise ValueError(
                f"action vector length {actions.shape} != ({self.n_chargers},)"
            )
        config = self.scenario.config
        k = self.state.step
        if k >= config.sim_steps:
            raise RuntimeError("simulation already past its final step")
        dt = config.delta_t_h

        p_charge = np.zeros(self.n_chargers)
        p_discharge = np.zeros(self.n_chargers)
        for i, slot in enumerate(self.state.slots):
            pc, pd = self._apply_action(
                slot, self.scenario.chargers[i], actions[i], dt
            )
            p_charge[i] = pc
            p_discharge[i] = pd
            if slot.connected:
                session = slot.session
                trace = self.ev_traces[session.id]
                trace[0].append(slot.soc)
                trace[1].append(pc - pd)
                slot.soc = slot.soc + dt / session.capacity_kwh * (
                    session.eta_charge * pc - pd / session.eta_discharge
                )

        n_tr = len(self.scenario.transformers)
        net = np.zeros(n_tr)
        limit = np.zeros(n_tr)
        overload = np.zeros(n_tr, dtype=bool)
        dr_active = np.zeros(n_tr, dtype=bool)
        for g, tr in enumerate(self.scenario.transformers):
            charger_net = sum(
                p_charge[i] - p_discharge[i] for i in tr.charger_ids
            )
            reduction = tr.dr_reduction_kw(k)
            net[g] = charger_net + tr.inflexible_load_kw[k] - tr.pv_generation_kw[k]
            limit[g] = tr.power_limit_kw - reduction
            overload[g] = net[g] > limit[g] + _OVERLOAD_TOL
            dr_active[g] = reduction > 0.0

        cash = dt * (
            self.scenario.prices.discharge[k] * p_discharge.sum()
            - self.scenario.prices.charge[k] * p_charge.sum()
        )
        record = StepRecord(
            step=k,
            p_charge_kw=p_charge,
            p_discharge_kw=p_discharge,
            transformer_net_kw=net,
            transformer_limit_kw=limit,
            overload=overload,
            dr_active=dr_active,
            cash_eur=cash,
        )
        self.records.append(record)

        # departures happen at d_j: the EV is gone before step k+1 is applied
        for i, slot in enumerate(self.state.slots):
            if slot.connected and slot.session.departure_step == k + 1:
                session = slot.session
                met = slot.soc >= session.soc_required_min - 1e-9
                record.departures.append((session.id, slot.soc, met))
                self.departure_log.append(
                    (session.id, slot.soc, session.soc_required_min)
                )
                slot.session = None
                slot.soc = 0.0
        self.state.step = k + 1
        if k + 1 < config.sim_steps:
            self._connect_arrivals(k + 1)
        return self.state, record

    def write_trace_csv(self, path: str | Path) -> None:
        prices = self.scenario.prices
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "step", "charger_id", "ev_id", "soc", "p_charge_kw",
                    "p_discharge_kw", "transformer_id", "net_kw", "limit_kw",
                    "overload", "price_charge", "price_discharge", "cash_eur",
                ]
            )
            soc_at = self._soc_history()
            for rec in self.records:
                k = rec.step
                for i, charger in enumerate(self.scenario.chargers):
                    g = charger.transformer_id
                    ev_id, soc = soc_at[k][i]
                    writer.writerow(
                        [
                            k, i, ev_id if ev_id is not None else "",
                            f"{soc:.9f}",
                            f"{rec.p_charge_kw[i]:.6f}",
                            f"{rec.p_discharge_kw[i]:.6f}",
                            g,
                            f"{rec.transformer_net_kw[g]:.6f}",
                            f"{rec.transformer_limit_kw[g]:.6f}",
                            int(rec.overload[g]),
                            f"{prices.charge[k]:.6f}",
                            f"{prices.discharge[k]:.6f}",
                            f"{rec.cash_eur:.9f}",
                        ]
                    )

    def _soc_history(self) -> list[list[tuple[int | None, float]]]:
        """Reconstruct (ev_id, soc) per charger per recorded step."""
        history: list[list[tuple[int | None, float]]] = []
        cursor: dict[int, int] = {s.id: 0 for s in self.scenario.sessions}
        for rec in self.records:
            row: list[tuple[int | None, float]] = []
            for i in range(self.n_chargers):
                session = self._session_at(i, rec.step)
                if session is None:
                    row.append((None, 0.0))
                else:
                    idx = cursor[session.id]
                    socs = self.ev_traces[session.id][0]
                    row.append((session.id, socs[idx] if idx < len(socs) else 0.0))
                    cursor[session.id] += 1
            history.append(row)
        return history

    def _session_at(self, charger_id: int, k: int) -> EvSession | None:
        for s in self._sessions_by_charger[charger_id]:
            if s.arrival_step <= k < s.departure_step:
                return s
        return None
