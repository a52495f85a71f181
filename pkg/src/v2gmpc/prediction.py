"""Charging-pool prediction model shared by all MPC variants.

Builds, for the current measured state, the per-step availability and input
gains over the horizon, stacks them into lifted matrices mapping a power
profile to the SoC trajectory, and derives per-step SoC bounds and
departure constraints.  Chargers whose EV has not arrived yet are invisible
(availability zero); the receding horizon picks them up on arrival.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import EvSession, Scenario
from .simengine import PoolState

__all__ = [
    "HorizonView",
    "LiftedModel",
    "DepartureConstraint",
    "build_horizon_view",
    "lift",
    "soc_lower_bounds",
    "departure_constraints",
]


@dataclass(frozen=True)
class DepartureConstraint:
    charger: int
    step_offset: int  # state block h' in 1..H (SoC at k + h')
    min_soc: float
    max_soc: float
    terminal: bool = False


@dataclass
class HorizonView:
    """Everything one solve needs, frozen at step k."""

    k: int
    horizon: int
    delta_t_h: float
    x0: np.ndarray  # measured SoC per charger
    sessions: list[EvSession | None]
    availability: np.ndarray  # (I, H) in {0, 1}
    b_charge: np.ndarray  # (I, H) SoC gain per kW of charging
    b_discharge: np.ndarray  # (I, H) SoC drop per kW of discharging
    rated_charge: np.ndarray  # (I,)
    rated_discharge: np.ndarray  # (I,)
    charger_transformer: np.ndarray  # (I,)
    headroom: np.ndarray  # (G, H): limit - announced DR - load~ + pv~
    price_charge: np.ndarray  # (H,)
    price_discharge: np.ndarray
    price_flex_charge: np.ndarray
    price_flex_discharge: np.ndarray

    @property
    def n_chargers(self) -> int:
        return len(self.sessions)


@dataclass
class LiftedModel:
    """X = a_stack @ x0 + g_stack @ P over the horizon.

    State blocks are x at k+1 .. k+H; the input vector P interleaves
    (P^c_i, P^d_i) per charger, step-major.
    """

    a_stack: np.ndarray  # (H*I, I)
    g_stack: np.ndarray  # (H*I, 2*H*I)
    x0: np.ndarray

    def predict(self, power_profile: np.ndarray) -> np.ndarray:
        return self.a_stack @ self.x0 + self.g_stack @ power_profile


def build_horizon_view(
    state: PoolState,
    scenario: Scenario,
    k: int,
    horizon: int,
    transformer_forecasts: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
) -> HorizonView:
    config = scenario.config
    n = len(scenario.chargers)
    availability = np.zeros((n, horizon))
    b_charge = np.zeros((n, horizon))
    b_discharge = np.zeros((n, horizon))
    rated_c = np.zeros(n)
    rated_d = np.zeros(n)
    sessions: list[EvSession | None] = []
    for i, slot in enumerate(state.slots):
        spec = scenario.chargers[i]
        rated_c[i] = spec.max_charge_kw
        rated_d[i] = spec.max_discharge_kw
        session = slot.session
        sessions.append(session)
        if session is None:
            continue
        for h in range(horizon):
            if k + h < session.departure_step:
                availability[i, h] = 1.0
                b_charge[i, h] = (
                    config.delta_t_h * session.eta_charge / session.capacity_kwh
                )
                b_discharge[i, h] = config.delta_t_h / (
                    session.capacity_kwh * session.eta_discharge
                )

    headroom = np.zeros((config.n_transformers, horizon))
    for g, tr in enumerate(scenario.transformers):
        load, pv, dr = transformer_forecasts[g]
        headroom[g] = tr.power_limit_kw - dr - load + pv

    return HorizonView(
        k=k,
        horizon=horizon,
        delta_t_h=config.delta_t_h,
        x0=state.soc,
        sessions=sessions,
        availability=availability,
        b_charge=b_charge,
        b_discharge=b_discharge,
        rated_charge=rated_c,
        rated_discharge=rated_d,
        charger_transformer=np.array(
            [c.transformer_id for c in scenario.chargers]
        ),
        headroom=headroom,
        price_charge=_window(scenario.prices.charge, k, horizon),
        price_discharge=_window(scenario.prices.discharge, k, horizon),
        price_flex_charge=_window(scenario.prices.flex_charge, k, horizon),
        price_flex_discharge=_window(scenario.prices.flex_discharge, k, horizon),
    )


def _window(series: np.ndarray, k: int, horizon: int) -> np.ndarray:
    out = np.zeros(horizon)
    end = min(k + horizon, len(series))
    if end > k:
        out[: end - k] = series[k:end]
    return out


def lift(view: HorizonView, x0: np.ndarray | None = None) -> LiftedModel:
    """Stack the per-step pool model into horizon prediction matrices."""
    x0 = view.x0 if x0 is None else np.asarray(x0, dtype=float)
    n = view.n_chargers
    h_len = view.horizon
    xi = view.availability

    a_stack = np.zeros((h_len * n, n))
    g_stack = np.zeros((h_len * n, 2 * h_len * n))
    # cum[h'] = A_{k+h'-1} ... A_k as a diagonal (product of xi columns)
    cum = np.ones(n)
    cums = np.empty((h_len + 1, n))
    cums[0] = cum
    for h in range(h_len):
        cum = cum * xi[:, h]
        cums[h + 1] = cum
    for block in range(1, h_len + 1):
        rows = slice((block - 1) * n, block * n)
        a_stack[rows] = np.diag(cums[block])
        for m in range(block):
            # diag multiplier A_{k+block-1} ... A_{k+m+1} applied to B_m
            mult = np.ones(n)
            for h in range(m + 1, block):
                mult *= xi[:, h]
            cols = slice(2 * m * n, 2 * (m + 1) * n)
            b_block = np.zeros((n, 2 * n))
            b_block[np.arange(n), 2 * np.arange(n)] = view.b_charge[:, m]
            b_block[np.arange(n), 2 * np.arange(n) + 1] = -view.b_discharge[:, m]
            g_stack[rows, cols] = mult[:, None] * b_block
    return LiftedModel(a_stack=a_stack, g_stack=g_stack, x0=x0)


def soc_lower_bounds(view: HorizonView, x0: np.ndarray | None = None) -> np.ndarray:
    """Per-charger SoC floor held constant within one solve.

    Connected EVs may not discharge below their floor; an EV already under
    the floor may not discharge further.  Empty chargers sit at zero.
    """
    x0 = view.x0 if x0 is None else np.asarray(x0, dtype=float)
    bounds = np.zeros(view.n_chargers)
    for i, session in enumerate(view.sessions):
        if session is None:
            continue
        bounds[i] = x0[i] if x0[i] < session.soc_floor else session.soc_floor
    return bounds


def departure_constraints(
    view: HorizonView, k: int | None = None, horizon: int | None = None
) -> list[DepartureConstraint]:
    """Departure-SoC windows within the horizon plus terminal reachability.

    For departures beyond the horizon the terminal state must stay close
    enough that full-power charging can still reach the required SoC in the
    remaining steps (clamped at the discharge floor).
    """
    k = view.k if k is None else k
    horizon = view.horizon if horizon is None else horizon
    floors = soc_lower_bounds(view)
    out = []
    for i, session in enumerate(view.sessions):
        if session is None:
            continue
        if session.departure_step <= k + horizon:
            out.append(
                DepartureConstraint(
                    charger=i,
                    step_offset=session.departure_step - k,
                    min_soc=session.soc_required_min,
                    max_soc=session.soc_required_max,
                )
            )
        else:
            steps_after = session.departure_step - (k + horizon)
            max_gain = (
                steps_after
                * view.delta_t_h
                * session.eta_charge
                * view.rated_charge[i]
                / session.capacity_kwh
            )
            lo = max(floors[i], session.soc_required_min - max_gain)
            out.append(
                DepartureConstraint(
                    charger=i,
                    step_offset=horizon,
                    min_soc=lo,
                    max_soc=1.0,
                    terminal=True,
                )
            )
    return out
