"""Exhaustive pilot-grid enumeration oracle for tiny controller instances.

Mirrors the controller problem constraints exactly (SoC box, departure
windows, terminal reachability, clamped transformer headroom) but searches
the actuable pilot-level grid by brute force instead of solving a MILP.
Flexibility bands, when enabled, are optimized analytically per cell given
the fixed power point, which is exact because they couple to nothing else.
"""

from __future__ import annotations

import itertools

import numpy as np

from v2gmpc.controllers import _flex_locked
from v2gmpc.prediction import (
    HorizonView,
    departure_constraints,
    soc_lower_bounds,
)
from v2gmpc.scenario import EvSession

MIN_A, MAX_A = 6, 32
CHARGE_LEVELS = np.concatenate([[0], np.arange(MIN_A, MAX_A + 1)])  # pilot units


def make_instance(
    rng: np.random.Generator, n: int, horizon: int, bidirectional: bool
) -> HorizonView:
    """A tiny synthetic instance with reachable departures."""
    delta_t = 0.25
    capacity = float(rng.choice([30.0, 50.0]))
    x0 = rng.uniform(0.3, 0.85, n)
    sessions = []
    availability = np.zeros((n, horizon))
    for i in range(n):
        # departure either inside the horizon or safely beyond it
        if rng.random() < 0.6 and horizon > 1:
            dep = int(rng.integers(1, horizon + 1))
        else:
            dep = horizon + int(rng.integers(1, 6))
        max_gain = dep * delta_t * 22.0 / capacity
        # keep the target reachable on the coarse pilot grid as well: below
        # the SoC ceiling and away from razor-thin headroom boundaries
        required = min(0.97, x0[i] + rng.uniform(0.0, 0.55) * max_gain)
        required = max(required, 0.1)
        sessions.append(
            EvSession(
                id=i, charger_id=i, arrival_step=0, departure_step=dep,
                soc_arrival=float(x0[i]), soc_required_min=float(required),
                capacity_kwh=capacity,
            )
        )
        availability[i, :min(dep, horizon)] = 1.0
    b = delta_t / capacity
    return HorizonView(
        k=0,
        horizon=horizon,
        delta_t_h=delta_t,
        x0=x0,
        sessions=sessions,
        availability=availability,
        b_charge=availability * b,
        b_discharge=availability * b,
        rated_charge=np.full(n, 22.0),
        rated_discharge=np.full(n, 22.0),
        charger_transformer=np.zeros(n, dtype=int),
        headroom=rng.uniform(25.0, 70.0, (1, horizon)),
        price_charge=rng.uniform(0.05, 0.25, horizon),
        price_discharge=1.2 * rng.uniform(0.05, 0.25, horizon),
        price_flex_charge=rng.uniform(0.02, 0.1, horizon),
        price_flex_discharge=rng.uniform(0.02, 0.1, horizon),
    )


def grid_optimum(
    view: HorizonView, bidirectional: bool, with_flex: bool = False
) -> float | None:
    """Minimum objective over every actuable pilot-level combination."""
    n, horizon = view.availability.shape
    floors = soc_lower_bounds(view)
    departures = departure_constraints(view)
    active = [(i, h) for h in range(horizon) for i in range(n)
              if view.availability[i, h]]
    unit_c = view.rated_charge / MAX_A
    unit_d = view.rated_discharge / MAX_A

    if bidirectional:
        cell_levels = np.concatenate([CHARGE_LEVELS, -np.arange(MIN_A, MAX_A + 1)])
    else:
        cell_levels = CHARGE_LEVELS
    combos = np.array(
        list(itertools.product(cell_levels, repeat=len(active))), dtype=float
    )
    m = combos.shape[0]
    p_charge = np.zeros((m, n, horizon))
    p_discharge = np.zeros((m, n, horizon))
    for idx, (i, h) in enumerate(active):
        col = combos[:, idx]
        p_charge[:, i, h] = np.where(col > 0, col, 0.0) * unit_c[i]
        p_discharge[:, i, h] = np.where(col < 0, -col, 0.0) * unit_d[i]

    feasible = np.ones(m, dtype=bool)
    # SoC recursion with box, departure, and terminal checks
    x = np.repeat(view.x0[None, :], m, axis=0)
    states = np.empty((m, n, horizon))
    for h in range(horizon):
        x = (
            view.availability[None, :, h] * x
            + view.b_charge[None, :, h] * p_charge[:, :, h]
            - view.b_discharge[None, :, h] * p_discharge[:, :, h]
        )
        states[:, :, h] = x
    for i in range(n):
        if view.sessions[i] is None:
            continue
        for block in range(1, horizon + 1):
            if not view.availability[i, block - 1]:
                break
            xi_state = states[:, i, block - 1]
            feasible &= (xi_state <= 1.0 + 1e-9) & (xi_state >= floors[i] - 1e-9)
    for dep in departures:
        xi_state = states[:, dep.charger, dep.step_offset - 1]
        feasible &= (xi_state >= dep.min_soc - 1e-9) & (
            xi_state <= dep.max_soc + 1e-9
        )
    # transformer headroom with the same structural clamp as the builder
    for h in range(horizon):
        active_i = [i for i in range(n) if view.availability[i, h]]
        if not active_i:
            continue
        floor_rhs = (
            -sum(view.rated_discharge[i] for i in active_i) if bidirectional else 0.0
        )
        rhs = max(view.headroom[0, h], floor_rhs)
        net = p_charge[:, active_i, h].sum(axis=1) - p_discharge[:, active_i, h].sum(
            axis=1
        )
        feasible &= net <= rhs + 1e-9

    if not feasible.any():
        return None
    dt = view.delta_t_h
    cost = dt * (
        (p_charge * view.price_charge[None, None, :]).sum(axis=(1, 2))
        - (p_discharge * view.price_discharge[None, None, :]).sum(axis=(1, 2))
    )
    if with_flex:
        for i, h in active:
            if _flex_locked(view, i, h):
                continue
            fc = np.minimum(p_charge[:, i, h], view.rated_charge[i] - p_charge[:, i, h])
            cost -= dt * view.price_flex_charge[h] * fc
            if bidirectional:
                fd = np.minimum(
                    p_discharge[:, i, h],
                    view.rated_discharge[i] - p_discharge[:, i, h],
                )
                cost -= dt * view.price_flex_discharge[h] * fd
    return float(cost[feasible].min())


def one_step_cost_tolerance(view: HorizonView) -> float:
    """Cost of one quantization-grid step on every active cell.

    Feasible pilot levels are {0} U {6..32} units, so the widest gap between
    adjacent grid points is MIN_A units: a continuum optimum inside (0, 6)
    units forces the grid to round up to the minimum level.  One grid step is
    therefore MIN_A current units of power for one interval.
    """
    tol = 0.0
    for h in range(view.horizon):
        for i in range(view.n_chargers):
            if view.availability[i, h]:
                tol += view.delta_t_h * MIN_A * max(
                    view.price_charge[h] * view.rated_charge[i] / MAX_A,
                    view.price_discharge[h] * view.rated_discharge[i] / MAX_A,
                )
    return tol + 1e-6
