"""The five charging strategies.

AFAP charges every connected EV toward its required SoC at maximum power.
The four MPC variants solve, each step, an economic dispatch over the
horizon: eMPC minimizes energy cost (G2V is a pure LP, V2G adds binary
charge/discharge selectors), OCMF additionally rewards the symmetric power
band each charger could deviate by (its flexibility offer).

Commands are rounded onto the pilot-current grid before actuation, with
departure targets snapped to the SoC lattice reachable from the measured
state.  This keeps the plant quantizer from stranding an EV a fraction of a
level below its target, and makes every strategy land departures on exactly
the same SoC.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import optimizer
from .optimizer import MilpProblem, MilpSolution
from .prediction import (
    DepartureConstraint,
    HorizonView,
    LiftedModel,
    build_horizon_view,
    departure_constraints,
    lift,
    soc_lower_bounds,
)
from .scenario import MAX_CURRENT_A, MIN_CURRENT_A, EvSession, Scenario
from .simengine import PoolState, SimEnv, discharge_floor

__all__ = [
    "CONTROLLER_KINDS",
    "ControllerConfig",
    "ActionPlan",
    "Controller",
    "afap_actions",
    "build_empc",
    "build_ocmf",
    "ProblemLayout",
    "snapped_target",
    "choose_level",
    "charge_level_candidates",
    "discharge_level_candidates",
]

CONTROLLER_KINDS = ("afap", "empc_g2v", "empc_v2g", "ocmf_g2v", "ocmf_v2g")
_FORBIDDEN_RESIDUALS = range(1, MIN_CURRENT_A)  # pilot units that strand an EV


@dataclass
class ControllerConfig:
    kind: str
    horizon: int = 10
    slack_penalty: float | None = None  # None: derived from prices at first solve
    quantize_commands: bool = True
    node_limit: int | None = None
    time_limit: float | None = 0.5  # per-solve cap; incumbent is used past it
    mip_rel_gap: float = 1e-2

    def __post_init__(self) -> None:
        if self.kind not in CONTROLLER_KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def bidirectional(self) -> bool:
        return self.kind.endswith("v2g")

    @property
    def with_flex(self) -> bool:
        return self.kind.startswith("ocmf")


@dataclass
class ActionPlan:
    actions: np.ndarray
    planned_charge_kw: np.ndarray  # (I, H)
    planned_discharge_kw: np.ndarray
    planned_flex_charge_kw: np.ndarray
    planned_flex_discharge_kw: np.ndarray
    status: str
    objective: float | None = None
    node_count: int = 0
    solve_ms: float = 0.0
    slack_used: float = 0.0
    fallback: bool = False

    @property
    def total_flex_kw(self) -> float:
        return float(
            self.planned_flex_charge_kw[:, 0].sum()
            + self.planned_flex_discharge_kw[:, 0].sum()
        )


@dataclass
class ProblemLayout:
    """Variable block offsets inside a controller problem."""

    n_chargers: int
    horizon: int
    p_charge: int = 0
    p_discharge: int = -1
    z: int = -1
    f_charge: int = -1
    f_discharge: int = -1
    slack: int = -1
    n_vars: int = 0

    def idx(self, block: int, i: int, h: int) -> int:
        return block + h * self.n_chargers + i


def _make_layout(
    n: int, horizon: int, bidirectional: bool, with_flex: bool, n_slack: int
) -> ProblemLayout:
    layout = ProblemLayout(n_chargers=n, horizon=horizon)
    cursor = n * horizon  # p_charge block
    if bidirectional:
        layout.p_discharge = cursor
        cursor += n * horizon
        layout.z = cursor
        cursor += n * horizon
    if with_flex:
        layout.f_charge = cursor
        cursor += n * horizon
        if bidirectional:
            layout.f_discharge = cursor
            cursor += n * horizon
    if n_slack:
        layout.slack = cursor
        cursor += n_slack
    layout.n_vars = cursor
    return layout


def _flex_locked(view: HorizonView, i: int, h: int) -> bool:
    """No flexibility once an EV is inside its must-charge window."""
    session = view.sessions[i]
    if session is None:
        return True
    remaining = session.departure_step - (view.k + h)
    if remaining <= 1:
        return True  # the step feeding the departure state carries no band
    needed_kwh = max(0.0, session.soc_required_min - view.x0[i]) * session.capacity_kwh
    reachable_kwh = (
        remaining * view.delta_t_h * session.eta_charge * view.rated_charge[i]
    )
    return needed_kwh > reachable_kwh + 1e-9


def _build_problem(
    view: HorizonView,
    lifted: LiftedModel,
    bidirectional: bool,
    with_flex: bool,
    floors: np.ndarray,
    departures: list[DepartureConstraint],
    slack_penalty: float = 0.0,
    with_slack: bool = False,
) -> tuple[MilpProblem, ProblemLayout]:
    n = view.n_chargers
    horizon = view.horizon
    xi = view.availability
    dt = view.delta_t_h
    soft_rows = [d for d in departures if with_slack]
    layout = _make_layout(n, horizon, bidirectional, with_flex, len(soft_rows))
    problem = MilpProblem.empty(layout.n_vars)

    # variable bounds and objective
    for h in range(horizon):
        for i in range(n):
            if xi[i, h]:
                problem.upper[layout.idx(layout.p_charge, i, h)] = view.rated_charge[i]
            else:
                problem.upper[layout.idx(layout.p_charge, i, h)] = 0.0
            problem.objective[layout.idx(layout.p_charge, i, h)] = (
                dt * view.price_charge[h]
            )
            if bidirectional:
                j = layout.idx(layout.p_discharge, i, h)
                problem.upper[j] = view.rated_discharge[i] if xi[i, h] else 0.0
                problem.objective[j] = -dt * view.price_discharge[h]
                jz = layout.idx(layout.z, i, h)
                problem.upper[jz] = 1.0 if xi[i, h] else 0.0
                problem.binary_mask[jz] = True
            if with_flex:
                jc = layout.idx(layout.f_charge, i, h)
                locked = not xi[i, h] or _flex_locked(view, i, h)
                problem.upper[jc] = 0.0 if locked else view.rated_charge[i]
                problem.objective[jc] = -dt * view.price_flex_charge[h]
                if bidirectional:
                    jd = layout.idx(layout.f_discharge, i, h)
                    problem.upper[jd] = 0.0 if locked else view.rated_discharge[i]
                    problem.objective[jd] = -dt * view.price_flex_discharge[h]
    if with_slack:
        for s in range(len(soft_rows)):
            problem.upper[layout.slack + s] = 1.0
            problem.objective[layout.slack + s] = slack_penalty

    def soc_row_cols(i: int, block: int) -> tuple[list[int], list[float]]:
        """Variable columns of the lifted SoC at state block `block` (1..H)."""
        row = lifted.g_stack[(block - 1) * n + i]
        cols, coefs = [], []
        for m in range(block):
            c = row[2 * m * n + 2 * i]
            d = row[2 * m * n + 2 * i + 1]
            if c != 0.0:
                cols.append(layout.idx(layout.p_charge, i, m))
                coefs.append(c)
            if d != 0.0 and bidirectional:
                cols.append(layout.idx(layout.p_discharge, i, m))
                coefs.append(d)
        return cols, coefs

    # SoC box constraints for connected chargers
    for i in range(n):
        if view.sessions[i] is None:
            continue
        for block in range(1, horizon + 1):
            if not xi[i, block - 1]:
                break  # departed: state is zeroed from here on
            offset = lifted.a_stack[(block - 1) * n + i, i] * lifted.x0[i]
            cols, coefs = soc_row_cols(i, block)
            problem.add_row(cols, coefs, "<=", 1.0 - offset)
            problem.add_row(cols, coefs, ">=", floors[i] - offset)

    # departure windows and terminal reachability
    slack_cursor = 0
    for dep in departures:
        i, block = dep.charger, dep.step_offset
        offset = lifted.a_stack[(block - 1) * n + i, i] * lifted.x0[i]
        cols, coefs = soc_row_cols(i, block)
        if with_slack:
            problem.add_row(
                cols + [layout.slack + slack_cursor],
                coefs + [1.0],
                ">=",
                dep.min_soc - offset,
            )
            slack_cursor += 1
        else:
            problem.add_row(cols, coefs, ">=", dep.min_soc - offset)
        problem.add_row(cols, coefs, "<=", dep.max_soc - offset)

    # transformer headroom, clamped so noisy forecasts cannot make the
    # problem structurally infeasible (zero dispatch must stay feasible)
    for g in range(view.headroom.shape[0]):
        members = [i for i in range(n) if view.charger_transformer[i] == g]
        for h in range(horizon):
            active = [i for i in members if xi[i, h]]
            if not active:
                continue
            floor_rhs = 0.0
            if bidirectional:
                floor_rhs = -sum(view.rated_discharge[i] for i in active)
            rhs = max(view.headroom[g, h], floor_rhs)
            cols = [layout.idx(layout.p_charge, i, h) for i in active]
            coefs = [1.0] * len(active)
            if bidirectional:
                cols += [layout.idx(layout.p_discharge, i, h) for i in active]
                coefs += [-1.0] * len(active)
            problem.add_row(cols, coefs, "<=", rhs)

    # charge/discharge exclusivity and flexibility band coupling
    for h in range(horizon):
        for i in range(n):
            if not xi[i, h]:
                continue
            pc = layout.idx(layout.p_charge, i, h)
            if bidirectional:
                pd = layout.idx(layout.p_discharge, i, h)
                z = layout.idx(layout.z, i, h)
                problem.add_row([pc, z], [1.0, -view.rated_charge[i]], "<=", 0.0)
                problem.add_row(
                    [pd, z], [1.0, view.rated_discharge[i]], "<=", view.rated_discharge[i]
                )
                # tightening cut: one direction is always zero, so the
                # normalized direction magnitudes (with their flex bands)
                # sum to at most one; same integer optimum, tighter
                # relaxation
                ratio = (
                    view.rated_charge[i] / view.rated_discharge[i]
                    if view.rated_discharge[i] > 0
                    else 0.0
                )
                cut_cols = [pc, pd]
                cut_coefs = [1.0, ratio]
                if with_flex:
                    cut_cols += [
                        layout.idx(layout.f_charge, i, h),
                        layout.idx(layout.f_discharge, i, h),
                    ]
                    cut_coefs += [1.0, ratio]
                problem.add_row(cut_cols, cut_coefs, "<=", view.rated_charge[i])
            if with_flex:
                fc = layout.idx(layout.f_charge, i, h)
                problem.add_row([fc, pc], [1.0, -1.0], "<=", 0.0)
                problem.add_row([pc, fc], [1.0, 1.0], "<=", view.rated_charge[i])
                if bidirectional:
                    fd = layout.idx(layout.f_discharge, i, h)
                    pd = layout.idx(layout.p_discharge, i, h)
                    problem.add_row([fd, pd], [1.0, -1.0], "<=", 0.0)
                    problem.add_row([pd, fd], [1.0, 1.0], "<=", view.rated_discharge[i])
    return problem, layout


def build_empc(
    view: HorizonView,
    lifted: LiftedModel,
    mode: str,
    floors: np.ndarray | None = None,
    departures: list[DepartureConstraint] | None = None,
    slack_penalty: float = 0.0,
    with_slack: bool = False,
) -> tuple[MilpProblem, ProblemLayout]:
    """Economic MPC problem; `mode` is 'g2v' (LP) or 'v2g' (MILP)."""
    floors = soc_lower_bounds(view) if floors is None else floors
    departures = departure_constraints(view) if departures is None else departures
    return _build_problem(
        view, lifted, mode == "v2g", False, floors, departures,
        slack_penalty, with_slack,
    )


def build_ocmf(
    view: HorizonView,
    lifted: LiftedModel,
    mode: str,
    floors: np.ndarray | None = None,
    departures: list[DepartureConstraint] | None = None,
    slack_penalty: float = 0.0,
    with_slack: bool = False,
) -> tuple[MilpProblem, ProblemLayout]:
    """Flexibility-maximizing MPC problem; adds the band variables."""
    floors = soc_lower_bounds(view) if floors is None else floors
    departures = departure_constraints(view) if departures is None else departures
    return _build_problem(
        view, lifted, mode == "v2g", True, floors, departures,
        slack_penalty, with_slack,
    )


# ---------------------------------------------------------------------------
# Pilot-grid command rounding
# ---------------------------------------------------------------------------


def _charge_unit_soc(session: EvSession, level_kw: float, dt: float) -> float:
    return level_kw * dt * session.eta_charge / session.capacity_kwh


def _grid_enabled(session: EvSession) -> bool:
    # the SoC lattice is only exact with unit efficiencies
    return session.eta_charge == 1.0 and session.eta_discharge == 1.0


def snapped_target(session: EvSession, level_kw: float, dt: float, soc: float) -> float:
    """Departure minimum raised onto the pilot lattice reachable from `soc`."""
    if not _grid_enabled(session):
        return session.soc_required_min
    unit = _charge_unit_soc(session, level_kw, dt)
    deficit = session.soc_required_min - soc
    if deficit <= 1e-12:
        return session.soc_required_min
    units = math.ceil(deficit / unit - 1e-9)
    return min(soc + units * unit, 1.0)


_ALL_LEVELS = (0, *range(MIN_CURRENT_A, MAX_CURRENT_A + 1))


def charge_level_candidates(deficit_units: int | None, steps_after: int) -> list[int]:
    """Pilot levels that keep the departure target reachable while charging.

    `deficit_units` is the integer lattice distance to the departure target
    (None when no target binds), `steps_after` the steps left after this
    one.  Two rules: never leave more residual than the remaining steps can
    deliver, and never leave a residual in 1..5 units, which no single
    later step could close exactly.
    """
    if deficit_units is None:
        return list(_ALL_LEVELS)
    min_level = deficit_units - MAX_CURRENT_A * steps_after
    out = [
        c
        for c in _ALL_LEVELS
        if c >= min_level and (deficit_units - c) not in _FORBIDDEN_RESIDUALS
    ]
    return out or [MAX_CURRENT_A]


def discharge_level_candidates(
    deficit_units: int | None, steps_after: int
) -> list[int]:
    """Pilot levels that keep the departure target reachable while discharging."""
    if deficit_units is None:
        return list(_ALL_LEVELS)
    max_level = MAX_CURRENT_A * steps_after - deficit_units
    out = [
        c
        for c in _ALL_LEVELS
        if c <= max_level and (deficit_units + c) not in _FORBIDDEN_RESIDUALS
    ]
    return out or [0]


def choose_level(units_desired: float, candidates: list[int]) -> int:
    """Nearest candidate level; ties resolve toward the lower level."""
    return min(candidates, key=lambda c: (abs(c - units_desired), c))


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------


@dataclass
class LogRow:
    step: int
    status: str
    objective: float | None
    node_count: int
    solve_ms: float
    slack_used: float
    total_flex_kw: float


class Controller:
    """Maps (measured state, environment forecasts) to an action vector."""

    def __init__(self, config: ControllerConfig, scenario: Scenario):
        self.config = config
        self.scenario = scenario
        self.log: list[LogRow] = []
        self._penalty = config.slack_penalty or self._default_penalty()
        self._warm: np.ndarray | None = None

    def _default_penalty(self) -> float:
        prices = self.scenario.prices
        max_price = max(
            float(np.max(prices.charge, initial=0.0)),
            float(np.max(prices.discharge, initial=0.0)),
        )
        max_cap = max(
            (s.capacity_kwh for s in self.scenario.sessions), default=50.0
        )
        dt = self.scenario.config.delta_t_h
        return 10.0 * max(1.0, max_price * max_cap / dt)

    # -- AFAP ---------------------------------------------------------------

    def _afap_plan(self, state: PoolState) -> ActionPlan:
        n = len(self.scenario.chargers)
        horizon = self.config.horizon
        actions = afap_actions(
            state, self.scenario, quantize=self.config.quantize_commands
        )
        plan = ActionPlan(
            actions=actions,
            planned_charge_kw=np.zeros((n, horizon)),
            planned_discharge_kw=np.zeros((n, horizon)),
            planned_flex_charge_kw=np.zeros((n, horizon)),
            planned_flex_discharge_kw=np.zeros((n, horizon)),
            status="afap",
        )
        for i, a in enumerate(actions):
            plan.planned_charge_kw[i, 0] = a * self.scenario.chargers[i].max_charge_kw
        return plan

    def _fallback_plan(self, state: PoolState, view: HorizonView) -> ActionPlan:
        """Full-power charging demoted to the measured transformer headroom.

        Used when a solve produced no usable point at all; unlike the plain
        full-power baseline, this plan never overloads: levels back off to
        lower admissible candidates first, and if forced, below them.
        """
        plan = self._afap_plan(state)
        n = view.n_chargers
        dt = view.delta_t_h
        units = np.zeros(n, dtype=int)
        deficits: list[int | None] = [None] * n
        steps_after = [0] * n
        for i, slot in enumerate(state.slots):
            session = slot.session
            if session is None or plan.actions[i] <= 0.0:
                continue
            spec = self.scenario.chargers[i]
            units[i] = int(
                math.floor(
                    plan.actions[i] * spec.max_charge_kw / spec.level_kw("charge")
                    + 1e-9
                )
            )
            steps_after[i] = session.departure_step - state.step - 1
            if _grid_enabled(session):
                unit = _charge_unit_soc(session, spec.level_kw("charge"), dt)
                deficits[i] = max(
                    0,
                    math.ceil(
                        (session.soc_required_min - slot.soc) / unit - 1e-9
                    ),
                )
        self._respect_transformer_limits(
            view, units, np.zeros(n), deficits, steps_after
        )
        # last resort: drop departure-critical levels too rather than overload
        for g in range(view.headroom.shape[0]):
            members = [i for i in range(n) if view.charger_transformer[i] == g]
            headroom = view.headroom[g, 0]
            while members:
                net = sum(self._unit_kw(view, i, units[i]) for i in members)
                if net <= headroom + 1e-9:
                    break
                loaded = [i for i in members if units[i] > 0]
                if not loaded:
                    break
                worst = max(loaded, key=lambda i: (units[i], -i))
                units[worst] = (
                    units[worst] - 1 if units[worst] > MIN_CURRENT_A else 0
                )
        for i in range(n):
            spec = self.scenario.chargers[i]
            plan.actions[i] = units[i] * spec.level_kw("charge") / spec.max_charge_kw
            plan.planned_charge_kw[i, 0] = units[i] * spec.level_kw("charge")
        return plan

    # -- MPC ----------------------------------------------------------------

    def act(self, state: PoolState, env: SimEnv) -> ActionPlan:
        t0 = time.perf_counter()
        if self.config.kind == "afap":
            plan = self._afap_plan(state)
            plan.solve_ms = (time.perf_counter() - t0) * 1e3
            self._log(state.step, plan)
            return plan
        n = len(self.scenario.chargers)
        horizon = self.config.horizon
        if not any(slot.connected for slot in state.slots):
            plan = ActionPlan(
                actions=np.zeros(n),
                planned_charge_kw=np.zeros((n, horizon)),
                planned_discharge_kw=np.zeros((n, horizon)),
                planned_flex_charge_kw=np.zeros((n, horizon)),
                planned_flex_discharge_kw=np.zeros((n, horizon)),
                status="idle",
            )
            self._log(state.step, plan)
            return plan

        k = state.step
        forecasts = env.transformer_forecasts(k, horizon)
        view = build_horizon_view(state, self.scenario, k, horizon, forecasts)
        lifted = lift(view)
        floors = soc_lower_bounds(view)
        departures = departure_constraints(view)
        if self.config.quantize_commands:
            departures = self._snap_departures(view, departures)

        mode = "v2g" if self.config.bidirectional else "g2v"
        builder = build_ocmf if self.config.with_flex else build_empc
        problem, layout = builder(
            view, lifted, mode, floors=floors, departures=departures
        )
        solution = self._solve(problem)
        slack_used = 0.0
        if solution.status == "infeasible":
            problem, layout = builder(
                view, lifted, mode, floors=floors, departures=departures,
                slack_penalty=self._penalty, with_slack=True,
            )
            solution = self._solve(problem)
            if solution.values is not None and layout.slack >= 0:
                slack_used = float(solution.values[layout.slack:].sum())

        elapsed_ms = (time.perf_counter() - t0) * 1e3
        if solution.values is None:
            plan = self._fallback_plan(state, view)
            plan.status = solution.status
            plan.fallback = True
            plan.solve_ms = elapsed_ms
            self._log(k, plan)
            return plan

        self._warm = solution.values
        plan = self._plan_from_solution(view, layout, solution, state)
        plan.slack_used = slack_used
        plan.solve_ms = elapsed_ms
        self._log(k, plan)
        return plan

    def _solve(self, problem: MilpProblem) -> MilpSolution:
        if problem.binary_mask.any():
            return optimizer.solve_milp(
                problem,
                node_limit=self.config.node_limit,
                time_limit=self.config.time_limit,
                mip_rel_gap=self.config.mip_rel_gap,
            )
        return optimizer.solve_lp(problem)

    def _snap_departures(
        self, view: HorizonView, departures: list[DepartureConstraint]
    ) -> list[DepartureConstraint]:
        out = []
        dt = view.delta_t_h
        for dep in departures:
            session = view.sessions[dep.charger]
            if dep.terminal or session is None:
                out.append(dep)
                continue
            spec = self.scenario.chargers[dep.charger]
            lo = snapped_target(
                session, spec.level_kw("charge"), dt, view.x0[dep.charger]
            )
            lo = max(lo, dep.min_soc)
            out.append(
                DepartureConstraint(
                    charger=dep.charger,
                    step_offset=dep.step_offset,
                    min_soc=min(lo, dep.max_soc),
                    max_soc=dep.max_soc,
                )
            )
        return out

    def _plan_from_solution(
        self,
        view: HorizonView,
        layout: ProblemLayout,
        solution: MilpSolution,
        state: PoolState,
    ) -> ActionPlan:
        n, horizon = layout.n_chargers, layout.horizon
        values = solution.values
        pc = values[: n * horizon].reshape(horizon, n).T.copy()
        pd = np.zeros((n, horizon))
        fc = np.zeros((n, horizon))
        fd = np.zeros((n, horizon))
        if layout.p_discharge >= 0:
            pd = values[layout.p_discharge:layout.p_discharge + n * horizon]
            pd = pd.reshape(horizon, n).T.copy()
        if layout.f_charge >= 0:
            fc = values[layout.f_charge:layout.f_charge + n * horizon]
            fc = fc.reshape(horizon, n).T.copy()
        if layout.f_discharge >= 0:
            fd = values[layout.f_discharge:layout.f_discharge + n * horizon]
            fd = fd.reshape(horizon, n).T.copy()

        actions = np.zeros(n)
        if self.config.quantize_commands:
            actions = self._quantized_actions(view, state, pc[:, 0], pd[:, 0])
        else:
            for i in range(n):
                if pc[i, 0] >= pd[i, 0]:
                    actions[i] = pc[i, 0] / view.rated_charge[i]
                elif view.rated_discharge[i] > 0:
                    actions[i] = -pd[i, 0] / view.rated_discharge[i]
        return ActionPlan(
            actions=actions,
            planned_charge_kw=pc,
            planned_discharge_kw=pd,
            planned_flex_charge_kw=fc,
            planned_flex_discharge_kw=fd,
            status=solution.status,
            objective=solution.objective,
            node_count=solution.node_count,
        )

    def _quantized_actions(
        self,
        view: HorizonView,
        state: PoolState,
        pc0: np.ndarray,
        pd0: np.ndarray,
    ) -> np.ndarray:
        n = view.n_chargers
        dt = view.delta_t_h
        actions = np.zeros(n)
        units = np.zeros(n, dtype=int)  # signed pilot units (+charge)
        deficits: list[int | None] = [None] * n
        steps_after = [0] * n
        for i in range(n):
            session = view.sessions[i]
            if session is None:
                continue
            spec = self.scenario.chargers[i]
            steps_after[i] = session.departure_step - view.k - 1
            if _grid_enabled(session):
                unit = _charge_unit_soc(session, spec.level_kw("charge"), dt)
                deficits[i] = math.ceil(
                    (session.soc_required_min - view.x0[i]) / unit - 1e-9
                )
            if pc0[i] >= pd0[i]:
                desired = pc0[i] / spec.level_kw("charge")
                units[i] = choose_level(
                    desired, charge_level_candidates(deficits[i], steps_after[i])
                )
            elif spec.max_discharge_kw > 0:
                # cap at what the plant can actually draw above the SoC
                # floor, so the net the demotion loop checks is the net
                # the transformer will see
                avail_kw = (
                    (view.x0[i] - discharge_floor(session, view.x0[i]))
                    * session.capacity_kwh
                    * session.eta_discharge
                    / dt
                )
                avail_units = math.floor(
                    avail_kw / spec.level_kw("discharge") + 1e-9
                )
                candidates = [
                    c
                    for c in discharge_level_candidates(
                        deficits[i], steps_after[i]
                    )
                    if c <= avail_units
                ] or [0]
                desired = pd0[i] / spec.level_kw("discharge")
                units[i] = -choose_level(desired, candidates)
        self._respect_transformer_limits(view, units, pc0, deficits, steps_after)
        for i in range(n):
            spec = self.scenario.chargers[i]
            if units[i] > 0:
                actions[i] = units[i] * spec.level_kw("charge") / spec.max_charge_kw
            elif units[i] < 0:
                actions[i] = (
                    units[i] * spec.level_kw("discharge") / spec.max_discharge_kw
                )
        return actions

    def _respect_transformer_limits(
        self,
        view: HorizonView,
        units: np.ndarray,
        pc0: np.ndarray,
        deficits: list[int | None],
        steps_after: list[int],
    ) -> None:
        """Undo roundings that would breach the measured current headroom.

        Charging levels rounded above the plan go first; if rounding noise
        on other chargers still leaves the transformer over its measured
        headroom, any charging charger with a lower admissible level is
        demoted, largest level first.
        """
        n = view.n_chargers

        def lower_candidate(i: int) -> int | None:
            below = [
                c
                for c in charge_level_candidates(deficits[i], steps_after[i])
                if c < units[i]
            ]
            return max(below) if below else None

        for g in range(view.headroom.shape[0]):
            members = [i for i in range(n) if view.charger_transformer[i] == g]
            if not members:
                continue
            headroom = view.headroom[g, 0]
            for _ in range(MAX_CURRENT_A * len(members)):
                net = sum(self._unit_kw(view, i, units[i]) for i in members)
                if net <= headroom + 1e-9:
                    break
                over = [
                    i
                    for i in members
                    if units[i] > 0
                    and self._unit_kw(view, i, units[i]) > pc0[i] + 1e-9
                    and lower_candidate(i) is not None
                ]
                if over:
                    worst = max(
                        over,
                        key=lambda i: (self._unit_kw(view, i, units[i]) - pc0[i], -i),
                    )
                else:
                    fallback = [
                        i for i in members if units[i] > 0
                        and lower_candidate(i) is not None
                    ]
                    if not fallback:
                        break
                    worst = max(fallback, key=lambda i: (units[i], -i))
                units[worst] = lower_candidate(worst)

    def _unit_kw(self, view: HorizonView, i: int, u: int) -> float:
        spec = self.scenario.chargers[i]
        if u >= 0:
            return u * spec.level_kw("charge")
        return u * spec.level_kw("discharge")

    def _log(self, step: int, plan: ActionPlan) -> None:
        self.log.append(
            LogRow(
                step=step,
                status=plan.status,
                objective=plan.objective,
                node_count=plan.node_count,
                solve_ms=plan.solve_ms,
                slack_used=plan.slack_used,
                total_flex_kw=plan.total_flex_kw,
            )
        )


def afap_actions(
    state: PoolState, scenario: Scenario, quantize: bool = True
) -> np.ndarray:
    """Full-power charging toward the required SoC; never discharges.

    The final step is trimmed so the EV lands on its target instead of
    overshooting; with quantization the command is an exact pilot level on
    the lattice-snapped target.
    """
    n = len(scenario.chargers)
    dt = scenario.config.delta_t_h
    actions = np.zeros(n)
    for i, slot in enumerate(state.slots):
        if not slot.connected:
            continue
        session = slot.session
        spec = scenario.chargers[i]
        if quantize and _grid_enabled(session):
            level = spec.level_kw("charge")
            unit = _charge_unit_soc(session, level, dt)
            deficit = math.ceil((session.soc_required_min - slot.soc) / unit - 1e-9)
            if deficit <= 0:
                continue
            steps_after = session.departure_step - state.step - 1
            chosen = choose_level(
                min(deficit, MAX_CURRENT_A),
                charge_level_candidates(deficit, steps_after),
            )
            actions[i] = chosen * level / spec.max_charge_kw
        else:
            deficit = session.soc_required_min - slot.soc
            if deficit <= 1e-12:
                continue
            needed_kw = deficit * session.capacity_kwh / (dt * session.eta_charge)
            actions[i] = min(1.0, needed_kw / spec.max_charge_kw)
    return actions
