"""Domain types, defaults, and synthetic scenario generation.

A :class:`Scenario` bundles everything a run needs: the simulation
configuration, charger and transformer hardware, EV plug-in sessions, and
the price schedule.  Generation is fully deterministic given a seed, and
every synthetic series can be overridden by a CSV file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

__all__ = [
    "SimConfig",
    "GenerationParams",
    "ChargerSpec",
    "EvSession",
    "TransformerSpec",
    "DrEvent",
    "PriceSchedule",
    "Scenario",
    "ScenarioError",
    "load_config",
    "build_scenario",
    "generate_sessions",
    "generate_transformer_series",
    "generate_dr_events",
    "generate_prices",
    "read_series_csv",
    "read_prices_csv",
]

MIN_CURRENT_A = 6
MAX_CURRENT_A = 32


class ScenarioError(ValueError):
    """Raised for configuration parse failures and invariant violations."""


@dataclass(frozen=True)
class SimConfig:
    """General simulation parameters."""

    delta_t_min: float = 15.0
    horizon_steps: int = 10
    sim_steps: int = 96
    n_chargers: int = 10
    n_transformers: int = 1
    discharge_multiplier: float = 1.2
    seed: int = 0
    ev_scenario_name: str = "residential"

    @property
    def delta_t_h(self) -> float:
        return self.delta_t_min / 60.0

    @property
    def steps_per_hour(self) -> float:
        return 60.0 / self.delta_t_min

    def validate(self) -> None:
        if self.delta_t_min <= 0:
            raise ScenarioError("delta_t_min must be > 0")
        if self.horizon_steps < 1:
            raise ScenarioError("horizon_steps must be >= 1")
        if self.sim_steps < 1:
            raise ScenarioError("sim_steps must be >= 1")
        if not (self.n_chargers >= self.n_transformers >= 1):
            raise ScenarioError(
                "n_chargers must be >= n_transformers and n_transformers >= 1"
            )
        if not (0.0 < self.discharge_multiplier <= 2.0):
            raise ScenarioError("discharge_multiplier must be in (0, 2]")


@dataclass(frozen=True)
class GenerationParams:
    """Knobs for the synthetic generators (defaults mirror the model tables)."""

    transformer_limit_kw: float = 400.0
    charger_max_charge_kw: float = 22.0
    charger_max_discharge_kw: float = 22.0
    charger_voltage_v: float = 230.0
    charger_phases: int = 3

    battery_capacity_kwh: float = 50.0
    soc_required_min: float = 0.8
    soc_required_max: float = 1.0
    soc_floor: float = 0.1
    eta_charge: float = 1.0
    eta_discharge: float = 1.0
    min_connection_h: float = 3.0

    target_ev_count: int = 25
    arrival_soc_mean: float = 0.4
    arrival_soc_sd: float = 0.2
    arrival_soc_lo: float = 0.05
    arrival_soc_hi: float = 0.7
    first_arrival_mean_h: float = 8.0
    first_arrival_sd_h: float = 3.0
    stay_mean_h: float = 6.0
    stay_sd_h: float = 2.0
    gap_mean_h: float = 2.0
    gap_sd_h: float = 1.0

    load_multiplier: float = 1.0
    pv_multiplier: float = 3.0
    load_csv: str | None = None
    pv_csv: str | None = None
    price_csv: str | None = None

    dr_events_per_transformer: int = 1
    dr_duration_h: float = 1.0
    dr_capacity_reduction: float = 0.20
    dr_notice_steps: int = 1
    dr_start_mean_h: float = 18.0
    dr_start_sd_h: float = 1.0

    flex_price_factor: float = 0.5


@dataclass(frozen=True)
class ChargerSpec:
    """One EVSE: rated powers and the admissible pilot-current set."""

    id: int
    transformer_id: int
    max_charge_kw: float = 22.0
    max_discharge_kw: float = 22.0
    voltage_v: float = 230.0
    phases: int = 3

    def __post_init__(self) -> None:
        if self.max_charge_kw <= 0:
            raise ScenarioError(f"charger {self.id}: max_charge_kw must be > 0")
        if self.max_discharge_kw < 0:
            raise ScenarioError(f"charger {self.id}: max_discharge_kw must be >= 0")

    @property
    def current_levels(self) -> tuple[int, ...]:
        return (0, *range(MIN_CURRENT_A, MAX_CURRENT_A + 1))

    def level_kw(self, direction: str) -> float:
        """Power of one pilot-current increment (32 A maps to rated power)."""
        rated = self.max_charge_kw if direction == "charge" else self.max_discharge_kw
        return rated / MAX_CURRENT_A


@dataclass(frozen=True)
class EvSession:
    """One EV plug-in episode on a specific charger."""

    id: int
    charger_id: int
    arrival_step: int
    departure_step: int
    soc_arrival: float
    soc_required_min: float = 0.8
    soc_required_max: float = 1.0
    capacity_kwh: float = 50.0
    soc_floor: float = 0.1
    eta_charge: float = 1.0
    eta_discharge: float = 1.0

    def validate(self, delta_t_h: float, max_charge_kw: float) -> None:
        if not (0.0 <= self.soc_arrival <= 1.0):
            raise ScenarioError(f"session {self.id}: soc_arrival out of [0, 1]")
        if self.arrival_step >= self.departure_step:
            raise ScenarioError(f"session {self.id}: arrival_step >= departure_step")
        if not (
            self.soc_floor <= self.soc_required_min <= self.soc_required_max <= 1.0
        ):
            raise ScenarioError(f"session {self.id}: SoC bound ordering violated")
        if not (0.0 < self.eta_charge <= 1.0 and 0.0 < self.eta_discharge <= 1.0):
            raise ScenarioError(f"session {self.id}: efficiencies must be in (0, 1]")
        gain = (
            (self.departure_step - self.arrival_step)
            * delta_t_h
            * self.eta_charge
            * max_charge_kw
            / self.capacity_kwh
        )
        if self.soc_arrival + gain < self.soc_required_min - 1e-12:
            raise ScenarioError(f"session {self.id}: departure SoC unreachable")


@dataclass(frozen=True)
class DrEvent:
    """Temporary transformer capacity reduction with short notice."""

    start_step: int
    duration_steps: int
    capacity_reduction: float
    notice_steps: int = 1

    def __post_init__(self) -> None:
        if not (0.0 <= self.capacity_reduction < 1.0):
            raise ScenarioError("capacity_reduction must be in [0, 1)")
        if self.duration_steps < 1:
            raise ScenarioError("duration_steps must be >= 1")
        if self.notice_steps < 1:
            raise ScenarioError("notice_steps must be >= 1")

    def reduction_kw(self, limit_kw: float, k: int) -> float:
        if self.start_step <= k < self.start_step + self.duration_steps:
            return self.capacity_reduction * limit_kw
        return 0.0

    def announced_at(self, k: int) -> bool:
        return k >= self.start_step - self.notice_steps


@dataclass
class TransformerSpec:
    """One transformer: limit, attached chargers, load/PV series, DR events."""

    id: int
    power_limit_kw: float
    charger_ids: tuple[int, ...]
    inflexible_load_kw: np.ndarray
    pv_generation_kw: np.ndarray
    dr_events: list[DrEvent] = field(default_factory=list)

    def validate(self, sim_steps: int) -> None:
        if self.power_limit_kw <= 0:
            raise ScenarioError(f"transformer {self.id}: power_limit_kw must be > 0")
        for name, series in (
            ("inflexible_load_kw", self.inflexible_load_kw),
            ("pv_generation_kw", self.pv_generation_kw),
        ):
            if len(series) != sim_steps:
                raise ScenarioError(
                    f"transformer {self.id}: {name} length {len(series)} != K={sim_steps}"
                )
            if np.any(series < 0):
                raise ScenarioError(f"transformer {self.id}: {name} has negatives")

    def dr_reduction_kw(self, k: int) -> float:
        return sum(ev.reduction_kw(self.power_limit_kw, k) for ev in self.dr_events)

    def announced_dr_kw(self, now: int, k: int) -> float:
        """DR reduction at step k as known at step `now` (notice window)."""
        return sum(
            ev.reduction_kw(self.power_limit_kw, k)
            for ev in self.dr_events
            if ev.announced_at(now)
        )


@dataclass(frozen=True)
class PriceSchedule:
    """Per-step prices in EUR/kWh for energy and flexibility."""

    charge: np.ndarray
    discharge: np.ndarray
    flex_charge: np.ndarray
    flex_discharge: np.ndarray

    @classmethod
    def from_multiplier(
        cls, charge: np.ndarray, m: float, flex_factor: float = 0.5
    ) -> "PriceSchedule":
        charge = np.asarray(charge, dtype=float)
        return cls(
            charge=charge,
            discharge=m * charge,
            flex_charge=flex_factor * charge,
            flex_discharge=flex_factor * charge,
        )

    def validate(self, sim_steps: int) -> None:
        for name in ("charge", "discharge", "flex_charge", "flex_discharge"):
            if len(getattr(self, name)) != sim_steps:
                raise ScenarioError(f"price series {name} length != K={sim_steps}")


@dataclass
class Scenario:
    """Immutable-after-build description of one simulated day."""

    config: SimConfig
    params: GenerationParams
    chargers: list[ChargerSpec]
    sessions: list[EvSession]
    transformers: list[TransformerSpec]
    prices: PriceSchedule

    def validate(self) -> None:
        self.config.validate()
        k = self.config.sim_steps
        dt = self.config.delta_t_h
        for tr in self.transformers:
            tr.validate(k)
        by_charger: dict[int, list[EvSession]] = {}
        for s in self.sessions:
            s.validate(dt, self.chargers[s.charger_id].max_charge_kw)
            by_charger.setdefault(s.charger_id, []).append(s)
        for cid, sess in by_charger.items():
            sess.sort(key=lambda s: s.arrival_step)
            for a, b in zip(sess, sess[1:]):
                if b.arrival_step < a.departure_step:
                    raise ScenarioError(f"charger {cid}: overlapping sessions")
        self.prices.validate(k)

    def charger_transformer(self, charger_id: int) -> TransformerSpec:
        return self.transformers[self.chargers[charger_id].transformer_id]


# ---------------------------------------------------------------------------
# Configuration loading
# ---------------------------------------------------------------------------

_SIM_KEYS = {f for f in SimConfig.__dataclass_fields__}
_GEN_KEYS = {f for f in GenerationParams.__dataclass_fields__}


def load_config(path: str | Path) -> tuple[SimConfig, GenerationParams]:
    """Parse a YAML config file, filling table defaults for absent keys."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"config parse failure in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ScenarioError(f"config {path}: top level must be a mapping")

    flat: dict[str, object] = {}
    for key, value in raw.items():
        if isinstance(value, dict):  # allow one nesting level of sections
            flat.update(value)
        else:
            flat[key] = value

    sim_kwargs, gen_kwargs = {}, {}
    for key, value in flat.items():
        if key in _SIM_KEYS:
            sim_kwargs[key] = value
        elif key in _GEN_KEYS:
            gen_kwargs[key] = value
        else:
            raise ScenarioError(f"config {path}: unknown key '{key}'")

    try:
        config = SimConfig(**sim_kwargs)
        params = GenerationParams(**gen_kwargs)
    except TypeError as exc:
        raise ScenarioError(f"config {path}: bad value types: {exc}") from exc
    config.validate()
    return config, params


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


def _truncated_gaussian(
    rng: np.random.Generator,
    mean: float,
    sd: float,
    lo: float,
    hi: float,
    max_tries: int = 1000,
) -> float:
    if sd <= 0:
        return min(max(mean, lo), hi)
    for _ in range(max_tries):
        x = rng.normal(mean, sd)
        if lo <= x <= hi:
            return float(x)
    raise ScenarioError(
        f"truncated Gaussian sampler exhausted retries (mean={mean}, sd={sd})"
    )


def generate_sessions(
    rng: np.random.Generator, config: SimConfig, params: GenerationParams
) -> list[EvSession]:
    """Draw non-overlapping per-charger sessions from truncated Gaussians.

    Each charger hosts a sequence arrival -> stay -> gap -> next arrival,
    which yields roughly ``target_ev_count`` sessions for the default day.
    """
    spb = config.steps_per_hour
    min_stay = max(1, int(round(params.min_connection_h * spb)))
    sessions: list[EvSession] = []
    sid = 0
    for cid in range(config.n_chargers):
        arrival_h = _truncated_gaussian(
            rng, params.first_arrival_mean_h, params.first_arrival_sd_h, 0.0, 24.0
        )
        step = int(round(arrival_h * spb))
        while step + min_stay <= config.sim_steps:
            stay_h = _truncated_gaussian(
                rng, params.stay_mean_h, params.stay_sd_h, params.min_connection_h, 24.0
            )
            departure = min(step + int(round(stay_h * spb)), config.sim_steps)
            if departure - step < min_stay:
                break
            soc = _truncated_gaussian(
                rng,
                params.arrival_soc_mean,
                params.arrival_soc_sd,
                params.arrival_soc_lo,
                params.arrival_soc_hi,
            )
            session = EvSession(
                id=sid,
                charger_id=cid,
                arrival_step=step,
                departure_step=departure,
                soc_arrival=soc,
                soc_required_min=params.soc_required_min,
                soc_required_max=params.soc_required_max,
                capacity_kwh=params.battery_capacity_kwh,
                soc_floor=params.soc_floor,
                eta_charge=params.eta_charge,
                eta_discharge=params.eta_discharge,
            )
            session.validate(config.delta_t_h, params.charger_max_charge_kw)
            sessions.append(session)
            sid += 1
            gap_h = _truncated_gaussian(
                rng, params.gap_mean_h, params.gap_sd_h, 1.0 / spb, 24.0
            )
            step = departure + max(1, int(round(gap_h * spb)))
    return sessions


def _day_fraction(config: SimConfig) -> np.ndarray:
    """Hour of day at each step midpoint."""
    k = np.arange(config.sim_steps)
    return (k + 0.5) * config.delta_t_min / 60.0


def _bell(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def generate_transformer_series(
    rng: np.random.Generator,
    config: SimConfig,
    params: GenerationParams,
    limit_kw: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic inflexible-load and PV series, peak-normalized to the limit.

    The load follows a double-peak residential shape whose daily maximum is
    the morning peak; the secondary evening peak stays below 80% of it so
    that a default demand-response event never makes the headroom negative
    on its own.  PV is a daylight bell.
    """
    hours = _day_fraction(config)
    shape = (
        0.30
        + 0.70 * _bell(hours, 8.1, 2.5)
        + 0.46 * _bell(hours, 19.0, 2.2)
        + 0.02 * rng.standard_normal(config.sim_steps)
    )
    shape = np.clip(shape, 0.05, None)
    load = shape / shape.max() * params.load_multiplier * limit_kw

    pv_shape = _bell(hours, 13.5, 2.0)
    pv_shape[(hours < 6.0) | (hours > 20.0)] = 0.0
    pv_shape *= 1.0 + 0.03 * rng.standard_normal(config.sim_steps)
    pv_shape = np.clip(pv_shape, 0.0, None)
    peak = pv_shape.max()
    if peak > 0 and params.pv_multiplier > 0:
        pv = pv_shape / peak * params.pv_multiplier * limit_kw
    else:
        pv = np.zeros(config.sim_steps)
    return load, pv


def generate_dr_events(
    rng: np.random.Generator, config: SimConfig, params: GenerationParams
) -> list[DrEvent]:
    """Sample DR events: Gaussian start around the configured evening hour."""
    duration = max(1, int(round(params.dr_duration_h * config.steps_per_hour)))
    events = []
    for _ in range(params.dr_events_per_transformer):
        start_h = rng.normal(params.dr_start_mean_h, params.dr_start_sd_h)
        start = int(round(start_h * config.steps_per_hour))
        start = min(max(start, 0), config.sim_steps - duration)
        events.append(
            DrEvent(
                start_step=start,
                duration_steps=duration,
                capacity_reduction=params.dr_capacity_reduction,
                notice_steps=params.dr_notice_steps,
            )
        )
    return events


# Hourly day-ahead price template (EUR/kWh): gently rising through the day
# with short local dips every few hours, a pronounced evening peak, and an
# elevated late-evening tail.  The rising trend keeps cost-optimal charging
# close to plug-in time (long deferral never pays), while the dips leave a
# small but consistent saving for price-aware dispatch and the peak makes
# evening discharge attractive.
_PRICE_TEMPLATE_HOURLY = np.array(
    [
        0.090, 0.085, 0.080, 0.075, 0.072, 0.075,
        0.085, 0.110, 0.135, 0.115, 0.078, 0.042,
        0.026, 0.020, 0.023, 0.032, 0.056, 0.098,
        0.225, 0.270, 0.150, 0.090, 0.075, 0.068,
    ]
)


def generate_prices(
    rng: np.random.Generator, config: SimConfig, params: GenerationParams
) -> PriceSchedule:
    """Day-ahead-shaped charge prices plus multiplier-coupled companions."""
    hours = np.floor(_day_fraction(config)).astype(int) % 24
    charge = _PRICE_TEMPLATE_HOURLY[hours].copy()
    hourly_noise = 1.0 + 0.08 * rng.standard_normal(24)
    charge *= np.clip(hourly_noise, 0.6, 1.4)[hours]
    charge = np.clip(charge, 0.005, None)
    return PriceSchedule.from_multiplier(
        charge, config.discharge_multiplier, params.flex_price_factor
    )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _read_two_column_csv(path: str | Path, value_col: str, sim_steps: int) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != sim_steps:
        raise ScenarioError(
            f"{path}: expected {sim_steps} rows, found {len(rows)}"
        )
    values = np.empty(sim_steps)
    for row in rows:
        values[int(row["step"])] = float(row[value_col])
    return values


def read_series_csv(path: str | Path, sim_steps: int) -> np.ndarray:
    """Read a (step, kw) power series CSV of exactly K rows."""
    return _read_two_column_csv(path, "kw", sim_steps)


def read_prices_csv(path: str | Path, sim_steps: int) -> np.ndarray:
    """Read a (step, eur_per_kwh) price series CSV of exactly K rows."""
    return _read_two_column_csv(path, "eur_per_kwh", sim_steps)


# ---------------------------------------------------------------------------
# Scenario assembly
# ---------------------------------------------------------------------------


def build_scenario(
    config: SimConfig,
    params: GenerationParams | None = None,
    seed: int | None = None,
) -> Scenario:
    """Construct a full scenario deterministically from config + seed."""
    params = params or GenerationParams()
    if seed is not None:
        config = replace(config, seed=seed)
    config.validate()
    rng = np.random.default_rng(config.seed)

    chargers = [
        ChargerSpec(
            id=i,
            transformer_id=i % config.n_transformers,
            max_charge_kw=params.charger_max_charge_kw,
            max_discharge_kw=params.charger_max_discharge_kw,
            voltage_v=params.charger_voltage_v,
            phases=params.charger_phases,
        )
        for i in range(config.n_chargers)
    ]

    sessions = generate_sessions(rng, config, params)

    transformers = []
    for g in range(config.n_transformers):
        if params.load_csv is not None:
            load = read_series_csv(params.load_csv, config.sim_steps)
        else:
            load = None
        if params.pv_csv is not None:
            pv = read_series_csv(params.pv_csv, config.sim_steps)
        else:
            pv = None
        if load is None or pv is None:
            gen_load, gen_pv = generate_transformer_series(
                rng, config, params, params.transformer_limit_kw
            )
            load = gen_load if load is None else load
            pv = gen_pv if pv is None else pv
        events = generate_dr_events(rng, config, params)
        transformers.append(
            TransformerSpec(
                id=g,
                power_limit_kw=params.transformer_limit_kw,
                charger_ids=tuple(
                    c.id for c in chargers if c.transformer_id == g
                ),
                inflexible_load_kw=load,
                pv_generation_kw=pv,
                dr_events=events,
            )
        )

    if params.price_csv is not None:
        charge = read_prices_csv(params.price_csv, config.sim_steps)
        prices = PriceSchedule.from_multiplier(
            charge, config.discharge_multiplier, params.flex_price_factor
        )
    else:
        prices = generate_prices(rng, config, params)

    scenario = Scenario(
        config=config,
        params=params,
        chargers=chargers,
        sessions=sessions,
        transformers=transformers,
        prices=prices,
    )
    scenario.validate()
    return scenario
