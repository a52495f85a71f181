"""Command-line entry point for the experiment shapes.

Four modes: `single` (one seed, one controller, full artifact set),
`batch` (paired seeds across all controllers, aggregate CSV), `m-sweep`
(batch repeated per discharge-price multiplier), and `bench` (per-step
wall-time scan over pool sizes and horizons).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .controllers import CONTROLLER_KINDS, Controller, ControllerConfig
from .degradation import write_degradation_csv
from .metrics import RunStats, batch, summarize, write_batch_csv, write_run_json
from .scenario import (
    GenerationParams,
    Scenario,
    ScenarioError,
    SimConfig,
    build_scenario,
    load_config,
)
from .simengine import SimEnv

__all__ = ["ExperimentSpec", "run_simulation", "run_single", "run_batch",
           "run_m_sweep", "run_bench", "main"]

DEFAULT_M_VALUES = (0.8, 0.9, 1.0, 1.1, 1.2)
DEFAULT_BENCH_EVSE = tuple(range(5, 61, 5))
DEFAULT_BENCH_HORIZONS = (10, 30)
BENCH_CELL_CAP_S = 600.0


@dataclass
class ExperimentSpec:
    mode: str
    config_path: str | None = None
    controller: str = "empc_v2g"
    horizon: int = 10
    seeds: tuple[int, ...] = (0,)
    m_values: tuple[float, ...] = DEFAULT_M_VALUES
    evse_counts: tuple[int, ...] = DEFAULT_BENCH_EVSE
    horizons: tuple[int, ...] = DEFAULT_BENCH_HORIZONS
    out_dir: str = "out"
    workers: int = 1
    bench_steps: int = 16

    def __post_init__(self) -> None:
        if self.mode not in ("single", "batch", "m-sweep", "bench"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "batch" and not self.seeds:
            raise ValueError("batch mode needs a nonempty seed list")
        if any(not (0.0 < m <= 2.0) for m in self.m_values):
            raise ValueError("m values must lie in (0, 2]")


def _load(spec: ExperimentSpec) -> tuple[SimConfig, GenerationParams]:
    if spec.config_path is not None:
        return load_config(spec.config_path)
    return SimConfig(), GenerationParams()


def run_simulation(
    scenario: Scenario, kind: str, horizon: int
) -> tuple[RunStats, SimEnv, Controller, list]:
    """Run one full closed-loop day; returns stats and live objects."""
    env = SimEnv(scenario)
    state = env.reset()
    controller = Controller(ControllerConfig(kind=kind, horizon=horizon), scenario)
    for _ in range(scenario.config.sim_steps):
        plan = controller.act(state, env)
        state, _ = env.step(plan.actions)
    stats, deg_results = summarize(
        env, controller, price_multiplier=scenario.config.discharge_multiplier
    )
    return stats, env, controller, deg_results


def _scenario_for(
    config: SimConfig,
    params: GenerationParams,
    seed: int,
    m: float | None = None,
) -> Scenario:
    if m is not None:
        config = replace(config, discharge_multiplier=m)
    return build_scenario(config, params, seed=seed)


def _write_controller_log(path: Path, controller: Controller) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "status", "objective", "node_count", "solve_ms",
             "slack_used", "total_flex_kw"]
        )
        for row in controller.log:
            writer.writerow(
                [
                    row.step,
                    row.status,
                    "" if row.objective is None else f"{row.objective:.9g}",
                    row.node_count,
                    f"{row.solve_ms:.3f}",
                    f"{row.slack_used:.9g}",
                    f"{row.total_flex_kw:.6f}",
                ]
            )


def run_single(spec: ExperimentSpec) -> int:
    config, params = _load(spec)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = _scenario_for(config, params, spec.seeds[0])
    stats, env, controller, deg_results = run_simulation(
        scenario, spec.controller, spec.horizon
    )
    env.write_trace_csv(out / "trace.csv")
    _write_controller_log(out / "controller_log.csv", controller)
    write_degradation_csv(out / "degradation.csv", deg_results)
    write_run_json(out / "summary.json", stats)
    return 0


def _batch_cell(
    args: tuple[SimConfig, GenerationParams, int, str, int, float | None],
) -> RunStats:
    config, params, seed, kind, horizon, m = args
    scenario = _scenario_for(config, params, seed, m)
    stats, _, _, _ = run_simulation(scenario, kind, horizon)
    return stats


def _run_cells(
    cells: list[tuple], workers: int
) -> tuple[list[RunStats], list[str]]:
    runs: list[RunStats] = []
    failures: list[str] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell, result in zip(cells, pool.map(_batch_cell_safe, cells)):
                if isinstance(result, str):
                    failures.append(result)
                else:
                    runs.append(result)
    else:
        for cell in cells:
            result = _batch_cell_safe(cell)
            if isinstance(result, str):
                failures.append(result)
            else:
                runs.append(result)
    return runs, failures


def _batch_cell_safe(cell: tuple) -> RunStats | str:
    try:
        return _batch_cell(cell)
    except Exception as exc:  # noqa: BLE001 - batch must survive seed failures
        _, _, seed, kind, *_ = cell
        return f"seed={seed} controller={kind}: {exc}"


def _write_runs_csv(path: Path, runs: list[RunStats]) -> None:
    fields = [
        "controller", "seed", "horizon", "price_multiplier", "profit_eur",
        "energy_charged_kwh", "energy_discharged_kwh", "sum_d_cal",
        "sum_d_cyc", "sum_q_lost", "overload_steps", "dr_overload_steps",
        "dr_active_steps", "departures_total", "departures_met",
        "flex_offered_kwh", "mean_solve_ms", "max_solve_ms", "slack_steps",
        "fallback_steps",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for run in sorted(runs, key=lambda r: (r.controller, r.seed)):
            writer.writerow([getattr(run, f) for f in fields])


def run_batch(spec: ExperimentSpec, m: float | None = None, tag: str = "") -> int:
    config, params = _load(spec)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [
        (config, params, seed, kind, spec.horizon, m)
        for seed in spec.seeds
        for kind in CONTROLLER_KINDS
    ]
    runs, failures = _run_cells(cells, spec.workers)
    _write_runs_csv(out / f"runs{tag}.csv", runs)
    write_batch_csv(out / f"batch{tag}.csv", batch(runs))
    if failures:
        with open(out / f"failures{tag}.txt", "w") as fh:
            fh.write("\n".join(failures) + "\n")
        for failure in failures:
            print(f"cell failed: {failure}", file=sys.stderr)
    return 0


def run_m_sweep(spec: ExperimentSpec) -> int:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config, params = _load(spec)
    profile_rows = []
    for m in spec.m_values:
        cells = [
            (config, params, seed, kind, spec.horizon, m)
            for seed in spec.seeds
            for kind in CONTROLLER_KINDS
        ]
        runs, failures = _run_cells(cells, spec.workers)
        tag = f"_m{m:g}"
        _write_runs_csv(out / f"runs{tag}.csv", runs)
        write_batch_csv(out / f"batch{tag}.csv", batch(runs))
        for run in sorted(runs, key=lambda r: (r.controller, r.seed)):
            profile_rows.append(
                [f"{m:g}", run.controller, run.seed, f"{run.profit_eur:.9g}"]
            )
        for failure in failures:
            print(f"cell failed (m={m:g}): {failure}", file=sys.stderr)
    with open(out / "m_sweep_profits.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "controller", "seed", "profit_eur"])
        writer.writerows(profile_rows)
    return 0


def run_bench(spec: ExperimentSpec) -> int:
    """Mean per-step controller wall time over pool sizes and horizons."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config, params = _load(spec)
    kinds = [k for k in CONTROLLER_KINDS if k != "afap"]
    rows = []
    for n_evse in spec.evse_counts:
        for horizon in spec.horizons:
            cell_config = replace(
                config,
                n_chargers=n_evse,
                n_transformers=min(3, n_evse),
            )
            scenario = build_scenario(cell_config, params, seed=spec.seeds[0])
            for kind in kinds:
                env = SimEnv(scenario)
                state = env.reset()
                controller = Controller(
                    ControllerConfig(kind=kind, horizon=horizon), scenario
                )
                times = []
                capped = False
                t_cell = time.perf_counter()
                for _ in range(min(spec.bench_steps, cell_config.sim_steps)):
                    t0 = time.perf_counter()
                    plan = controller.act(state, env)
                    times.append(time.perf_counter() - t0)
                    state, _ = env.step(plan.actions)
                    if time.perf_counter() - t_cell > BENCH_CELL_CAP_S:
                        capped = True
                        break
                rows.append(
                    [
                        n_evse,
                        horizon,
                        kind,
                        len(times),
                        f"{float(np.mean(times)):.6f}",
                        f"{float(np.max(times)):.6f}",
                        int(capped),
                    ]
                )
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n_evse", "horizon", "controller", "steps",
             "mean_step_s", "max_step_s", "capped"]
        )
        writer.writerows(rows)
    return 0


def _parse_seeds(text: str) -> tuple[int, ...]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(part) for part in text.split(","))


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v2gmpc",
        description="EV charging-pool MPC simulation experiments",
    )
    parser.add_argument("--config", default=None, help="YAML scenario config")
    parser.add_argument(
        "--mode", default="single",
        choices=["single", "batch", "m-sweep", "bench"],
    )
    parser.add_argument(
        "--controller", default="empc_v2g", choices=list(CONTROLLER_KINDS)
    )
    parser.add_argument("--horizon", type=int, default=10)
    parser.add_argument(
        "--seeds", type=_parse_seeds, default=(0,),
        help="single seed, comma list, or inclusive range A..B",
    )
    parser.add_argument(
        "--m", type=_parse_floats, default=DEFAULT_M_VALUES,
        help="comma-separated discharge price multipliers (m-sweep mode)",
    )
    parser.add_argument(
        "--evse-counts", type=_parse_ints, default=DEFAULT_BENCH_EVSE,
        help="comma-separated pool sizes (bench mode)",
    )
    parser.add_argument(
        "--bench-horizons", type=_parse_ints, default=DEFAULT_BENCH_HORIZONS,
    )
    parser.add_argument(
        "--bench-steps", type=int, default=16,
        help="closed-loop steps timed per bench cell",
    )
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExperimentSpec(
            mode=args.mode,
            config_path=args.config,
            controller=args.controller,
            horizon=args.horizon,
            seeds=args.seeds,
            m_values=args.m,
            evse_counts=args.evse_counts,
            horizons=args.bench_horizons,
            out_dir=args.out,
            workers=args.workers,
            bench_steps=args.bench_steps,
        )
        if spec.mode == "single":
            return run_single(spec)
        if spec.mode == "batch":
            return run_batch(spec)
        if spec.mode == "m-sweep":
            return run_m_sweep(spec)
        return run_bench(spec)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
