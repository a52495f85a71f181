"""Acceptance gate: one test and one printed PASS/FAIL line per criterion.

Criteria 3, 4, 5, and 7 share one 50-seed, five-controller closed-loop batch
(session fixture); criterion 6 shares a paired-seed multiplier sweep.  Each
test prints a single summary line to the live terminal so the gate can be
read off the pytest transcript directly.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from v2gmpc.cli import ExperimentSpec, run_bench
from v2gmpc.controllers import build_empc, build_ocmf
from v2gmpc.degradation import calendar_loss, cyclic_loss
from v2gmpc.optimizer import solve_milp
from v2gmpc.prediction import lift

from conftest import BATCH_SEEDS, SWEEP_M_VALUES, SWEEP_SEEDS
from oracle_grid import grid_optimum, make_instance, one_step_cost_tolerance
from test_degradation import D_CAL_REF, D_CYC_REF
from test_prediction import random_view, stepwise_trajectory

MPC_KINDS = ("empc_g2v", "empc_v2g", "ocmf_g2v", "ocmf_v2g")
G2V_KINDS = ("afap", "empc_g2v", "ocmf_g2v")


@pytest.fixture
def emit(capsys):
    def _emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")

    return _emit


def _mean(runs, kind, field, seeds=BATCH_SEEDS):
    return float(np.mean([getattr(runs[(kind, s)].stats, field) for s in seeds]))


class TestCriterion1LiftedModel:
    def test_lift_matches_recursion(self, emit):
        rng = np.random.default_rng(42)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(500):
            n = int(rng.integers(1, 9))
            horizon = int(rng.integers(1, 13))
            view = random_view(rng, n, horizon)
            profile = rng.uniform(0.0, 22.0, 2 * horizon * n)
            model = lift(view)
            lifted = model.a_stack @ view.x0 + model.g_stack @ profile
            direct = stepwise_trajectory(view, profile)
            worst = max(worst, float(np.abs(lifted - direct).max()))
        elapsed = time.perf_counter() - t0
        ok = worst < 1e-10 and elapsed < 10.0
        emit(1, ok, f"500 lift-vs-recursion triples, worst |err| = {worst:.3e} "
                    f"(< 1e-10), elapsed {elapsed:.2f} s (< 10 s)")
        assert worst < 1e-10
        assert elapsed < 10.0


class TestCriterion2SolverOptimality:
    def test_200_tiny_instances_match_grid(self, emit):
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        checked = 0
        while checked < 200:
            bidirectional = bool(rng.random() < 0.4)
            with_flex = bool(bidirectional and rng.random() < 0.5)
            if bidirectional:
                sizes = [(1, 1), (1, 2), (1, 3), (2, 1)]
            else:
                sizes = [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2)]
            n, horizon = sizes[int(rng.integers(len(sizes)))]
            view = make_instance(rng, n, horizon, bidirectional)
            build = build_ocmf if with_flex else build_empc
            problem, _ = build(
                view, lift(view), "v2g" if bidirectional else "g2v"
            )
            result = solve_milp(problem)
            grid = grid_optimum(view, bidirectional, with_flex)
            if result.status in ("infeasible", "unbounded"):
                assert grid is None
            else:
                assert result.status == "optimal"
                assert grid is not None
                assert result.objective <= grid + 1e-6
                assert grid - result.objective <= one_step_cost_tolerance(view)
            checked += 1
        elapsed = time.perf_counter() - t0
        ok = elapsed < 120.0
        emit(2, ok, f"200 tiny instances vs exhaustive pilot grid, all within "
                    f"one grid step, elapsed {elapsed:.1f} s (< 2 min)")
        assert elapsed < 120.0


class TestCriterion3ProfitOrdering:
    def test_profit_and_energy_ordering(self, emit, batch50):
        runs, elapsed = batch50
        p = {k: _mean(runs, k, "profit_eur") for k in
             ("afap", "empc_g2v", "empc_v2g", "ocmf_g2v", "ocmf_v2g")}
        worst_gap = max(
            max(runs[(k, s)].stats.energy_charged_kwh for k in G2V_KINDS)
            - min(runs[(k, s)].stats.energy_charged_kwh for k in G2V_KINDS)
            for s in BATCH_SEEDS
        )
        e_v2g = _mean(runs, "empc_v2g", "energy_charged_kwh")
        e_g2v = _mean(runs, "afap", "energy_charged_kwh")
        checks = [
            p["empc_v2g"] > p["ocmf_v2g"] > 0.0,
            p["empc_g2v"] > p["ocmf_g2v"],
            p["empc_g2v"] > p["afap"],
            worst_gap < 1.0,
            e_v2g > 3.0 * e_g2v,
            elapsed < 1800.0,
        ]
        emit(3, all(checks),
             f"profit eMPC-V2G {p['empc_v2g']:.1f} > OCMF-V2G {p['ocmf_v2g']:.1f} > 0; "
             f"cost eMPC-G2V < OCMF-G2V, AFAP ({p['empc_g2v']:.1f} vs "
             f"{p['ocmf_g2v']:.1f}, {p['afap']:.1f}); G2V energy gap "
             f"{worst_gap:.3f} kWh (< 1); V2G/G2V charged {e_v2g:.0f}/{e_g2v:.0f} kWh "
             f"(> 3x); batch {elapsed / 60:.1f} min (< 30)")
        assert all(checks), checks


class TestCriterion4Degradation:
    def test_degradation_comparisons(self, emit, batch50):
        runs, _ = batch50
        d_cyc = {k: _mean(runs, k, "sum_d_cyc") for k in
                 ("afap", "empc_g2v", "empc_v2g", "ocmf_g2v", "ocmf_v2g")}
        d_cal = {k: _mean(runs, k, "sum_d_cal") for k in d_cyc}
        cyc_ok = all(d_cyc["empc_v2g"] > 3.0 * d_cyc[k] for k in G2V_KINDS)
        band = (max(d_cal.values()) - min(d_cal.values())) / min(d_cal.values())
        band_ok = band < 0.25
        mitigate_ok = (d_cal["empc_v2g"] <= d_cal["afap"]
                       and d_cal["ocmf_v2g"] <= d_cal["afap"])
        ok = cyc_ok and band_ok and mitigate_ok
        emit(4, ok,
             f"d_cyc eMPC-V2G {d_cyc['empc_v2g']:.2e} > 3x max G2V "
             f"{max(d_cyc[k] for k in G2V_KINDS):.2e} [{'ok' if cyc_ok else 'FAIL'}]; "
             f"d_cal spread {band * 100:.0f}% (< 25%) "
             f"[{'ok' if band_ok else 'FAIL'}]; V2G d_cal <= AFAP "
             f"[{'ok' if mitigate_ok else 'FAIL'}]")
        assert cyc_ok
        assert mitigate_ok
        # The spread check fails by design of the scenario defaults: EVs
        # arrive at mean SoC 0.4 and MPC charging is just-in-time, so MPC
        # pools idle near arrival SoC while AFAP pools idle near the 0.8
        # target.  Calendar loss is linear in mean SoC, so the controller
        # families separate by far more than 25%.
        assert band_ok, f"calendar-aging spread {band:.2%} exceeds 25%"


class TestCriterion5Compliance:
    def test_overloads_and_dr(self, emit, batch50):
        runs, _ = batch50
        mpc_overloads = sum(
            runs[(k, s)].stats.overload_steps
            for k in MPC_KINDS for s in BATCH_SEEDS
        )
        mpc_dr_violations = sum(
            runs[(k, s)].stats.dr_overload_steps
            for k in MPC_KINDS for s in BATCH_SEEDS
        )
        dr_seen = sum(
            runs[(k, s)].stats.dr_active_steps
            for k in MPC_KINDS for s in BATCH_SEEDS
        )
        afap_frac = float(np.mean(
            [runs[("afap", s)].stats.overload_steps >= 1 for s in BATCH_SEEDS]
        ))
        ok = (mpc_overloads == 0 and mpc_dr_violations == 0 and dr_seen > 0
              and afap_frac >= 0.8)
        emit(5, ok,
             f"MPC overload steps {mpc_overloads} (= 0), DR violations "
             f"{mpc_dr_violations} (= 0, {dr_seen} DR steps observed); AFAP "
             f"overloads in {afap_frac * 100:.0f}% of seeds (>= 80%)")
        assert mpc_overloads == 0
        assert mpc_dr_violations == 0
        assert dr_seen > 0
        assert afap_frac >= 0.8


class TestCriterion6MultiplierSweep:
    def test_sweep_orderings(self, emit, msweep):
        runs = msweep
        kinds = ("afap", "empc_g2v", "empc_v2g", "ocmf_g2v", "ocmf_v2g")
        top_ok, positive_ok = True, True
        for m in SWEEP_M_VALUES:
            means = {
                k: float(np.mean(
                    [runs[(m, k, s)].stats.profit_eur for s in SWEEP_SEEDS]
                ))
                for k in kinds
            }
            top_ok &= all(means["empc_v2g"] > means[k] for k in kinds
                          if k != "empc_v2g")
            if m >= 0.9:
                positive_ok &= means["ocmf_v2g"] > 0.0
        identical_ok = all(
            runs[(m, k, s)].applied_power == runs[(SWEEP_M_VALUES[0], k, s)].applied_power
            for k in G2V_KINDS for s in SWEEP_SEEDS for m in SWEEP_M_VALUES
        )
        ok = top_ok and positive_ok and identical_ok
        emit(6, ok,
             f"eMPC-V2G top mean profit at every m [{'ok' if top_ok else 'FAIL'}]; "
             f"OCMF-V2G positive for m >= 0.9 [{'ok' if positive_ok else 'FAIL'}]; "
             f"G2V/AFAP power traces bit-identical across m "
             f"[{'ok' if identical_ok else 'FAIL'}]")
        assert top_ok
        assert positive_ok
        assert identical_ok


class TestCriterion7DepartureService:
    def test_departures_met(self, emit, batch50):
        runs, _ = batch50
        rates = {}
        for kind in MPC_KINDS:
            met = sum(runs[(kind, s)].stats.departures_met for s in BATCH_SEEDS)
            total = sum(
                runs[(kind, s)].stats.departures_total for s in BATCH_SEEDS
            )
            rates[kind] = met / total
        slack = sum(runs[(k, s)].stats.slack_steps
                    for k in MPC_KINDS for s in BATCH_SEEDS)
        ok = all(rate >= 0.99 for rate in rates.values())
        emit(7, ok,
             "departure service "
             + ", ".join(f"{k} {rates[k] * 100:.2f}%" for k in MPC_KINDS)
             + f" (all >= 99%); slack steps across batch: {slack}")
        assert all(rate >= 0.99 for rate in rates.values()), rates


class TestCriterion8Timing:
    def test_bench_step_times(self, emit, tmp_path):
        spec = ExperimentSpec(
            mode="bench",
            seeds=(0,),
            evse_counts=(10, 20, 30),
            horizons=(10,),
            bench_steps=48,
            out_dir=str(tmp_path),
        )
        assert run_bench(spec) == 0
        import csv

        with open(tmp_path / "bench.csv") as fh:
            rows = list(csv.DictReader(fh))
        mean_s = {
            (int(r["n_evse"]), r["controller"]): float(r["mean_step_s"])
            for r in rows
        }
        empc_v2g_10 = mean_s[(10, "empc_v2g")]
        worst = max(mean_s.values())
        family_ok = all(
            mean_s[(n, f"{fam}_g2v")] <= 1.2 * mean_s[(n, f"{fam}_v2g")]
            for n in (10, 20, 30) for fam in ("empc", "ocmf")
        )
        trend_ok = all(
            mean_s[(30, k)] >= mean_s[(10, k)]
            for k in ("empc_v2g", "ocmf_v2g")
        )
        ok = empc_v2g_10 < 5.0 and worst < 13.5 and family_ok and trend_ok
        emit(8, ok,
             f"eMPC-V2G {empc_v2g_10 * 1000:.1f} ms/step at 10 EVSE (< 5 s); "
             f"worst controller {worst * 1000:.1f} ms/step up to 30 EVSE "
             f"(< 13.5 s); G2V <= V2G per size [{'ok' if family_ok else 'FAIL'}]; "
             f"V2G step time grows with pool size [{'ok' if trend_ok else 'FAIL'}]")
        assert empc_v2g_10 < 5.0
        assert worst < 13.5
        assert family_ok
        assert trend_ok


class TestCriterion9DegradationOracles:
    def test_scalar_reference_values(self, emit):
        cal = calendar_loss(np.array([0.5]), duration_days=1.0)
        cyc = cyclic_loss(
            np.array([0.4, 0.6]), np.array([22.0, -22.0]), delta_t_h=0.25
        )
        cal_err = abs(cal - D_CAL_REF) / D_CAL_REF
        cyc_err = abs(cyc - D_CYC_REF) / D_CYC_REF
        ok = cal_err < 1e-12 and cyc_err < 1e-12
        emit(9, ok,
             f"calendar rel err {cal_err:.2e}, cyclic rel err {cyc_err:.2e} "
             f"(both < 1e-12 vs 30-digit references)")
        assert cal_err < 1e-12
        assert cyc_err < 1e-12
