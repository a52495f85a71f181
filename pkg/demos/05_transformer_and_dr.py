"""
Transformer headroom and demand-response events
===============================================

The pool shares a transformer with a household baseline load, partially
offset by PV.  Chargers may only use the headroom left under the limit,
and a demand-response (DR) event reduces that limit further for a window
of the day, announced a little in advance.

This script runs the uncontrolled baseline and one MPC controller on the
same day and shows where each of them sits relative to the limit.
"""

import numpy as np

from v2gmpc.cli import run_simulation
from v2gmpc.scenario import GenerationParams, SimConfig, build_scenario

SEED = 2
config = SimConfig(seed=SEED)
scenario = build_scenario(config, GenerationParams(), seed=SEED)

for tr in scenario.transformers:
    for event in tr.dr_events:
        print(
            f"DR event on transformer {tr.id}: steps "
            f"{event.start_step}-{event.start_step + event.duration_steps}, "
            f"limit reduced by {event.capacity_reduction:.0%}, announced "
            f"{event.notice_steps} step(s) ahead"
        )

for kind in ("afap", "empc_g2v"):
    stats, env, _, _ = run_simulation(scenario, kind, config.horizon_steps)
    margin = np.array(
        [r.transformer_limit_kw - r.transformer_net_kw for r in env.records]
    )
    worst = margin.min(axis=1) if margin.ndim > 1 else margin
    print(
        f"\n{kind}: {stats.overload_steps} overload step(s), "
        f"worst margin {worst.min():.1f} kW at step {int(worst.argmin())}"
    )
    tight = np.flatnonzero(worst < 10.0)
    if tight.size:
        print(f"  steps within 10 kW of the limit: {tight.tolist()}")

print(
    "\nThe uncontrolled strategy charges straight through the morning load "
    "peak\nand trips the limit; the MPC sees the forecast headroom (and the "
    "announced\nDR window) inside its horizon and shifts charging around "
    "both."
)
