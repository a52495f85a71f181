"""
Building a synthetic charging-pool day
======================================

A scenario bundles everything one simulated day needs: the charger pool,
the EV sessions (arrival, departure, arrival SoC, required SoC), a
transformer baseline-load and PV series at 15-minute resolution, the four
price series, and any demand-response events.  Everything is derived
deterministically from a single seed.
"""

import numpy as np

from v2gmpc.scenario import GenerationParams, SimConfig, build_scenario

# 10 chargers behind one transformer, 96 steps of 15 minutes
config = SimConfig(seed=7)
scenario = build_scenario(config, GenerationParams(), seed=7)

print(f"chargers:   {len(scenario.chargers)}")
print(f"sessions:   {len(scenario.sessions)}")
print(f"dr events:  {sum(len(t.dr_events) for t in scenario.transformers)}")

# sessions arrive with a truncated-Gaussian SoC and must reach 0.8
for session in scenario.sessions[:5]:
    print(
        f"  EV {session.id:2d}: charger {session.charger_id}, "
        f"steps {session.arrival_step:3d}-{session.departure_step:3d}, "
        f"SoC {session.soc_arrival:.2f} -> {session.soc_required_min:.2f}"
    )

# the transformer headroom is limit - (baseline load - PV)
tr = scenario.transformers[0]
net = tr.inflexible_load_kw - tr.pv_generation_kw
print(f"\ntransformer limit: {tr.power_limit_kw:.0f} kW")
print(f"peak baseline net load: {net.max():.0f} kW at step {net.argmax()}")
print(f"min headroom for charging: {(tr.power_limit_kw - net).min():.0f} kW")

# charge prices follow a day-ahead-shaped template; discharge pays a multiple
prices = scenario.prices
hour = np.arange(96) * 0.25
print(f"\ncharge price  min {prices.charge.min():.3f} @ {hour[prices.charge.argmin()]:.2f} h")
print(f"charge price  max {prices.charge.max():.3f} @ {hour[prices.charge.argmax()]:.2f} h")
print(f"discharge/charge ratio: {scenario.config.discharge_multiplier}")
