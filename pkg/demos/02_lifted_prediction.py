"""
Stacking the SoC dynamics over the horizon
==========================================

The controller optimizes over all horizon steps at once, so the per-step
SoC recursion

    x[h+1] = xi[h] * x[h] + b_c[h] * P_c[h] - b_d[h] * P_d[h]

is lifted into one affine map  X = A @ x0 + G @ P, where X stacks the SoC
of every charger at every future step and P interleaves the charge and
discharge power of every charger, step-major.  This script builds both
forms on a real scenario view and shows they agree to machine precision.
"""

import numpy as np

from v2gmpc.controllers import Controller, ControllerConfig
from v2gmpc.scenario import GenerationParams, SimConfig, build_scenario
from v2gmpc.simengine import SimEnv
from v2gmpc.prediction import build_horizon_view, lift

config = SimConfig(seed=1, n_chargers=4)
scenario = build_scenario(config, GenerationParams(target_ev_count=8), seed=1)
env = SimEnv(scenario)
state = env.reset()

# advance to mid-day, when several EVs are connected, then take the view
controller = Controller(ControllerConfig(kind="empc_g2v"), scenario)
for _ in range(48):
    plan = controller.act(state, env)
    state, _ = env.step(plan.actions)
horizon = controller.config.horizon
view = build_horizon_view(
    state, scenario, k=48, horizon=horizon,
    transformer_forecasts=env.transformer_forecasts(48, horizon),
)

print(f"step {view.k}: {int(view.availability[:, 0].sum())} EVs connected")
print(f"availability (chargers x steps):\n{view.availability.astype(int)}")

model = lift(view)
n, horizon = view.availability.shape
print(f"\nA is {model.a_stack.shape}, G is {model.g_stack.shape}")

# any power profile: the lifted prediction equals the step-by-step recursion
rng = np.random.default_rng(0)
profile = rng.uniform(0.0, 22.0, 2 * horizon * n)
lifted = model.a_stack @ view.x0 + model.g_stack @ profile

x = view.x0.copy()
direct = np.empty(horizon * n)
for h in range(horizon):
    p_c = profile[2 * h * n + 2 * np.arange(n)]
    p_d = profile[2 * h * n + 2 * np.arange(n) + 1]
    x = view.availability[:, h] * x + view.b_charge[:, h] * p_c - view.b_discharge[:, h] * p_d
    direct[h * n : (h + 1) * n] = x

print(f"max |lifted - recursion| = {np.abs(lifted - direct).max():.3e}")
