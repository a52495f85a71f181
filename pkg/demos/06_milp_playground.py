"""
The embedded LP/MILP layer
==========================

The controllers express their plans as sparse linear programs with
optional binary variables.  The same container and solver are usable
directly; here a toy 0/1 knapsack and a small shipping LP are built by
hand and solved.
"""

import numpy as np

from v2gmpc.optimizer import MilpProblem, solve_lp, solve_milp

# --- a 4-item knapsack: maximize value, weight budget 10 -------------------
values = np.array([6.0, 10.0, 12.0, 7.0])
weights = np.array([3.0, 4.0, 6.0, 5.0])

knap = MilpProblem.empty(4)
knap.objective[:] = -values               # solver minimizes
knap.binary_mask[:] = True                # all variables binary
knap.upper[:] = 1.0
knap.add_row(cols=[0, 1, 2, 3], coefs=list(weights), sense="<=", rhs=10.0)

result = solve_milp(knap)
picked = [i for i, v in enumerate(result.values) if v > 0.5]
print(f"knapsack: pick items {picked}, value {-result.objective:.0f}")

# --- a transport LP: two sources, two sinks --------------------------------
# variables: x[source, sink] flattened; costs per unit shipped
cost = np.array([4.0, 6.0, 5.0, 3.0])
supply = [7.0, 8.0]
demand = [6.0, 9.0]

ship = MilpProblem.empty(4)
ship.objective[:] = cost
ship.add_row(cols=[0, 1], coefs=[1.0, 1.0], sense="<=", rhs=supply[0])
ship.add_row(cols=[2, 3], coefs=[1.0, 1.0], sense="<=", rhs=supply[1])
ship.add_row(cols=[0, 2], coefs=[1.0, 1.0], sense="==", rhs=demand[0])
ship.add_row(cols=[1, 3], coefs=[1.0, 1.0], sense="==", rhs=demand[1])

result = solve_lp(ship)
print(f"transport: flows {np.round(result.values, 3)}, cost {result.objective:.1f}")
print(f"residual feasibility violation: {ship.max_violation(result.values):.2e}")
