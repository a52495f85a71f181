"""Sparse LP/MILP container and deterministic solves.

The container keeps the controller problems solver-agnostic; solving is
delegated to scipy's HiGHS backend (dual simplex for pure LPs,
branch-and-cut for problems with binaries).  Optimal solutions are
re-verified against the stored rows before being reported, so a numerical
breakdown can never masquerade as "optimal".
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

__all__ = ["MilpProblem", "MilpSolution", "solve_lp", "solve_milp", "dump_lp"]

FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6

_SENSES = ("<=", ">=", "==")


@dataclass
class MilpProblem:
    """Minimization problem with box bounds, sparse rows, and binary vars."""

    n_vars: int
    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    binary_mask: np.ndarray
    rows_cols: list[np.ndarray] = field(default_factory=list)
    rows_coefs: list[np.ndarray] = field(default_factory=list)
    rows_sense: list[str] = field(default_factory=list)
    rows_rhs: list[float] = field(default_factory=list)
    warm_start: np.ndarray | None = None

    @classmethod
    def empty(cls, n_vars: int) -> "MilpProblem":
        return cls(
            n_vars=n_vars,
            objective=np.zeros(n_vars),
            lower=np.zeros(n_vars),
            upper=np.full(n_vars, np.inf),
            binary_mask=np.zeros(n_vars, dtype=bool),
        )

    def add_row(self, cols, coefs, sense: str, rhs: float) -> None:
        cols = np.asarray(cols, dtype=np.int64)
        coefs = np.asarray(coefs, dtype=float)
        if sense not in _SENSES:
            raise ValueError(f"unknown row sense {sense!r}")
        if cols.size and cols.max() >= self.n_vars:
            raise ValueError("row references a variable index out of range")
        self.rows_cols.append(cols)
        self.rows_coefs.append(coefs)
        self.rows_sense.append(sense)
        self.rows_rhs.append(float(rhs))

    @property
    def n_rows(self) -> int:
        return len(self.rows_rhs)

    def validate(self) -> None:
        if np.any(self.lower > self.upper + 1e-15):
            raise ValueError("variable bounds must satisfy lo <= hi")
        if np.any(self.binary_mask & ((self.lower < -1e-12) | (self.upper > 1 + 1e-12))):
            raise ValueError("binary variables must have bounds within [0, 1]")

    def constraint_matrix(self) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        """Rows as a CSR matrix with per-row (lb, ub) activity limits."""
        n = self.n_rows
        lb = np.empty(n)
        ub = np.empty(n)
        data, indices, indptr = [], [], [0]
        for i in range(n):
            indices.append(self.rows_cols[i])
            data.append(self.rows_coefs[i])
            indptr.append(indptr[-1] + len(self.rows_cols[i]))
            rhs = self.rows_rhs[i]
            sense = self.rows_sense[i]
            lb[i] = -np.inf if sense == "<=" else rhs
            ub[i] = np.inf if sense == ">=" else rhs
        if n == 0:
            mat = sparse.csr_matrix((0, self.n_vars))
        else:
            mat = sparse.csr_matrix(
                (np.concatenate(data), np.concatenate(indices), np.array(indptr)),
                shape=(n, self.n_vars),
            )
        return mat, lb, ub

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint/bound violation at x."""
        viol = max(
            float(np.max(self.lower - x, initial=0.0)),
            float(np.max(x - self.upper, initial=0.0)),
        )
        if self.n_rows:
            mat, lb, ub = self.constraint_matrix()
            act = mat @ x
            viol = max(
                viol,
                float(np.max(lb - act, initial=0.0)),
                float(np.max(act - ub, initial=0.0)),
            )
        return viol


@dataclass(frozen=True)
class MilpSolution:
    status: str  # optimal | infeasible | unbounded | node_limit | time_limit | numerical
    values: np.ndarray | None
    objective: float | None
    mip_gap: float
    node_count: int
    solve_time: float

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def _verify_optimal(problem: MilpProblem, x: np.ndarray) -> bool:
    if problem.max_violation(x) > FEASIBILITY_TOL:
        return False
    if problem.binary_mask.any():
        z = x[problem.binary_mask]
        if np.any(np.minimum(np.abs(z), np.abs(z - 1.0)) > INTEGRALITY_TOL):
            return False
    return True


def solve_lp(problem: MilpProblem) -> MilpSolution:
    """Solve a pure LP (no binaries) to proven optimality or verdict."""
    if problem.binary_mask.any():
        raise ValueError("solve_lp requires an empty binary_mask")
    problem.validate()
    mat, lb, ub = problem.constraint_matrix()
    a_ub_parts, b_ub_parts = [], []
    a_eq_parts, b_eq_parts = [], []
    finite_ub = np.isfinite(ub) & ~np.isfinite(lb)
    finite_lb = np.isfinite(lb) & ~np.isfinite(ub)
    eq = np.isfinite(lb) & np.isfinite(ub)
    if finite_ub.any():
        a_ub_parts.append(mat[finite_ub])
        b_ub_parts.append(ub[finite_ub])
    if finite_lb.any():
        a_ub_parts.append(-mat[finite_lb])
        b_ub_parts.append(-lb[finite_lb])
    if eq.any():
        a_eq_parts.append(mat[eq])
        b_eq_parts.append(lb[eq])
    t0 = time.perf_counter()
    res = linprog(
        problem.objective,
        A_ub=sparse.vstack(a_ub_parts) if a_ub_parts else None,
        b_ub=np.concatenate(b_ub_parts) if b_ub_parts else None,
        A_eq=sparse.vstack(a_eq_parts) if a_eq_parts else None,
        b_eq=np.concatenate(b_eq_parts) if b_eq_parts else None,
        bounds=np.column_stack([problem.lower, problem.upper]),
        method="highs",
    )
    elapsed = time.perf_counter() - t0
    if res.status == 0:
        x = np.asarray(res.x)
        if not _verify_optimal(problem, x):
            return MilpSolution("numerical", x, float(res.fun), np.inf, 0, elapsed)
        return MilpSolution("optimal", x, float(res.fun), 0.0, 0, elapsed)
    status = {2: "infeasible", 3: "unbounded"}.get(res.status, "numerical")
    return MilpSolution(status, None, None, np.inf, 0, elapsed)


def solve_milp(
    problem: MilpProblem,
    node_limit: int | None = None,
    time_limit: float | None = None,
    mip_rel_gap: float = 0.0,
) -> MilpSolution:
    """Branch-and-cut solve; deterministic per input.

    `mip_rel_gap` is the relative optimality gap at which the search may
    stop (0 proves optimality; small positive values skip the often long
    proof phase on near-degenerate instances).
    """
    problem.validate()
    if not problem.binary_mask.any():
        return solve_lp(problem)
    mat, lb, ub = problem.constraint_matrix()
    options: dict = {"mip_rel_gap": mip_rel_gap}
    if node_limit is not None:
        options["node_limit"] = node_limit
    if time_limit is not None:
        options["time_limit"] = time_limit
    t0 = time.perf_counter()
    res = milp(
        c=problem.objective,
        constraints=LinearConstraint(mat, lb, ub) if problem.n_rows else (),
        integrality=problem.binary_mask.astype(int),
        bounds=Bounds(problem.lower, problem.upper),
        options=options,
    )
    elapsed = time.perf_counter() - t0
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        x = np.asarray(res.x)
        if not _verify_optimal(problem, x):
            return MilpSolution("numerical", x, float(res.fun), np.inf, nodes, elapsed)
        gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
        return MilpSolution("optimal", x, float(res.fun), gap, nodes, elapsed)
    if res.status == 1:  # iteration/node/time limit; incumbent may exist
        values = np.asarray(res.x) if res.x is not None else None
        objective = float(res.fun) if values is not None else None
        gap = float(getattr(res, "mip_gap", np.inf) or np.inf)
        status = "time_limit" if time_limit is not None else "node_limit"
        return MilpSolution(status, values, objective, gap, nodes, elapsed)
    status = {2: "infeasible", 3: "unbounded"}.get(res.status, "numerical")
    return MilpSolution(status, None, None, np.inf, nodes, elapsed)


def dump_lp(problem: MilpProblem, path: str | Path) -> None:
    """Write the problem in LP file format for external cross-checks."""
    lines = ["Minimize", " obj: " + _linear_expr(problem.objective)]
    lines.append("Subject To")
    for i in range(problem.n_rows):
        expr = _linear_expr_sparse(problem.rows_cols[i], problem.rows_coefs[i])
        lines.append(f" r{i}: {expr} {problem.rows_sense[i].replace('==', '=')} "
                     f"{problem.rows_rhs[i]:.12g}")
    lines.append("Bounds")
    for j in range(problem.n_vars):
        lines.append(f" {problem.lower[j]:.12g} <= x{j} <= {problem.upper[j]:.12g}")
    binaries = np.flatnonzero(problem.binary_mask)
    if binaries.size:
        lines.append("Binary")
        lines.append(" " + " ".join(f"x{j}" for j in binaries))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


def _linear_expr(coefs: np.ndarray) -> str:
    nz = np.flatnonzero(coefs)
    if nz.size == 0:
        return "0 x0"
    return " + ".join(f"{coefs[j]:.12g} x{j}" for j in nz)


def _linear_expr_sparse(cols: np.ndarray, coefs: np.ndarray) -> str:
    if cols.size == 0:
        return "0 x0"
    return " + ".join(f"{c:.12g} x{j}" for j, c in zip(cols, coefs))
