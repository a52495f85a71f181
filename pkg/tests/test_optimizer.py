"""LP/MILP layer against brute-force oracles.

The LP oracle enumerates basic feasible points (all n-subsets of active
constraints, including bounds); the MILP oracle enumerates every binary
assignment and solves the continuous remainder by the same vertex method.
Both are independent of the solver under test.
"""

import itertools

import numpy as np
import pytest

from v2gmpc.optimizer import (
    FEASIBILITY_TOL,
    MilpProblem,
    dump_lp,
    solve_lp,
    solve_milp,
)


def _random_lp(rng: np.random.Generator, n: int, m: int) -> MilpProblem:
    """A bounded random LP with box[0, u] variables and <= rows."""
    problem = MilpProblem.empty(n)
    problem.objective = rng.uniform(-2, 2, n)
    problem.upper = rng.uniform(0.5, 3.0, n)
    for _ in range(m):
        cols = np.arange(n)
        coefs = rng.uniform(-1, 2, n)
        rhs = float(rng.uniform(0.5, 4.0))
        problem.add_row(cols, coefs, "<=", rhs)
    return problem


def vertex_optimum(problem: MilpProblem) -> float | None:
    """Minimum objective over all vertices of the feasible polytope.

    Candidate vertices are intersections of n active constraints drawn
    from rows (at equality) and variable bounds.
    """
    n = problem.n_vars
    mat, lb, ub = problem.constraint_matrix()
    rows = [
        (np.asarray(mat[r].todense()).ravel(), ub[r])
        for r in range(problem.n_rows)
        if np.isfinite(ub[r])
    ]
    # each candidate active set: for every variable either a bound or a row
    planes = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        planes.append((e, problem.lower[j]))
        if np.isfinite(problem.upper[j]):
            planes.append((e, problem.upper[j]))
    planes.extend(rows)
    best = None
    for combo in itertools.combinations(range(len(planes)), n):
        a = np.array([planes[i][0] for i in combo])
        b = np.array([planes[i][1] for i in combo])
        try:
            x = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            continue
        if problem.max_violation(x) > 1e-8:
            continue
        value = float(problem.objective @ x)
        if best is None or value < best:
            best = value
    return best


def binary_enumeration_optimum(problem: MilpProblem) -> float | None:
    """Exhaustive optimum over binary assignments, vertices for the rest.

    Each assignment is substituted into the rows, leaving a smaller LP over
    the continuous variables (or a plain feasibility check when there are
    none).
    """
    binaries = np.flatnonzero(problem.binary_mask)
    cont = np.flatnonzero(~problem.binary_mask)
    mat, lb, ub = problem.constraint_matrix()
    dense = np.asarray(mat.todense()) if problem.n_rows else np.zeros((0, problem.n_vars))
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        bits = np.array(bits)
        fixed_activity = dense[:, binaries] @ bits if problem.n_rows else np.zeros(0)
        value_fixed = float(problem.objective[binaries] @ bits)
        if cont.size == 0:
            if np.all(fixed_activity >= lb - 1e-9) and np.all(
                fixed_activity <= ub + 1e-9
            ):
                if best is None or value_fixed < best:
                    best = value_fixed
            continue
        sub = MilpProblem.empty(cont.size)
        sub.objective = problem.objective[cont].copy()
        sub.lower = problem.lower[cont].copy()
        sub.upper = problem.upper[cont].copy()
        for r in range(problem.n_rows):
            coefs = dense[r, cont]
            rhs = problem.rows_rhs[r] - fixed_activity[r]
            sub.add_row(np.arange(cont.size), coefs, problem.rows_sense[r], rhs)
        value = vertex_optimum(sub)
        if value is not None:
            total = value + value_fixed
            if best is None or total < best:
                best = total
    return best


class TestLpAgainstVertexOracle:
    def test_100_random_instances(self):
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(100):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(1, 5))
            problem = _random_lp(rng, n, m)
            expected = vertex_optimum(problem)
            result = solve_lp(problem)
            assert expected is not None  # origin is always feasible here
            assert result.status == "optimal"
            assert result.objective == pytest.approx(expected, abs=1e-7)
            checked += 1
        assert checked == 100

    def test_solution_feasible(self):
        rng = np.random.default_rng(3)
        problem = _random_lp(rng, 4, 3)
        result = solve_lp(problem)
        assert problem.max_violation(result.values) <= FEASIBILITY_TOL

    def test_infeasible_detected(self):
        problem = MilpProblem.empty(1)
        problem.upper[:] = 1.0
        problem.add_row([0], [1.0], ">=", 2.0)
        assert solve_lp(problem).status == "infeasible"

    def test_unbounded_detected(self):
        problem = MilpProblem.empty(1)
        problem.objective[:] = -1.0  # minimize -x with x unbounded above
        assert solve_lp(problem).status == "unbounded"

    def test_equality_rows(self):
        problem = MilpProblem.empty(2)
        problem.objective = np.array([1.0, 2.0])
        problem.upper[:] = 10.0
        problem.add_row([0, 1], [1.0, 1.0], "==", 4.0)
        result = solve_lp(problem)
        assert result.objective == pytest.approx(4.0)  # all weight on x0

    def test_rejects_binary_mask(self):
        problem = MilpProblem.empty(1)
        problem.binary_mask[0] = True
        problem.upper[0] = 1.0
        with pytest.raises(ValueError):
            solve_lp(problem)


class TestMilpAgainstEnumeration:
    def test_random_knapsacks(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            n = int(rng.integers(2, 9))
            problem = MilpProblem.empty(n)
            problem.objective = -rng.uniform(0.1, 1.0, n)  # maximize value
            problem.upper[:] = 1.0
            problem.binary_mask[:] = True
            weights = rng.uniform(0.1, 1.0, n)
            problem.add_row(np.arange(n), weights, "<=", float(weights.sum() * 0.5))
            expected = binary_enumeration_optimum(problem)
            result = solve_milp(problem)
            assert result.status == "optimal"
            assert result.objective == pytest.approx(expected, abs=1e-7)

    def test_mixed_integer_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            n = int(rng.integers(3, 6))
            problem = _random_lp(rng, n, int(rng.integers(1, 4)))
            n_bin = int(rng.integers(1, n))
            problem.binary_mask[:n_bin] = True
            problem.upper[:n_bin] = 1.0
            expected = binary_enumeration_optimum(problem)
            result = solve_milp(problem)
            assert result.status == "optimal"
            assert result.objective == pytest.approx(expected, abs=1e-7)

    def test_integrality_of_returned_solution(self):
        rng = np.random.default_rng(4)
        problem = _random_lp(rng, 4, 2)
        problem.binary_mask[:2] = True
        problem.upper[:2] = 1.0
        result = solve_milp(problem)
        z = result.values[:2]
        assert np.all(np.minimum(np.abs(z), np.abs(z - 1)) < 1e-6)

    def test_no_binaries_falls_back_to_lp(self):
        rng = np.random.default_rng(5)
        problem = _random_lp(rng, 3, 2)
        assert solve_milp(problem).objective == pytest.approx(
            solve_lp(problem).objective
        )

    def test_infeasible_detected(self):
        problem = MilpProblem.empty(2)
        problem.upper[:] = 1.0
        problem.binary_mask[:] = True
        problem.add_row([0, 1], [1.0, 1.0], "==", 1.5)
        assert solve_milp(problem).status == "infeasible"


class TestProblemContainer:
    def test_add_row_validates_sense_and_indices(self):
        problem = MilpProblem.empty(2)
        with pytest.raises(ValueError):
            problem.add_row([0], [1.0], "<", 1.0)
        with pytest.raises(ValueError):
            problem.add_row([5], [1.0], "<=", 1.0)

    def test_validate_rejects_crossed_bounds(self):
        problem = MilpProblem.empty(1)
        problem.lower[0] = 2.0
        problem.upper[0] = 1.0
        with pytest.raises(ValueError):
            problem.validate()

    def test_validate_rejects_wide_binaries(self):
        problem = MilpProblem.empty(1)
        problem.binary_mask[0] = True
        problem.upper[0] = 2.0
        with pytest.raises(ValueError):
            problem.validate()

    def test_max_violation_measures_worst_breach(self):
        problem = MilpProblem.empty(2)
        problem.upper[:] = 1.0
        problem.add_row([0, 1], [1.0, 1.0], "<=", 1.0)
        assert problem.max_violation(np.array([1.0, 1.0])) == pytest.approx(1.0)
        assert problem.max_violation(np.array([0.5, 0.25])) == 0.0

    def test_dump_lp_writes_readable_model(self, tmp_path):
        problem = MilpProblem.empty(2)
        problem.objective = np.array([1.0, -1.0])
        problem.upper[:] = 1.0
        problem.binary_mask[1] = True
        problem.add_row([0, 1], [1.0, 2.0], "<=", 2.0)
        path = tmp_path / "model.lp"
        dump_lp(problem, path)
        text = path.read_text()
        assert "Minimize" in text and "Subject To" in text and "Binary" in text
