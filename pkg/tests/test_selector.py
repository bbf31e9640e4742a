import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog, minimize

from entrosense.corrmodel import CorrelationModel, build_correlation
from entrosense.entropy import QuantizationSpec, entropy_report, selected_entropy_lb
from entrosense.errors import ParameterError
from entrosense.scenario import SensorField, distance_matrix
from entrosense.selector import (
    RelaxedSolution,
    SolverConfig,
    evaluate_selection,
    exhaustive_select,
    linear_oracle,
    make_constraint,
    objective_gradient,
    objective_lb,
    optimize_selection,
    prepare_problem,
    project,
    random_selection,
    round_selection,
    solve_relaxed,
    threshold_select_max_power,
)

from conftest import kernel_matrix

NU = 1e-3


def _problem(m, seed, **kw):
    fld, C = kernel_matrix(m, seed=seed, **kw)
    return fld, prepare_problem(C, NU)


def _sqrtP_bound(prob, p):
    """Quantized-entropy bound of sqrt(P) C sqrt(P) from its own spectrum.

    With p >= nu the nonzero eigenvalues are >= nu * lambda_min_pos(C) while
    the rest are rounding noise, so half that value separates them.
    """
    s = np.sqrt(p)
    w = np.linalg.eigvalsh(s[:, None] * prob.C * s[None, :])
    keep = w[w > 0.5 * prob.q.nu * prob.spec.lambda_min_pos]
    r = keep.size
    return 0.5 * (r * math.log2(2 * math.pi * math.e / prob.q.delta**2) + np.log2(keep).sum())


# -- objective -----------------------------------------------------------------------


def test_objective_scalar_case():
    prob = prepare_problem(np.array([[2500.0]]), NU)
    q = prob.q
    val = objective_lb([1.0], prob.C_bar, prob.L_r, q)
    expected = 0.5 * (math.log2(2 * math.pi * math.e / q.delta**2) + math.log2(2500.0))
    assert val == pytest.approx(expected, rel=1e-13)
    # equals the full-rank quantized bound for one sensor
    assert val == pytest.approx(prob.full.H_tilde, rel=1e-13)


def test_objective_at_all_ones_formula():
    _, prob = _problem(12, 3)
    coef = math.log2(2 * math.pi * math.e / prob.q.delta**2)
    from entrosense.speclinalg import pseudo_log_det
    expected = 0.5 * (np.trace(prob.C_bar) * coef + pseudo_log_det(prob.spec))
    assert objective_lb(np.ones(12), prob.C_bar, prob.L_r, prob.q) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_objective_is_a_lower_bound(seed):
    _, prob = _problem(15, seed)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        p = rng.uniform(NU, 1.0, 15)
        assert objective_lb(p, prob.C_bar, prob.L_r, prob.q) <= _sqrtP_bound(prob, p) + 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_gradient_finite_differences(seed):
    _, prob = _problem(10, seed)
    rng = np.random.default_rng(100 + seed)
    p = rng.uniform(0.05, 1.0, 10)
    g = objective_gradient(p, prob.C_bar, prob.L_r, prob.q)
    fd = np.empty(10)
    for i in range(10):
        e = np.zeros(10)
        e[i] = 1e-6
        fd[i] = (objective_lb(p + e, prob.C_bar, prob.L_r, prob.q)
                 - objective_lb(p - e, prob.C_bar, prob.L_r, prob.q)) / 2e-6
    assert np.max(np.abs(g - fd) / np.abs(g)) <= 1e-5


def test_gradient_separable_case():
    q = QuantizationSpec(0.01, NU)
    p = np.array([0.1, 0.5, 1.0])
    g = objective_gradient(p, np.eye(3), np.eye(3), q)
    coef = math.log2(2 * math.pi * math.e / 0.01**2)
    assert g == pytest.approx(0.5 * (coef + 1 / (p * math.log(2))), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gradient_positive(seed):
    _, prob = _problem(10, seed)
    p = np.random.default_rng(seed).uniform(NU, 1, 10)
    assert prob.q.delta**2 < 2 * math.pi * math.e
    assert np.all(objective_gradient(p, prob.C_bar, prob.L_r, prob.q) > 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.sampled_from([0.25, 0.5, 0.75]))
def test_objective_concave(seed, t):
    _, prob = _problem(12, seed)
    rng = np.random.default_rng(seed)
    p1, p2 = rng.uniform(NU, 1, 12), rng.uniform(NU, 1, 12)

    def f(p):
        return objective_lb(p, prob.C_bar, prob.L_r, prob.q)

    assert f(t * p1 + (1 - t) * p2) >= t * f(p1) + (1 - t) * f(p2) - 1e-9


# -- feasible-set primitives ------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 8), alpha=st.floats(0.05, 1.0))
def test_linear_oracle_matches_lp(seed, m, alpha):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=m)
    w = rng.uniform(0.01, 0.2, m)
    budget = alpha * w.sum()
    assume(NU * w.sum() <= budget)
    s = linear_oracle(g, w, budget, NU)
    assert np.all(s >= NU - 1e-15) and np.all(s <= 1 + 1e-15)
    assert w @ s <= budget + 1e-12
    lp = linprog(-g, A_ub=w[None, :], b_ub=[budget], bounds=[(NU, 1)] * m, method="highs")
    assert g @ s == pytest.approx(-lp.fun, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 12), alpha=st.floats(0.05, 1.0))
def test_projection_variational_inequality(seed, m, alpha):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.01, 0.2, m)
    budget = alpha * w.sum()
    assume(NU * w.sum() <= budget)
    y = rng.normal(0.5, 1.0, m)
    x = project(y, w, budget, NU)
    assert np.all(x >= NU) and np.all(x <= 1)
    assert w @ x <= budget + 1e-12
    # x is the projection iff (y - x).(z - x) <= 0 for every feasible z
    for _ in range(30):
        z = project(rng.uniform(NU, 1, m), w, budget, NU)
        assert (y - x) @ (z - x) <= 1e-10


# -- solver ---------------------------------------------------------------------------


def test_full_budget_gives_all_ones():
    fld, prob = _problem(12, 2)
    sol = solve_relaxed(prob, make_constraint("count", fld.gamma, 1.0))
    assert sol.converged
    assert np.allclose(sol.p, 1.0)


@pytest.mark.parametrize("method", ["projected-gradient", "frank-wolfe"])
def test_solver_ascends(method):
    fld, prob = _problem(15, 4)
    sol = solve_relaxed(prob, make_constraint("sum_power", fld.gamma, 0.5),
                        SolverConfig(method=method, max_iters=300))
    h = np.array(sol.history)
    assert np.all(np.diff(h) >= 0)
    assert np.all(sol.p >= NU) and np.all(sol.p <= 1)
    assert fld.gamma @ sol.p <= 0.5 * fld.gamma.sum() + 1e-9
    if sol.converged:
        assert sol.duality_gap <= 1e-6


def _reference_optimum(prob, con):
    """Independent SLSQP solve, best of several starts."""
    w, b = con.weights, con.budget

    def neg(p):
        return -objective_lb(p, prob.C_bar, prob.L_r, prob.q)

    def neg_grad(p):
        return -objective_gradient(p, prob.C_bar, prob.L_r, prob.q)

    best = -np.inf
    rng = np.random.default_rng(0)
    for _ in range(4):
        x0 = project(rng.uniform(NU, 1, prob.M), w, b, NU)
        res = minimize(neg, x0, jac=neg_grad, method="SLSQP", bounds=[(NU, 1)] * prob.M,
                       constraints=[{"type": "ineq", "fun": lambda p: b - w @ p, "jac": lambda p: -w}],
                       options={"ftol": 1e-14, "maxiter": 1000})
        if w @ res.x <= b + 1e-9 and np.all(res.x >= NU - 1e-12):
            best = max(best, -res.fun)
    return best


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("kind", ["count", "sum_power"])
def test_gap_certifies_optimality(seed, kind):
    fld, prob = _problem(10, seed, placement_std=0.5)
    con = make_constraint(kind, fld.gamma, 0.5)
    sol = solve_relaxed(prob, con)
    assert sol.converged
    ref = _reference_optimum(prob, con)
    assert ref - sol.objective <= sol.duality_gap + 1e-8
    assert sol.objective <= ref + 1e-6


def test_infeasible_constraint():
    fld, prob = _problem(5, 0)
    con = make_constraint("count", fld.gamma, 0.0001)
    with pytest.raises(ParameterError):
        solve_relaxed(prob, con)


def test_max_power_not_for_solver():
    fld, prob = _problem(5, 0)
    with pytest.raises(ParameterError):
        solve_relaxed(prob, make_constraint("max_power", fld.gamma, cap=0.1))


# -- rounding ------------------------------------------------------------------------


def _fake(p):
    return RelaxedSolution(p=np.asarray(p, float), objective=0.0, iterations=0, converged=True, duality_gap=0.0)


def test_round_top_k():
    fld, prob = _problem(6, 1)
    con = make_constraint("count", fld.gamma, 0.5)
    res = round_selection(_fake([0.1, 0.9, 0.3, 0.8, 0.7, 0.2]), con, prob)
    assert res.b.tolist() == [0, 1, 0, 1, 1, 0]
    assert res.active_count == 3


def test_round_tie_rule():
    gamma = np.array([0.2, 0.05, 0.1, 0.05])
    prob = prepare_problem(np.eye(4), NU)
    con = make_constraint("count", gamma, 0.5)
    res = round_selection(_fake([0.5, 0.5, 0.5, 0.5]), con, prob)
    # equal p: smaller gamma first, then smaller index
    assert res.b.tolist() == [0, 1, 0, 1]


def test_round_skips_expensive_and_continues():
    gamma = np.array([0.1, 0.15, 0.05, 0.2])
    prob = prepare_problem(np.eye(4), NU)
    con = make_constraint("sum_power", gamma, 0.4)  # budget 0.2
    res = round_selection(_fake([0.9, 0.8, 0.7, 0.6]), con, prob)
    assert res.b.tolist() == [1, 0, 1, 0]
    assert res.mu == pytest.approx(0.15 / 0.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.05, 1.0), kind=st.sampled_from(["count", "sum_power"]))
def test_rounded_selection_feasible(seed, alpha, kind):
    rng = np.random.default_rng(seed)
    gamma = rng.uniform(0.01, 0.2, 12)
    con = make_constraint(kind, gamma, alpha)
    prob = prepare_problem(np.eye(12), NU)
    res = round_selection(_fake(rng.uniform(NU, 1, 12)), con, prob)
    assert con.is_feasible(res.b)
    assert 0 <= res.mu <= 1
    if kind == "sum_power":
        assert gamma @ res.b <= con.budget + 1e-12


def test_empty_selection_is_flagged():
    gamma = np.array([0.5, 0.6])
    prob = prepare_problem(np.eye(2), NU)
    con = make_constraint("sum_power", gamma, 0.3)  # budget 0.33 < every gamma
    res = round_selection(_fake([0.5, 0.5]), con, prob)
    assert res.empty and res.active_count == 0 and res.epsilon == 1.0


# -- exhaustive and baselines ---------------------------------------------------------


def test_exhaustive_identical_pair():
    prob = prepare_problem(np.ones((2, 2)), NU)
    con = make_constraint("count", np.array([0.1, 0.1]), 0.5)
    res = exhaustive_select(prob, con)
    assert res.b.tolist() == [1, 0]


def test_exhaustive_refuses_large():
    fld, prob = _problem(16, 0)
    with pytest.raises(ParameterError):
        exhaustive_select(prob, make_constraint("count", fld.gamma, 0.5))


def test_exhaustive_matches_brute_force():
    fld, prob = _problem(6, 9)
    con = make_constraint("sum_power", fld.gamma, 0.5)
    best = max(
        (selected_entropy_lb(prob.C, np.array(b), prob.q).H_tilde, b)
        for b in itertools.product([0, 1], repeat=6)
        if any(b) and fld.gamma @ np.array(b) <= con.budget
    )
    assert exhaustive_select(prob, con).report.H_tilde == pytest.approx(best[0])


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind", ["count", "sum_power"])
def test_exhaustive_dominates_rounded(seed, kind):
    fld, prob = _problem(10, seed)
    con = make_constraint(kind, fld.gamma, 0.5)
    got = optimize_selection(prob, con)
    assert exhaustive_select(prob, con).report.H_tilde >= got.report.H_tilde - 1e-9


def test_exhaustive_matches_integral_relaxation():
    # two far-apart clusters, each a strong and a weak sensor at the same spot:
    # the weak ones add no new direction, so the relaxation lands on a vertex
    f = SensorField([[0, 0], [0, 0], [100, 0], [100, 0]], [10.0, 1.0, 10.0, 1.0], [0.1] * 4)
    C = build_correlation(f, CorrelationModel(3.08), distance_matrix(f))
    prob = prepare_problem(C, NU)
    con = make_constraint("count", f.gamma, (2 + 2 * NU) / 4)
    sol = solve_relaxed(prob, con)
    assert sol.converged
    assert np.allclose(sol.p, [1, NU, 1, NU], atol=1e-6)
    rounded = round_selection(sol, con, prob)
    best = exhaustive_select(prob, con)
    assert rounded.b.tolist() == best.b.tolist() == [1, 0, 1, 0]
    assert rounded.report.H_tilde == best.report.H_tilde


def test_random_selection_feasible_and_deterministic():
    gamma = np.random.default_rng(0).uniform(0.01, 0.2, 30)
    con = make_constraint("sum_power", gamma, 0.3)
    a = random_selection(con, 42)
    assert np.array_equal(a, random_selection(con, 42))
    assert gamma @ a <= con.budget
    for s in range(50):
        assert con.is_feasible(random_selection(con, s))


def test_random_loses_more_than_optimized():
    eps_opt, eps_rnd = [], []
    for t in range(200):
        fld, prob = _problem(50, 1000 + t)
        con = make_constraint("sum_power", fld.gamma, 0.5)
        eps_opt.append(optimize_selection(prob, con).epsilon)
        eps_rnd.append(evaluate_selection(random_selection(con, t), con, prob).epsilon)
    assert np.mean(eps_rnd) >= np.mean(eps_opt)


def test_threshold_max_power():
    gamma = np.array([0.05, 0.1, 0.2])
    assert threshold_select_max_power(gamma, 0.3).tolist() == [1, 1, 1]
    assert threshold_select_max_power(gamma, 0.01).tolist() == [0, 0, 0]
    assert threshold_select_max_power(gamma, 0.1).tolist() == [1, 1, 0]
    con = make_constraint("max_power", gamma, cap=0.1)
    assert con.is_feasible([1, 1, 0]) and not con.is_feasible([0, 0, 1])
