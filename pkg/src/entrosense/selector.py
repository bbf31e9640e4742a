"""Relaxed entropy maximization, rounding and baseline selectors.

The binary problem "pick the sensors that keep the most quantized entropy
under a power-related budget" is relaxed to weights p in [nu, 1] with a
concave lower bound as objective::

    f(p) = 1/2 * ( tr(diag(p) C_bar) * log2(2 pi e / delta^2)
                   + log2 det(L_r^T diag(p) L_r) )

where C_bar = C / ||C||_2 and C = L_r L_r^T. The feasible set is the box
intersected with one knapsack row ``w . p <= budget``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import (
    DEFAULT_NU,
    EntropyReport,
    QuantizationSpec,
    choose_delta,
    relative_entropy_loss,
    selected_entropy_lb,
)
from .errors import DomainError, ParameterError
from .speclinalg import (
    DEFAULT_CHOL_TOL,
    DEFAULT_REL_TOL,
    SpectralData,
    logdet_gram,
    reduced_factor,
)

log = logging.getLogger(__name__)

CONSTRAINT_KINDS = ("count", "sum_power", "max_power")
FEAS_SLACK = 1e-9
TIE_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    kind: str
    alpha: float
    weights: np.ndarray
    budget: float
    gamma: np.ndarray  # power draws; drive tie-breaks and the consumed-power ratio

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ParameterError(f"unknown constraint kind {self.kind!r}")
        if not self.budget > 0:
            raise ParameterError(f"budget must be > 0, got {self.budget}")
        if len(self.weights) != len(self.gamma):
            raise ParameterError("weights and gamma lengths differ")

    @property
    def M(self) -> int:
        return len(self.gamma)

    def is_feasible(self, b) -> bool:
        b = np.asarray(b, dtype=float)
        if self.kind == "max_power":
            return bool(np.all(self.gamma[b > 0] <= self.budget))
        return float(self.weights @ b) <= self.budget + FEAS_SLACK


def make_constraint(kind: str, gamma, alpha: float = 1.0, cap: float | None = None) -> ConstraintSpec:
    """Budget ``alpha * sum(weights)``; weights are ones for ``count`` and gamma for ``sum_power``.

    ``max_power`` takes an absolute per-sensor ``cap`` instead of ``alpha``.
    """
    kind = kind.replace("-", "_")
    gamma = np.asarray(gamma, dtype=float)
    if kind == "max_power":
        if cap is None:
            raise ParameterError("max_power needs a cap")
        return ConstraintSpec(kind, float("nan"), gamma.copy(), float(cap), gamma)
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    if kind == "count":
        weights = np.ones_like(gamma)
    elif kind == "sum_power":
        weights = gamma.copy()
    else:
        raise ParameterError(f"unknown constraint kind {kind!r}")
    return ConstraintSpec(kind, float(alpha), weights, float(alpha * weights.sum()), gamma)


@dataclass(frozen=True, eq=False)
class SelectionProblem:
    """Everything the solver and the evaluators share for one correlation matrix.

    ``C`` is the exactly rank-r approximation of the input matrix; entropies of
    subsets are evaluated on it so that every selection has rank <= r.
    """

    C: np.ndarray
    spec: SpectralData
    L_r: np.ndarray
    C_bar: np.ndarray
    q: QuantizationSpec
    rel_tol: float
    full: EntropyReport

    @property
    def M(self) -> int:
        return self.C.shape[0]


def prepare_problem(C, nu: float = DEFAULT_NU, q: QuantizationSpec | None = None,
                    rel_tol: float = DEFAULT_REL_TOL, chol_tol: float = DEFAULT_CHOL_TOL) -> SelectionProblem:
    spec, C_sing, chol = reduced_factor(C, rel_tol=rel_tol, chol_tol=chol_tol)
    if q is None:
        q = choose_delta(spec, nu)
    return SelectionProblem(
        C=C_sing,
        spec=spec,
        L_r=chol.L_r,
        C_bar=C_sing / spec.lambda_max,
        q=q,
        rel_tol=rel_tol,
        full=EntropyReport.from_spectrum(spec, q),
    )


def _rank_coef(q: QuantizationSpec) -> float:
    return math.log2(2 * math.pi * math.e / q.delta**2)


def objective_lb(p, C_bar, L_r, q: QuantizationSpec) -> float:
    p = np.asarray(p, dtype=float)
    value, _ = logdet_gram(L_r, p)
    return 0.5 * (float(np.diag(C_bar) @ p) * _rank_coef(q) + value)


def objective_gradient(p, C_bar, L_r, q: QuantizationSpec) -> np.ndarray:
    return _value_and_grad(np.asarray(p, dtype=float), np.diag(C_bar), L_r, _rank_coef(q))[1]


def _value_and_grad(p, cbar_diag, L_r, coef):
    value, grad = logdet_gram(L_r, p)
    return 0.5 * (float(cbar_diag @ p) * coef + value), 0.5 * (cbar_diag * coef + grad)


# -- feasible set {nu <= p <= 1, w . p <= budget} ----------------------------------


def linear_oracle(g, weights, budget, nu, gamma=None):
    """Maximize ``g . s`` over the feasible set (fractional knapsack).

    Items are filled in decreasing gain/weight order; ties go to the smaller
    gamma, then the smaller index.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(weights, dtype=float)
    m = g.size
    s = np.full(m, nu)
    free = w == 0
    s[free & (g > 0)] = 1.0
    remaining = budget - nu * w.sum()
    tie = np.zeros(m) if gamma is None else np.asarray(gamma, dtype=float)
    ratio = np.where(free, np.inf, g / np.where(free, 1.0, w))
    for i in np.lexsort((np.arange(m), tie, -ratio)):
        if free[i] or g[i] <= 0 or remaining <= 0:
            continue
        take = min(1.0 - nu, remaining / w[i])
        s[i] += take
        remaining -= take * w[i]
    return s


def project(y, weights, budget, nu):
    """Euclidean projection onto the feasible set.

    ``clip(y - lam * w, nu, 1)`` is piecewise linear in ``lam``; the
    multiplier is found exactly between consecutive breakpoints.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    x = np.clip(y, nu, 1.0)
    if w @ x <= budget:
        return x
    pos = w > 0
    bps = np.concatenate([(y[pos] - 1.0) / w[pos], (y[pos] - nu) / w[pos]])
    bps = np.unique(bps[bps > 0])
    vals = (np.clip(y[None, :] - bps[:, None] * w[None, :], nu, 1.0) * w).sum(axis=1)
    k = int(np.searchsorted(-vals, -budget))  # first breakpoint with value <= budget
    lo = 0.0 if k == 0 else bps[k - 1]
    f_lo = w @ np.clip(y - lo * w, nu, 1.0)
    hi, f_hi = bps[k], vals[k]
    lam = hi if f_lo == f_hi else lo + (f_lo - budget) * (hi - lo) / (f_lo - f_hi)
    x = np.clip(y - lam * w, nu, 1.0)
    over = w @ x - budget
    if over > 0:
        # rounding overshoot; shave it off the free coordinates
        movable = pos & (x > nu)
        x[movable] -= over / (w[movable] @ w[movable]) * w[movable]
        x = np.clip(x, nu, 1.0)
    return x


# -- solver ------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iters: int = 2000
    method: str = "projected-gradient"  # or "frank-wolfe"
    armijo: float = 1e-4


@dataclass(frozen=True, eq=False)
class RelaxedSolution:
    p: np.ndarray
    objective: float
    iterations: int
    converged: bool
    duality_gap: float
    history: tuple = field(default=(), repr=False)


def solve_relaxed(problem: SelectionProblem, constraint: ConstraintSpec,
                  cfg: SolverConfig = SolverConfig()) -> RelaxedSolution:
    """Maximize the relaxed bound over the box-knapsack polytope.

    Both methods are monotone ascent methods and stop on the Frank-Wolfe gap
    ``max_s g.(s - p)``, an upper bound on the distance to the optimum.
    """
    if constraint.kind == "max_power":
        raise ParameterError("max_power has a closed-form answer; use threshold_select_max_power")
    nu = problem.q.nu
    w, budget = constraint.weights, constraint.budget
    if nu * w.sum() > budget + FEAS_SLACK:
        raise ParameterError(f"infeasible: nu * sum(w) = {nu * w.sum():.4g} > budget {budget:.4g}")
    cdiag = np.diag(problem.C_bar).copy()
    coef = _rank_coef(problem.q)
    L_r = problem.L_r

    def fg(p):
        return _value_and_grad(p, cdiag, L_r, coef)

    def gap_of(p, g):
        s = linear_oracle(g, w, budget, nu, constraint.gamma)
        return float(g @ (s - p)), s

    p = project(np.full(problem.M, min(1.0, budget / w.sum()) if w.sum() > 0 else 1.0), w, budget, nu)
    val, g = fg(p)
    history = [val]
    gap, s = gap_of(p, g)
    step = 1.0 / max(np.abs(g).max(), 1e-12)
    it = 0
    while gap > cfg.tol and it < cfg.max_iters:
        it += 1
        if cfg.method == "frank-wolfe":
            p_new, val_new, g_new = _fw_step(p, s - p, val, fg)
        else:
            p_new, val_new, g_new, step = _pg_step(p, val, g, step, w, budget, nu, fg, cfg.armijo)
        if p_new is None:
            log.debug("line search stalled at iteration %d, gap %.3g", it, gap)
            break
        p, val, g = p_new, val_new, g_new
        history.append(val)
        gap, s = gap_of(p, g)
    return RelaxedSolution(
        p=p, objective=val, iterations=it, converged=gap <= cfg.tol,
        duality_gap=gap, history=tuple(history),
    )


def _pg_step(p, val, g, step, w, budget, nu, fg, c):
    for _ in range(60):
        q = project(p + step * g, w, budget, nu)
        d = q - p
        if not np.any(d):
            return None, None, None, step
        vq, gq = fg(q)
        if vq >= val + c * (g @ d):
            break
        step *= 0.5
    else:
        return None, None, None, step
    # Barzilai-Borwein step for the next iteration
    yd = gq - g
    curv = -(d @ yd)
    step = (d @ d) / curv if curv > 1e-300 else step * 4.0
    return q, vq, gq, float(np.clip(step, 1e-12, 1e12))


def _fw_step(p, d, val, fg):
    # exact line search on the concave restriction via bisection on its slope
    _, g1 = fg(p + d)
    if g1 @ d >= 0:
        t = 1.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if fg(p + mid * d)[1] @ d > 0:
                lo = mid
            else:
                hi = mid
        t = lo
    if t == 0.0:
        return None, None, None
    q = p + t * d
    vq, gq = fg(q)
    if vq < val:
        return None, None, None
    return q, vq, gq


# -- rounding and baselines ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SelectionResult:
    b: np.ndarray
    mu: float
    epsilon: float
    active_count: int
    relaxed: RelaxedSolution | None
    report: EntropyReport | None
    empty: bool = False


def consumed_power_ratio(b, gamma) -> float:
    gamma = np.asarray(gamma, dtype=float)
    return float(gamma @ np.asarray(b, dtype=float) / gamma.sum())


def _greedy_fill(order, constraint: ConstraintSpec) -> np.ndarray:
    b = np.zeros(constraint.M, dtype=int)
    if constraint.kind == "max_power":
        for i in order:
            b[i] = int(constraint.gamma[i] <= constraint.budget)
        return b
    used = 0.0
    for i in order:
        wi = constraint.weights[i]
        if used + wi <= constraint.budget + FEAS_SLACK:
            b[i] = 1
            used += wi
    return b


def evaluate_selection(b, constraint: ConstraintSpec, problem: SelectionProblem,
                       relaxed: RelaxedSolution | None = None) -> SelectionResult:
    b = np.asarray(b, dtype=int)
    mu = consumed_power_ratio(b, constraint.gamma)
    if not b.any():
        return SelectionResult(b, mu, 1.0, 0, relaxed, None, empty=True)
    if b.all():
        rep = problem.full  # same matrix; skip a re-solve that only adds roundoff
    else:
        rep = selected_entropy_lb(problem.C, b, problem.q, problem.rel_tol)
    eps = relative_entropy_loss(problem.full, rep)
    return SelectionResult(b, mu, eps, int(b.sum()), relaxed, rep)


def rounding_order(p, gamma) -> np.ndarray:
    """Largest p first; ties (to 1e-9) go to smaller gamma, then smaller index."""
    key = np.round(np.asarray(p, dtype=float), TIE_DECIMALS)
    return np.lexsort((np.arange(key.size), np.asarray(gamma, dtype=float), -key))


def round_selection(sol: RelaxedSolution, constraint: ConstraintSpec,
                    problem: SelectionProblem) -> SelectionResult:
    """Switch on sensors by decreasing relaxed weight while the budget allows.

    A sensor that would overrun the remaining budget is skipped and the walk
    continues down the list.
    """
    b = _greedy_fill(rounding_order(sol.p, constraint.gamma), constraint)
    return evaluate_selection(b, constraint, problem, sol)


def optimize_selection(problem: SelectionProblem, constraint: ConstraintSpec,
                       cfg: SolverConfig = SolverConfig()) -> SelectionResult:
    sol = solve_relaxed(problem, constraint, cfg)
    if not sol.converged:
        log.warning("solver stopped after %d iterations with gap %.3g", sol.iterations, sol.duality_gap)
    return round_selection(sol, constraint, problem)


def exhaustive_select(problem: SelectionProblem, constraint: ConstraintSpec, max_m: int = 15) -> SelectionResult:
    """Best feasible mask by enumeration.

    Ties on the entropy bound go to fewer active sensors, then to the
    lexicographically smallest index set.
    """
    m = problem.M
    if m > max_m:
        raise ParameterError(f"refusing to enumerate 2^{m} masks (max_m={max_m})")
    best_key, best_b = None, None
    for k in range(1, m + 1):
        for idx in itertools.combinations(range(m), k):
            b = np.zeros(m, dtype=int)
            b[list(idx)] = 1
            if not constraint.is_feasible(b):
                continue
            H = selected_entropy_lb(problem.C, b, problem.q, problem.rel_tol).H_tilde
            # combinations() yields in (size, lexicographic) order, so strict > keeps the tie rule
            if best_key is None or H > best_key:
                best_key, best_b = H, b
    if best_b is None:
        best_b = np.zeros(m, dtype=int)
    return evaluate_selection(best_b, constraint, problem)


def random_selection(constraint: ConstraintSpec, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _greedy_fill(rng.permutation(constraint.M), constraint)


def threshold_select_max_power(gamma, cap: float) -> np.ndarray:
    return (np.asarray(gamma, dtype=float) <= cap).astype(int)
