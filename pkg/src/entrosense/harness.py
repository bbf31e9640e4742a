"""Monte Carlo sweeps reproducing the loss-vs-power, loss-vs-M and bound-tightness figures."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corrmodel, entropy, scenario, selector
from .errors import EntrosenseError, FieldFormatError

log = logging.getLogger(__name__)

THREADS_ENV = "ENTROSENSE_THREADS"
POWER_HEADER = [
    "alpha", "mu_mean", "eps_count_mean", "eps_count_se", "eps_power_mean", "eps_power_se",
    "eps_random_mean", "eps_random_se", "trials",
]
EXTRA_HEADER = ["mu_power_mean", "mu_random_mean", "rel_std", "failed"]
M_HEADER = ["m"] + POWER_HEADER[1:]
BOUND_HEADER = ["delta_over_sigma", "H", "H_lb", "rel_err"]
TRIAL_HEADER = [
    "sweep", "value", "rel_std", "trial", "eps_count", "eps_power", "eps_random",
    "mu_count", "mu_power", "mu_random", "gap_count", "gap_power",
]


@dataclass
class ExperimentConfig:
    m: int | None = None
    ms: list | None = None
    alpha: float | None = None
    alphas: list | None = None
    placement_std: float = scenario.DEFAULT_PLACEMENT_STD
    sigma: float = scenario.DEFAULT_SIGMA
    gamma_low: float = scenario.DEFAULT_GAMMA_RANGE[0]
    gamma_high: float = scenario.DEFAULT_GAMMA_RANGE[1]
    theta: float = 3.08
    nu: float = entropy.DEFAULT_NU
    rel_tol: float = 1e-8
    chol_tol: float = 1e-8
    rel_stds: list = field(default_factory=lambda: [0.0])
    trials: int = 50
    seed: int = 0
    solver_tol: float = 1e-6
    max_iters: int = 2000
    output: str | None = None

    def validate(self, required=()):
        missing = [name for name in required if getattr(self, name) in (None, [])]
        if missing:
            raise FieldFormatError(f"missing required field(s): {', '.join(missing)}")
        for name in ("ms", "alphas", "rel_stds"):
            val = getattr(self, name)
            if val is not None and len(val) == 0:
                raise FieldFormatError(f"'{name}' must be non-empty")
        if self.trials < 1:
            raise FieldFormatError("'trials' must be >= 1")
        for a in ([self.alpha] if self.alpha is not None else []) + list(self.alphas or []):
            if not 0 < a <= 1:
                raise FieldFormatError(f"alpha {a} outside (0, 1]")
        if any(r < 0 for r in self.rel_stds):
            raise FieldFormatError("'rel_stds' entries must be >= 0")
        return self

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FieldFormatError(exc.msg, path=path, line=exc.lineno) from exc
        return cls.from_dict(doc, path=path)

    @classmethod
    def from_dict(cls, doc, path=None) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise FieldFormatError(f"unknown field(s): {', '.join(unknown)}", path=path)
        return cls(**doc)

    def solver(self) -> selector.SolverConfig:
        return selector.SolverConfig(tol=self.solver_tol, max_iters=self.max_iters)


@dataclass(frozen=True)
class TrialRecord:
    value: float
    rel_std: float
    trial: int
    eps_count: float
    eps_power: float
    eps_random: float
    mu_count: float
    mu_power: float
    mu_random: float
    gap_count: float
    gap_power: float


@dataclass(frozen=True)
class SweepRow:
    value: float
    rel_std: float
    mu_mean: float
    eps_count_mean: float
    eps_count_se: float
    eps_power_mean: float
    eps_power_se: float
    eps_random_mean: float
    eps_random_se: float
    mu_power_mean: float
    mu_random_mean: float
    trials: int
    failed: int = 0


# -- per-trial work -------------------------------------------------------------


def _tag(x: float) -> int:
    return int(round(x * 1_000_000))


def trial_streams(seed: int, m: int, trial: int, alpha: float, rel_std: float):
    """Independent generators for (field, distance noise, random baseline).

    The field depends only on (seed, M, trial), so every alpha and noise level
    of a trial sees the same deployment.
    """
    base = [int(seed), int(m), int(trial)]
    field_seed = int(np.random.SeedSequence(base).generate_state(1, dtype=np.uint32)[0])
    noise_seed = np.random.SeedSequence(base + [1, _tag(rel_std)])
    random_seed = np.random.SeedSequence(base + [2, _tag(alpha)])
    return field_seed, noise_seed, random_seed


def run_trial(cfg: ExperimentConfig, m: int, alpha: float, rel_std: float, trial: int) -> TrialRecord:
    field_seed, noise_seed, random_seed = trial_streams(cfg.seed, m, trial, alpha, rel_std)
    fld = scenario.generate_field(m, cfg.placement_std, cfg.sigma, (cfg.gamma_low, cfg.gamma_high), field_seed)
    model = corrmodel.CorrelationModel(cfg.theta)
    D = scenario.distance_matrix(fld)
    C = corrmodel.build_correlation(fld, model, D)
    truth = selector.prepare_problem(C, cfg.nu, rel_tol=cfg.rel_tol, chol_tol=cfg.chol_tol)
    if rel_std > 0:
        D_hat = scenario.perturb_distances(D, rel_std, noise_seed)
        C_hat = corrmodel.psd_project(corrmodel.build_correlation(fld, model, D_hat))
        believed = selector.prepare_problem(C_hat, cfg.nu, rel_tol=cfg.rel_tol, chol_tol=cfg.chol_tol)
    else:
        believed = truth
    out = {}
    for kind, key in (("count", "count"), ("sum_power", "power")):
        con = selector.make_constraint(kind, fld.gamma, alpha)
        sol = selector.solve_relaxed(believed, con, cfg.solver())
        if not sol.converged:
            log.warning("M=%d alpha=%g trial %d %s: gap %.3g after %d iterations",
                        m, alpha, trial, kind, sol.duality_gap, sol.iterations)
        res = selector.round_selection(sol, con, truth)
        out[f"eps_{key}"], out[f"mu_{key}"], out[f"gap_{key}"] = res.epsilon, res.mu, sol.duality_gap
    con = selector.make_constraint("sum_power", fld.gamma, alpha)
    rnd = selector.evaluate_selection(selector.random_selection(con, random_seed), con, truth)
    return TrialRecord(value=float("nan"), rel_std=rel_std, trial=trial,
                       eps_random=rnd.epsilon, mu_random=rnd.mu, **out)


def _run_task(task):
    cfg, sweep, value, m, alpha, rel_std, trial = task
    try:
        rec = run_trial(cfg, m, alpha, rel_std, trial)
    except (EntrosenseError, np.linalg.LinAlgError) as exc:
        log.warning("%s=%g rel_std=%g trial %d failed: %s", sweep, value, rel_std, trial, exc)
        return (value, rel_std, trial, None)
    return (value, rel_std, trial, dataclasses.replace(rec, value=value))


def worker_count() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _execute(tasks):
    n = worker_count()
    if n > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * n))))
    else:
        results = [_run_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    return results


def _se(x):
    return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def aggregate(results) -> list[SweepRow]:
    rows = []
    keys = sorted({(v, r) for v, r, _, _ in results})
    for value, rel_std in keys:
        recs = [rec for v, r, _, rec in results if (v, r) == (value, rel_std) and rec is not None]
        failed = sum(1 for v, r, _, rec in results if (v, r) == (value, rel_std) and rec is None)
        if not recs:
            rows.append(SweepRow(value, rel_std, *([float("nan")] * 9), trials=0, failed=failed))
            continue
        col = {k: np.array([getattr(rec, k) for rec in recs]) for k in
               ("eps_count", "eps_power", "eps_random", "mu_count", "mu_power", "mu_random")}
        rows.append(SweepRow(
            value=value, rel_std=rel_std,
            mu_mean=float(col["mu_count"].mean()),
            eps_count_mean=float(col["eps_count"].mean()), eps_count_se=_se(col["eps_count"]),
            eps_power_mean=float(col["eps_power"].mean()), eps_power_se=_se(col["eps_power"]),
            eps_random_mean=float(col["eps_random"].mean()), eps_random_se=_se(col["eps_random"]),
            mu_power_mean=float(col["mu_power"].mean()), mu_random_mean=float(col["mu_random"].mean()),
            trials=len(recs), failed=failed,
        ))
    return rows


def run_power_sweep(cfg: ExperimentConfig, return_trials: bool = False):
    cfg.validate(required=("m", "alphas"))
    tasks = [(cfg, "alpha", float(a), cfg.m, float(a), float(r), t)
             for a in cfg.alphas for r in cfg.rel_stds for t in range(cfg.trials)]
    results = _execute(tasks)
    rows = aggregate(results)
    return (rows, [rec for *_, rec in results if rec is not None]) if return_trials else rows


def run_m_sweep(cfg: ExperimentConfig, return_trials: bool = False):
    cfg.validate(required=("ms", "alpha"))
    tasks = [(cfg, "m", int(m), int(m), float(cfg.alpha), float(r), t)
             for m in cfg.ms for r in cfg.rel_stds for t in range(cfg.trials)]
    results = _execute(tasks)
    rows = aggregate(results)
    return (rows, [rec for *_, rec in results if rec is not None]) if return_trials else rows


def default_bound_grid(n: int = 31, lo: float = 1e-3, hi: float = 1.0):
    return np.logspace(math.log10(lo), math.log10(hi), n)


def run_bound_validation(grid=None, sigma: float = 1.0):
    """Exact univariate quantized entropy against its Gaussian lower bound."""
    grid = default_bound_grid() if grid is None else np.asarray(grid, dtype=float)
    rows = []
    for ratio in grid:
        delta = float(ratio) * sigma
        H = entropy.univariate_quantized_entropy(sigma, delta)
        H_lb = entropy.univariate_entropy_lb(sigma, delta)
        rows.append((float(ratio), H, H_lb, abs(H - H_lb) / abs(H_lb)))
    return rows


# -- output ------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def sweep_csv(rows: list[SweepRow], key: str = "alpha") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((POWER_HEADER if key == "alpha" else M_HEADER) + EXTRA_HEADER)
    for r in rows:
        value = r.value if key == "alpha" else int(r.value)
        w.writerow([_fmt(v) for v in (
            value, r.mu_mean, r.eps_count_mean, r.eps_count_se, r.eps_power_mean, r.eps_power_se,
            r.eps_random_mean, r.eps_random_se, r.trials, r.mu_power_mean, r.mu_random_mean,
            r.rel_std, r.failed)])
    return buf.getvalue()


def trials_csv(records: list[TrialRecord], sweep: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_HEADER)
    for rec in records:
        w.writerow([sweep, _fmt(rec.value), _fmt(rec.rel_std), str(rec.trial)]
                   + [_fmt(getattr(rec, k)) for k in TRIAL_HEADER[4:]])
    return buf.getvalue()


def bound_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUND_HEADER)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_svg(path, x, series: dict, title="", xlabel="", ylabel="", logx=False, width=640, height=420):
    """Bare-bones SVG line chart; one polyline per series."""
    x = np.asarray(x, dtype=float)
    xs = np.log10(x) if logx else x
    ys_all = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    ys_all = ys_all[np.isfinite(ys_all)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(min(0.0, ys_all.min())), float(ys_all.max()) if ys_all.size else 1.0
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    ml, mr, mt, mb = 60, 150, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="15" y="{mt + ph / 2}" font-size="12" transform="rotate(-90 15 {mt + ph / 2})" '
        f'text-anchor="middle">{ylabel}</text>',
    ]
    for k in range(5):
        tx = x0 + k * (x1 - x0) / 4
        label = f"{10 ** tx:.3g}" if logx else f"{tx:.3g}"
        parts.append(f'<text x="{px(tx):.1f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{label}</text>')
        ty = y0 + k * (y1 - y0) / 4
        parts.append(f'<text x="{ml - 5}" y="{py(ty) + 3:.1f}" text-anchor="end" font-size="10">{ty:.3g}</text>')
    for i, (name, ys) in enumerate(series.items()):
        c = colors[i % len(colors)]
        ys = np.asarray(ys, dtype=float)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys) if np.isfinite(b))
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 15 * i + 10
        parts.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{c}"/>')
        parts.append(f'<text x="{ml + pw + 35}" y="{ly + 4}" font-size="11">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


# -- shape checks shared by tests and scripts ---------------------------------------


def _comb_se(a, b):
    return 2.0 * math.hypot(a, b)


def check_decreasing(values, ses, strict_overall=True):
    """Consecutive means never rise by more than 2 combined standard errors,
    and each step goes down unless both ends are already zero."""
    ok = True
    for k in range(len(values) - 1):
        a, b = values[k], values[k + 1]
        if b - a > _comb_se(ses[k], ses[k + 1]):
            ok = False
        if not (b < a or (a == 0 and b == 0)):
            ok = False
    if strict_overall and not values[-1] < values[0]:
        ok = False
    return ok


def matched_mu_comparison(rows: list[SweepRow]):
    """For each row, sum-power loss vs count loss interpolated at the same consumed power.

    Returns ``(mu, eps_power, eps_count_at_mu, tolerance)`` tuples for the
    points whose mu lies inside the range the count method covers.
    """
    mu_c = np.array([r.mu_mean for r in rows])
    eps_c = np.array([r.eps_count_mean for r in rows])
    se_c = np.array([r.eps_count_se for r in rows])
    order = np.argsort(mu_c)
    mu_c, eps_c, se_c = mu_c[order], eps_c[order], se_c[order]
    out = []
    for r in rows:
        mu = r.mu_power_mean
        if mu < mu_c[0] or mu > mu_c[-1]:
            continue
        e_c = float(np.interp(mu, mu_c, eps_c))
        s_c = float(np.interp(mu, mu_c, se_c))
        out.append((mu, r.eps_power_mean, e_c, _comb_se(r.eps_power_se, s_c)))
    return out
