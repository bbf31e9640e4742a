"""Command-line entry point: ``entrosense <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import corrmodel, entropy, harness, scenario, selector
from .errors import EntrosenseError, FieldFormatError

log = logging.getLogger("entrosense")


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_field_args(p, m_required=False):
    p.add_argument("--m", type=int, required=m_required)
    p.add_argument("--placement-std", type=float, default=scenario.DEFAULT_PLACEMENT_STD)
    p.add_argument("--sigma", type=float, default=scenario.DEFAULT_SIGMA)
    p.add_argument("--gamma-low", type=float, default=scenario.DEFAULT_GAMMA_RANGE[0])
    p.add_argument("--gamma-high", type=float, default=scenario.DEFAULT_GAMMA_RANGE[1])
    p.add_argument("--seed", type=int, default=0)


def _add_model_args(p):
    p.add_argument("--scenario", help="load the field from a scenario file instead of generating it")
    p.add_argument("--theta", type=float, default=3.08)
    p.add_argument("--nu", type=float, default=entropy.DEFAULT_NU)
    p.add_argument("--rel-tol", type=float, default=1e-8)


def _field_from_args(args):
    if getattr(args, "scenario", None):
        return scenario.load_field(args.scenario)
    if args.m is None:
        raise FieldFormatError("missing required field: m (pass --m or --scenario)")
    return scenario.generate_field(args.m, args.placement_std, args.sigma,
                                   (args.gamma_low, args.gamma_high), args.seed)


def cmd_generate(args):
    fld = _field_from_args(args)
    _emit(scenario.field_to_json(fld), args.out)
    return 0


def _problem(args, fld, rel_std=0.0):
    model = corrmodel.CorrelationModel(args.theta)
    D = scenario.distance_matrix(fld)
    C = corrmodel.build_correlation(fld, model, D)
    truth = selector.prepare_problem(C, args.nu, rel_tol=args.rel_tol)
    if rel_std > 0:
        D_hat = scenario.perturb_distances(D, rel_std, np.random.SeedSequence([args.seed, 1]))
        C_hat = corrmodel.psd_project(corrmodel.build_correlation(fld, model, D_hat))
        return truth, selector.prepare_problem(C_hat, args.nu, rel_tol=args.rel_tol)
    return truth, truth


def cmd_entropy(args):
    fld = _field_from_args(args)
    truth, _ = _problem(args, fld)
    rep = truth.full
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "rank", "delta", "h", "H_lb"])
    w.writerow([fld.M, rep.rank_used, repr(rep.delta), repr(rep.h), repr(rep.H_tilde)])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_select(args):
    fld = _field_from_args(args)
    truth, believed = _problem(args, fld, args.rel_std)
    kind = args.constraint.replace("-", "_")
    if kind == "max_power":
        if args.cap is None:
            raise FieldFormatError("missing required field: cap (needed for --constraint max-power)")
        con = selector.make_constraint(kind, fld.gamma, cap=args.cap)
        b = selector.threshold_select_max_power(fld.gamma, args.cap)
        res = selector.evaluate_selection(b, con, truth)
        p = b.astype(float)
    else:
        con = selector.make_constraint(kind, fld.gamma, args.alpha)
        sol = selector.solve_relaxed(believed, con, selector.SolverConfig(tol=args.solver_tol))
        res = selector.round_selection(sol, con, truth)
        p = sol.p
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "x", "y", "gamma", "p", "b"])
    for i in range(fld.M):
        x, y = fld.positions[i]
        w.writerow([i, repr(float(x)), repr(float(y)), repr(float(fld.gamma[i])), repr(float(p[i])), int(res.b[i])])
    _emit(buf.getvalue(), args.out)
    print(f"active={res.active_count} mu={res.mu:.6f} epsilon={res.epsilon:.6f} "
          f"H_full={truth.full.H_tilde:.6f}", file=sys.stderr)
    return 0


def _config(args, required):
    cfg = harness.ExperimentConfig.from_file(args.config) if args.config else harness.ExperimentConfig()
    overrides = {
        "m": args.m, "ms": args.ms, "alpha": args.alpha, "alphas": args.alphas,
        "trials": args.trials, "seed": args.seed, "rel_stds": args.rel_stds,
        "placement_std": args.placement_std, "theta": args.theta,
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    try:
        return cfg.validate(required)
    except FieldFormatError as exc:
        if not args.config:
            raise FieldFormatError(f"{exc} (no --config given)") from exc
        raise


def _write_sweep(args, rows, records, key):
    _emit(harness.sweep_csv(rows, key), args.out)
    if args.trials_out:
        Path(args.trials_out).write_text(harness.trials_csv(records, key))
    if args.svg:
        series = {}
        for r_std in sorted({r.rel_std for r in rows}):
            sub = [r for r in rows if r.rel_std == r_std]
            tag = "" if r_std == 0 else f" noise {r_std:g}"
            series[f"count{tag}"] = [r.eps_count_mean for r in sub]
            series[f"sum-power{tag}"] = [r.eps_power_mean for r in sub]
            if r_std == 0:
                series["random"] = [r.eps_random_mean for r in sub]
            x = [r.mu_power_mean if key == "alpha" else r.value for r in sub]
        harness.write_svg(args.svg, x, series, xlabel="consumed power mu" if key == "alpha" else "M",
                          ylabel="relative entropy loss")


def cmd_sweep_power(args):
    cfg = _config(args, ("m", "alphas"))
    rows, records = harness.run_power_sweep(cfg, return_trials=True)
    _write_sweep(args, rows, records, "alpha")
    return 0


def cmd_sweep_m(args):
    cfg = _config(args, ("ms", "alpha"))
    rows, records = harness.run_m_sweep(cfg, return_trials=True)
    _write_sweep(args, rows, records, "m")
    return 0


def cmd_validate_bound(args):
    grid = harness.default_bound_grid(args.points, args.min, args.max)
    rows = harness.run_bound_validation(grid)
    _emit(harness.bound_csv(rows), args.out)
    if args.svg:
        harness.write_svg(args.svg, [r[0] for r in rows], {"H": [r[1] for r in rows], "H_lb": [r[2] for r in rows]},
                          xlabel="delta/sigma", ylabel="bits", logx=True)
    return 0


def cmd_oracle_compare(args):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "constraint", "H_solver", "H_exhaustive", "ratio", "duality_gap", "converged"])
    for t in range(args.trials):
        fld = scenario.generate_field(args.m, args.placement_std, args.sigma,
                                      (args.gamma_low, args.gamma_high), seed=args.seed + t)
        truth, _ = _problem(args, fld)
        for kind in ("count", "sum_power"):
            con = selector.make_constraint(kind, fld.gamma, args.alpha)
            sol = selector.solve_relaxed(truth, con)
            got = selector.round_selection(sol, con, truth)
            best = selector.exhaustive_select(truth, con)
            h_got = got.report.H_tilde if got.report else 0.0
            h_best = best.report.H_tilde if best.report else 0.0
            w.writerow([t, kind, repr(h_got), repr(h_best), repr(h_got / h_best),
                        repr(sol.duality_gap), int(sol.converged)])
    _emit(buf.getvalue(), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="entrosense", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random sensor field")
    _add_field_args(p, m_required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("entropy", help="entropy bound of a whole field")
    _add_field_args(p)
    _add_model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("select", help="choose active sensors for one field")
    _add_field_args(p)
    _add_model_args(p)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--constraint", choices=["count", "sum-power", "max-power"], default="sum-power")
    p.add_argument("--cap", type=float, help="per-sensor power cap for max-power")
    p.add_argument("--rel-std", type=float, default=0.0, help="relative distance-noise std")
    p.add_argument("--solver-tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    for name, func, help_ in (("sweep-power", cmd_sweep_power, "loss vs consumed power"),
                              ("sweep-m", cmd_sweep_m, "loss vs number of sensors")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config")
        p.add_argument("--m", type=int)
        p.add_argument("--ms", type=_ints)
        p.add_argument("--alpha", type=float)
        p.add_argument("--alphas", type=_floats)
        p.add_argument("--rel-stds", type=_floats)
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--placement-std", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--out")
        p.add_argument("--svg")
        p.add_argument("--trials-out", help="per-trial CSV for auditing the aggregates")
        p.set_defaults(func=func)

    p = sub.add_parser("validate-bound", help="exact vs lower-bound entropy of one quantized Gaussian")
    p.add_argument("--points", type=int, default=31)
    p.add_argument("--min", type=float, default=1e-3)
    p.add_argument("--max", type=float, default=1.0)
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_validate_bound)

    p = sub.add_parser("oracle-compare", help="rounded solver vs exhaustive enumeration")
    _add_field_args(p)
    _add_model_args(p)
    p.set_defaults(m=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EntrosenseError, OSError) as exc:
        print(f"entrosense {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
