"""Exact entropy of a quantized unit Gaussian vs its lower bound over a log grid of steps."""
import sys
from pathlib import Path

from entrosense import harness

out = Path(sys.argv[1] if len(sys.argv) > 1 else "results/bound")
out.parent.mkdir(parents=True, exist_ok=True)
rows = harness.run_bound_validation(harness.default_bound_grid(31, 1e-3, 1.0))
out.with_suffix(".csv").write_text(harness.bound_csv(rows))
harness.write_svg(out.with_suffix(".svg"), [r[0] for r in rows],
                  {"exact": [r[1] for r in rows], "lower bound": [r[2] for r in rows]},
                  xlabel="delta/sigma", ylabel="bits", logx=True)
for ratio, H, H_lb, err in rows[::5]:
    print(f"{ratio:9.2e}  H={H:8.4f}  H_lb={H_lb:8.4f}  rel_err={err:.2e}")
