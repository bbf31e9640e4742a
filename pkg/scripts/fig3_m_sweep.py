"""Loss vs number of sensors at alpha=0.5, clean and with 10% distance noise."""
import argparse
import time
from pathlib import Path

from entrosense import harness

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--alpha", type=float, default=0.5)
p.add_argument("--trials", type=int, default=50)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--out", default="results/m_sweep")
args = p.parse_args()

cfg = harness.ExperimentConfig(ms=[10, 20, 30, 40, 50], alpha=args.alpha, rel_stds=[0.0, 0.1],
                               trials=args.trials, seed=args.seed)
t0 = time.perf_counter()
rows = harness.run_m_sweep(cfg)
out = Path(args.out)
out.parent.mkdir(parents=True, exist_ok=True)
out.with_suffix(".csv").write_text(harness.sweep_csv(rows, "m"))

series = {}
for r_std in (0.0, 0.1):
    sub = [r for r in rows if r.rel_std == r_std]
    tag = "" if r_std == 0 else " noise 0.1"
    series["count" + tag] = [r.eps_count_mean for r in sub]
    series["sum-power" + tag] = [r.eps_power_mean for r in sub]
harness.write_svg(out.with_suffix(".svg"), cfg.ms, series, title=f"alpha={args.alpha}",
                  xlabel="M", ylabel="relative entropy loss")

for r in rows:
    print(f"M={int(r.value):3d} noise={r.rel_std:.1f}  eps(i)={r.eps_count_mean:.4f}  eps(ii)={r.eps_power_mean:.4f}")
print(f"{time.perf_counter() - t0:.1f}s, wrote {out.with_suffix('.csv')}")
