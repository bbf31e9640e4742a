"""Loss vs consumed power at M=50, with random baseline and distance noise.

    python3 scripts/fig2_power_sweep.py --trials 50 --out results/power
"""
import argparse
import time
from pathlib import Path

from entrosense import harness

p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
p.add_argument("--m", type=int, default=50)
p.add_argument("--trials", type=int, default=50)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--out", default="results/power")
args = p.parse_args()

cfg = harness.ExperimentConfig(m=args.m, alphas=[round(0.1 * k, 1) for k in range(1, 11)],
                               rel_stds=[0.0, 0.1], trials=args.trials, seed=args.seed)
t0 = time.perf_counter()
rows, recs = harness.run_power_sweep(cfg, return_trials=True)
out = Path(args.out)
out.parent.mkdir(parents=True, exist_ok=True)
out.with_suffix(".csv").write_text(harness.sweep_csv(rows, "alpha"))
out.with_name(out.name + "_trials.csv").write_text(harness.trials_csv(recs, "alpha"))

clean = [r for r in rows if r.rel_std == 0]
noisy = [r for r in rows if r.rel_std > 0]
harness.write_svg(out.with_suffix(".svg"), [r.mu_power_mean for r in clean], {
    "count": [r.eps_count_mean for r in clean],
    "sum-power": [r.eps_power_mean for r in clean],
    "random": [r.eps_random_mean for r in clean],
    "count noise 0.1": [r.eps_count_mean for r in noisy],
    "sum-power noise 0.1": [r.eps_power_mean for r in noisy],
}, title=f"M={args.m}", xlabel="consumed power mu", ylabel="relative entropy loss")

print(f"{'alpha':>5} {'mu(i)':>6} {'mu(ii)':>6} {'eps(i)':>7} {'eps(ii)':>7} {'random':>7}")
for r in clean:
    print(f"{r.value:5.1f} {r.mu_mean:6.3f} {r.mu_power_mean:6.3f} {r.eps_count_mean:7.4f} "
          f"{r.eps_power_mean:7.4f} {r.eps_random_mean:7.4f}")
print(f"{time.perf_counter() - t0:.1f}s, wrote {out.with_suffix('.csv')}")
