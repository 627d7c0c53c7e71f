"""Most directions look Gaussian: a small dimension sweep.

Draws directions uniformly at each dimension, estimates the worst-case
deviation of conditional means (d1) and conditional second moments (d2) per
direction, and reports the fraction of directions exceeding thresholds set
above a Gaussian noise floor calibrated at identical budgets.  The fractions
fall toward the null level as the dimension grows.

Scaled down to run in about a minute; the full-size run lives in the
acceptance suite and the `projlab theorem` command.
"""

from projlab.experiments import ExperimentConfig, run_theorem_sweep

cfg = ExperimentConfig(
    family="product-uniform",
    d_list=[8, 32, 128],
    n_betas=20,
    n_samples=30_000,
    eps_list=[1.5, 2.5],
    seed=11,
    cal_n_betas=20,
    out_dir="demo_out",
)
verdict = run_theorem_sweep(cfg, progress=print)

print(f"\n{'d':>5} {'eps':>5} {'frac d1':>9} {'frac d2':>9}   (binomial SEs in parentheses)")
for family, d, eps, p1, p2, se1, se2, nb in verdict.rows:
    print(f"{d:5d} {eps:5.1f} {p1:9.2f} {p2:9.2f}   ({se1:.2f} / {se2:.2f})")
print("\nnull floors used (gaussian q95 at matched budgets):")
for (d, mode), (f1, f2) in sorted(verdict.floors.items()):
    if mode == "grid":
        print(f"  d={d:4d}: d1 floor {f1:.4f}, d2 floor {f2:.4f}")
print("\nCSV outputs in demo_out/: theorem_sweep.csv, verdict.csv, null_floors.csv")
