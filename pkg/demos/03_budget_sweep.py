"""Budget sweep: how annotation quality grows with the human budget.

Compares random triage against uncertainty routing and the bi-weighted
method across budgets, averaged over a few seeds.  Writes summary.csv
(and a PNG plot when matplotlib is importable) into ./sweep_out.
"""

import os

import numpy as np

from annotriage import ExperimentConfig, sweep_budgets, synth_gaussian
from annotriage.harness import write_summary_csv

OUT = os.path.join(os.path.dirname(__file__), "sweep_out")
METHODS = ["random", "maxent", "sant"]
FRACTIONS = [0.1, 0.3, 0.5, 0.7, 0.9]
SEEDS = [0, 1, 2]

dataset = synth_gaussian(n=800, hard_frac=0.2, seed=5)
all_reports = []
curves = {}
for method in METHODS:
    base = ExperimentConfig(method=method, warmup_count=40, seed=0)
    reports = sweep_budgets(base, FRACTIONS, dataset, seeds=SEEDS)
    all_reports.extend(reports)
    curves[method] = [
        np.mean([r.quality_overall for r in reports if r.budget_fraction == f])
        for f in FRACTIONS
    ]

os.makedirs(OUT, exist_ok=True)
write_summary_csv(all_reports, os.path.join(OUT, "summary.csv"))

print(f"{'budget':>8s} " + " ".join(f"{m:>8s}" for m in METHODS))
for i, f in enumerate(FRACTIONS):
    row = " ".join(f"{curves[m][i]:8.4f}" for m in METHODS)
    print(f"{f:8.0%} {row}")
print(f"\nwrote {os.path.join(OUT, 'summary.csv')}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for method in METHODS:
        plt.plot([100 * f for f in FRACTIONS], curves[method], marker="o", label=method)
    plt.xlabel("human budget (% of items)")
    plt.ylabel("overall annotation quality")
    plt.legend()
    plt.grid(alpha=0.3)
    path = os.path.join(OUT, "sweep.png")
    plt.savefig(path, dpi=120, bbox_inches="tight")
    print(f"wrote {path}")
except ImportError:
    print("matplotlib not available; skipped the plot")
