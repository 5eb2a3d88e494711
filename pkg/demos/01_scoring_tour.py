"""A tour of the triage scores on a handful of points.

Walks through the three ingredients the engine combines for each incoming
item: the active-learning score, the error-triage score, and the fused
(bi-weighted) score with its time-dependent exponent.
"""

import numpy as np

from annotriage import (
    AnnotatorModel,
    EatConfig,
    EatNetwork,
    ModelConfig,
    TaskKind,
    TaskSpec,
    al_exponent,
    bi_weight,
    calibrate,
    entropy,
)
from annotriage.al import batch_grad_norm, batch_max_entropy, rank_normalize
from annotriage.eat import build_eat_input, eat_input_dim

rng = np.random.default_rng(0)
task = TaskSpec(TaskKind.BINARY, 2, 4)
model = AnnotatorModel(task, ModelConfig(seed=1))

# a tiny "batch": two confident-looking points and two ambiguous ones
batch = np.array(
    [
        [3.0, 0.1, 0.0, 0.2],
        [-3.0, -0.2, 0.1, 0.0],
        [0.1, 0.05, -0.1, 0.0],
        [0.0, -0.1, 0.05, 0.1],
    ]
)
ids = ["doc-a", "doc-b", "doc-c", "doc-d"]

print("predictive distributions:")
probs = model.predict(batch)
for i, p in zip(ids, probs):
    print(f"  {i}: {np.round(p, 3)}  entropy={entropy(p):.3f}")

print("\nuncertainty scores (normalized entropy), raw vs temperature 1.5:")
raw, _ = batch_max_entropy(model, batch)
cal, _ = batch_max_entropy(model, batch, temperature=1.5)
for i, r, c in zip(ids, raw, cal):
    print(f"  {i}: raw={r:.3f} calibrated={c:.3f}")
print("  (calibration smooths the distribution but never reorders items)")

print("\nexpected gradient-norm scores (unnormalized, consumed rank-wise):")
gn = batch_grad_norm(model, batch, "ent")
gn01 = rank_normalize(gn, saturate_top_half=True)
for i, g, g01 in zip(ids, gn, gn01):
    print(f"  {i}: raw={g:.4f} rank-mapped={g01:.3f}")

print("\nerror-triage scores from a fresh estimator (neutral at 0.5):")
eat_cfg = EatConfig(k=2)
eat = EatNetwork(eat_input_dim(task, eat_cfg), eat_cfg)
for j, item_id in enumerate(ids):
    vec = build_eat_input(item_id, batch[j], ids, batch, model, eat_cfg)
    print(f"  {item_id}: P[error]={eat.error_prob(np.atleast_2d(vec))[0]:.3f}")

print("\nfusing the two signals at different run stages:")
for frac in (0.0, 0.2, 0.5, 1.0):
    exp = al_exponent(int(frac * 100), 100, t0=0.2)
    fused = bi_weight(0.8, 0.7, exp)
    print(
        f"  {int(100 * frac):3d}% processed: exponent={exp:.3f} "
        f"bi_weight(al=0.8, eat=0.7)={fused:.3f}"
    )
print("  (an item goes to the human when the fused score reaches 0.5)")
