"""One simulated annotation run, start to finish.

Generates a small mixture dataset with a deliberately hard slice, runs the
bi-weighted triage method at a 50% budget, and prints what happened to the
budget and where the quality landed.
"""

from annotriage import ExperimentConfig, run_experiment, synth_gaussian

dataset = synth_gaussian(n=600, hard_frac=0.2, seed=42)
config = ExperimentConfig(
    method="sant",
    budget_fraction=0.5,
    warmup_count=40,
    seed=7,
)

report = run_experiment(config, dataset)

print(f"dataset: {len(dataset.items)} items, task={dataset.task.task_kind.value}")
print(f"budget:  {report.budget_used}/{report.budget_total} human labels spent")
print("counts: ", report.counts)
print(f"quality: overall={report.quality_overall:.4f} "
      f"model-annotated={report.quality_model_annotated:.4f}")

print("\nfirst decisions after warmup:")
shown = 0
for entry in report.rounds:
    if entry["rule"] in ("warmup",):
        continue
    s = entry["scores"] or {}
    print(
        f"  round {entry['round']:3d} {entry['item_id']}: -> {entry['assignee']:5s} "
        f"al={s.get('al') and round(s['al'], 3)} eat={s.get('eat') and round(s['eat'], 3)} "
        f"combined={s.get('combined') and round(s['combined'], 3)}"
    )
    shown += 1
    if shown == 8:
        break

print("\nloss trace (every 100th step):")
for entry in report.loss_trace[::100]:
    print(
        f"  step {entry['step']:4d}: annotator={entry['l_f']:.4f} "
        f"error-nll={entry['l_d']:.4f} margin={entry['l_m']:.4f}"
    )
