"""Command-line entry points.

    annotriage synth    --kind gaussian --n 2000 --hard-frac 0.2 --out data.jsonl
    annotriage ingest   --in data.jsonl --out datadir/
    annotriage simulate --dataset data.jsonl --method sant --budget 0.5 --seed 0 --out run/
    annotriage sweep    --dataset data.jsonl --budgets 0.1..0.9:0.1 --methods sant,random --out sweep/
    annotriage report   --dir run/
    annotriage serve    --port 8000 --data-dir served/

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional, Sequence

from .config import METHODS, POST_HOC_MODES, ExperimentConfig
from .core import AnnotriageError
from .data import ingest_jsonl, synth_gaussian, synth_multilabel, write_jsonl
from .harness import (
    emit_report,
    load_report,
    run_experiment,
    sweep_budgets,
    write_summary_csv,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="annotriage", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="verb", metavar="verb")

    p = sub.add_parser("synth", help="generate a synthetic dataset", parents=[])
    p.add_argument("--kind", choices=["gaussian", "tags"], default="gaussian")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--hard-frac", type=float, default=0.2)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--tags", type=int, default=20)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output JSONL path")

    p = sub.add_parser("ingest", help="validate a JSONL dataset into a data dir")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="one simulated annotation run")
    _add_run_flags(p)
    p.add_argument("--budget", type=float, default=0.5, help="budget fraction in (0,1]")
    p.add_argument("--out", required=True, help="output directory for report files")

    p = sub.add_parser("sweep", help="budget sweep over methods and seeds")
    _add_run_flags(p)
    p.add_argument("--budgets", default="0.1..0.9:0.1", help="range a..b:step or comma list")
    p.add_argument("--methods", default=None, help="comma list; defaults to --method")
    p.add_argument("--seeds", default=None, help="comma list; defaults to --seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="print the summary.csv of a run directory")
    p.add_argument("--dir", required=True)

    p = sub.add_parser("serve", help="run the live annotation service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--ui-dir", default=None, help="serve the browser console from this directory at /ui")
    return parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="JSONL file or ingested directory")
    p.add_argument("--method", choices=list(METHODS), default="sant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget-count", type=int, default=None, help="absolute budget override")
    p.add_argument("--warmup", type=int, default=32)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--post-hoc", choices=list(POST_HOC_MODES), default="none")
    p.add_argument("--config", default=None, help="JSON config file; overrides flags")


def _parse_budgets(spec: str) -> List[float]:
    if ".." in spec:
        lo, rest = spec.split("..")
        hi, step = rest.split(":")
        lo, hi, step = float(lo), float(hi), float(step)
        out = []
        v = lo
        while v <= hi + 1e-9:
            out.append(round(v, 10))
            v += step
        return out
    return [float(tok) for tok in spec.split(",") if tok]


def _dataset_path(arg: str) -> str:
    if os.path.isdir(arg):
        return os.path.join(arg, "dataset.jsonl")
    return arg


def _experiment_config(args, budget_fraction: float) -> ExperimentConfig:
    base = {
        "method": args.method,
        "budget_fraction": budget_fraction,
        "budget_count": args.budget_count,
        "warmup_count": args.warmup,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "post_hoc": args.post_hoc,
    }
    if args.config:
        with open(args.config) as fh:
            base.update(json.load(fh))
    return ExperimentConfig.from_dict(base)


def _sweep_worker(payload):
    cfg_dict, dataset_path = payload
    dataset = ingest_jsonl(dataset_path)
    report = run_experiment(
        ExperimentConfig.from_dict(cfg_dict), dataset, keep_events=False
    )
    return report


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except AnnotriageError as exc:
        print(f"annotriage: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"annotriage: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.verb == "synth":
        if args.kind == "gaussian":
            ds = synth_gaussian(
                args.n,
                num_classes=args.classes,
                feature_dim=args.dim,
                hard_frac=args.hard_frac,
                seed=args.seed,
            )
        else:
            ds = synth_multilabel(
                args.n,
                num_tags=args.tags,
                feature_dim=args.dim,
                hard_frac=args.hard_frac,
                seed=args.seed,
            )
        write_jsonl(ds, args.out)
        print(f"wrote {len(ds)} items to {args.out}")
        return 0

    if args.verb == "ingest":
        dataset = ingest_jsonl(args.infile)
        os.makedirs(args.out, exist_ok=True)
        write_jsonl(dataset, os.path.join(args.out, "dataset.jsonl"))
        info = {
            "items": len(dataset),
            "task_kind": dataset.task.task_kind.value,
            "num_classes": dataset.task.num_classes,
            "feature_dim": dataset.task.feature_dim,
            "has_labels": dataset.has_oracle,
        }
        with open(os.path.join(args.out, "info.json"), "w") as fh:
            json.dump(info, fh, indent=1)
        print(json.dumps(info))
        return 0

    if args.verb == "simulate":
        dataset = ingest_jsonl(_dataset_path(args.dataset))
        config = _experiment_config(args, args.budget)
        report = run_experiment(config, dataset)
        paths = emit_report(report, args.out)
        print(
            f"{report.method} budget={report.budget_fraction} seed={report.seed} "
            f"overall={report.quality_overall} model={report.quality_model_annotated} "
            f"-> {paths['report']}"
        )
        return 0

    if args.verb == "sweep":
        path = _dataset_path(args.dataset)
        fractions = sorted(_parse_budgets(args.budgets))
        methods = (args.methods or args.method).split(",")
        seeds = [int(s) for s in (args.seeds or str(args.seed)).split(",")]
        jobs = []
        for method in methods:
            for fraction in fractions:
                for seed in seeds:
                    cfg = _experiment_config(args, fraction)
                    d = cfg.to_dict()
                    d.update({"method": method, "seed": seed})
                    jobs.append((d, path))
        if args.jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                reports = list(pool.map(_sweep_worker, jobs))
        else:
            reports = [_sweep_worker(j) for j in jobs]
        os.makedirs(args.out, exist_ok=True)
        out_csv = os.path.join(args.out, "summary.csv")
        write_summary_csv(reports, out_csv)
        print(f"wrote {len(reports)} rows to {out_csv}")
        return 0

    if args.verb == "report":
        path = os.path.join(args.dir, "summary.csv")
        with open(path) as fh:
            sys.stdout.write(fh.read())
        return 0

    if args.verb == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(
            create_app(args.data_dir, ui_dir=args.ui_dir),
            host=args.host,
            port=args.port,
        )
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
