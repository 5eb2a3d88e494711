import csv
import json

import pytest

from annotriage.cli import _parse_budgets, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestUsage:
    def test_no_args_prints_synopsis_and_exits_one(self, capsys):
        code, out, err = run_cli(capsys)
        assert code == 1
        assert "usage" in err.lower()

    def test_unknown_flag_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--does-not-exist", "1"])
        assert exc.value.code == 1

    def test_missing_dataset_is_runtime_error(self, capsys, tmp_path):
        code, out, err = run_cli(
            capsys, "simulate", "--dataset", str(tmp_path / "nope.jsonl"),
            "--out", str(tmp_path / "o"),
        )
        assert code == 2
        assert "annotriage:" in err


class TestBudgetParsing:
    def test_range_syntax(self):
        got = _parse_budgets("0.1..0.9:0.1")
        assert got == [round(0.1 * i, 10) for i in range(1, 10)]

    def test_comma_list(self):
        assert _parse_budgets("0.25,0.5") == [0.25, 0.5]


class TestPipelines:
    def test_synth_ingest_simulate_report(self, capsys, tmp_path):
        data = tmp_path / "toy.jsonl"
        code, out, _ = run_cli(
            capsys, "synth", "--kind", "gaussian", "--n", "10", "--seed", "3",
            "--out", str(data),
        )
        assert code == 0 and "10 items" in out

        code, out, _ = run_cli(
            capsys, "ingest", "--in", str(data), "--out", str(tmp_path / "ingested")
        )
        assert code == 0
        info = json.loads((tmp_path / "ingested" / "info.json").read_text())
        assert info["items"] == 10

        out_dir = tmp_path / "run"
        code, out, _ = run_cli(
            capsys, "simulate", "--dataset", str(tmp_path / "ingested"),
            "--method", "random", "--budget", "1.0", "--warmup", "10",
            "--seed", "0", "--out", str(out_dir),
        )
        assert code == 0
        with open(out_dir / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert float(rows[0]["quality_overall"]) == 1.0  # all-human limit

        code, out, _ = run_cli(capsys, "report", "--dir", str(out_dir))
        assert code == 0
        assert out.startswith("method,")

    def test_sweep_emits_one_row_per_cell(self, capsys, tmp_path):
        data = tmp_path / "toy.jsonl"
        run_cli(capsys, "synth", "--n", "40", "--seed", "1", "--out", str(data))
        out_dir = tmp_path / "sweep"
        code, out, _ = run_cli(
            capsys, "sweep", "--dataset", str(data),
            "--budgets", "0.1..0.9:0.1", "--methods", "random",
            "--warmup", "2", "--seeds", "0", "--out", str(out_dir),
        )
        assert code == 0
        with open(out_dir / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 9
        assert [float(r["budget_fraction"]) for r in rows] == _parse_budgets("0.1..0.9:0.1")

    def test_flags_round_trip_into_report_config(self, capsys, tmp_path):
        data = tmp_path / "toy.jsonl"
        run_cli(capsys, "synth", "--n", "20", "--seed", "2", "--out", str(data))
        out_dir = tmp_path / "run"
        code, _, _ = run_cli(
            capsys, "simulate", "--dataset", str(data), "--method", "maxent",
            "--budget", "0.5", "--warmup", "3", "--batch-size", "16",
            "--seed", "7", "--post-hoc", "reannotate", "--out", str(out_dir),
        )
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        cfg = report["config"]
        assert cfg["method"] == "maxent"
        assert cfg["budget_fraction"] == 0.5
        assert cfg["warmup_count"] == 3
        assert cfg["batch_size"] == 16
        assert cfg["seed"] == 7
        assert cfg["post_hoc"] == "reannotate"

    def test_config_file_overrides_flags(self, capsys, tmp_path):
        data = tmp_path / "toy.jsonl"
        run_cli(capsys, "synth", "--n", "20", "--seed", "2", "--out", str(data))
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"method": "random", "warmup_count": 5}))
        out_dir = tmp_path / "run"
        code, _, _ = run_cli(
            capsys, "simulate", "--dataset", str(data), "--method", "maxent",
            "--budget", "0.5", "--warmup", "3", "--config", str(cfg_file),
            "--out", str(out_dir),
        )
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert report["config"]["method"] == "random"
        assert report["config"]["warmup_count"] == 5
