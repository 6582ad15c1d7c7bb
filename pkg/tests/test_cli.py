import csv
import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from cogopt import report
from cogopt.cli import default_config_doc, load_config, main
from cogopt.knowledge import load_kb


@pytest.fixture()
def runner():
    return CliRunner()


def write_project(directory: Path, **overrides) -> Path:
    """A small, fast run configuration plus the template knowledge base."""
    runner = CliRunner()
    res = runner.invoke(main, ["--config", "unused", "init", str(directory)])
    assert res.exit_code == 0, res.output
    doc = default_config_doc()
    doc["cycles"] = 2
    doc["cognition"].update(s=6, theta=3, k_instances=3, tuning_budget=2,
                            bench_budget=12, reps=2, design_reps=1)
    doc["campaign"].update(budget=12, checkpoints=[6, 12], reps=2, k_instances=2)
    for key, value in overrides.items():
        if isinstance(value, dict):
            doc[key].update(value)
        else:
            doc[key] = value
    cfg = directory / "config.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    return cfg


class TestInit:
    def test_writes_loadable_templates(self, runner, tmp_path):
        res = runner.invoke(main, ["init", str(tmp_path)])
        assert res.exit_code == 0
        kb = load_kb(tmp_path / "kb.yaml")
        assert kb.find("KrigingSBO").parameter("designSize").default == 7
        cfg = load_config(tmp_path / "config.yaml")
        assert cfg.cycles == 36

    def test_refuses_to_overwrite(self, runner, tmp_path):
        assert runner.invoke(main, ["init", str(tmp_path)]).exit_code == 0
        res = runner.invoke(main, ["init", str(tmp_path)])
        assert res.exit_code == 2
        res = runner.invoke(main, ["--force", "init", str(tmp_path)])
        assert res.exit_code == 0


class TestRun:
    def test_writes_runlog_and_final_kb(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        out = tmp_path / "out"
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(out), "run"])
        assert res.exit_code == 0, res.output
        lines = [json.loads(l) for l in (out / "runlog.jsonl").read_text().splitlines()]
        assert lines[0]["type"] == "bootstrap"
        cycles = [l for l in lines if l["type"] == "cycle"]
        assert len(cycles) == 2
        assert [c["iteration"] for c in cycles] == [0, 1]
        kb = load_kb(out / "kb_final.yaml")
        assert kb.find("RandomSearch")

    def test_zero_cycles_gives_bootstrap_only_log(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        out = tmp_path / "out"
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                   "run", "--cycles", "0"])
        assert res.exit_code == 0, res.output
        lines = [json.loads(l) for l in (out / "runlog.jsonl").read_text().splitlines()]
        assert [l["type"] for l in lines] == ["bootstrap"]

    def test_refuses_existing_runlog(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        out = tmp_path / "out"
        args = ["--config", str(cfg), "--out", str(out), "run", "--cycles", "0"]
        assert runner.invoke(main, args).exit_code == 0
        assert runner.invoke(main, args).exit_code == 2
        assert runner.invoke(main, ["--force"] + args[:-3] + ["run", "--cycles", "0"]).exit_code == 0

    def test_seed_override_changes_trajectory(self, runner, tmp_path):
        cfg = write_project(tmp_path, plant={"noise_sd": 0.05})
        logs = {}
        for seed in (1, 2):
            out = tmp_path / f"out{seed}"
            res = runner.invoke(main, ["--config", str(cfg), "--seed", str(seed),
                                       "--out", str(out), "run"])
            assert res.exit_code == 0, res.output
            logs[seed] = (out / "runlog.jsonl").read_text()
        assert logs[1] != logs[2]


class TestBenchmark:
    def test_campaign_and_rank_tables(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        out = tmp_path / "bench"
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(out), "benchmark"])
        assert res.exit_code == 0, res.output
        with open(out / "campaign.csv") as fh:
            rows = list(csv.DictReader(fh))
        # 5 algorithms x (1 ground truth + 2 sims) x 2 checkpoints
        assert len(rows) == 5 * 3 * 2
        with open(out / "ranks_ground_truth.csv") as fh:
            ranks = list(csv.DictReader(fh))
        assert any(r["pipeline"] == "RandomSearch" and r["baseline"] == "True" for r in ranks)
        per_budget: dict = {}
        for r in ranks:
            per_budget.setdefault(r["budget"], []).append(float(r["mean_rank"]))
        for vals in per_budget.values():
            assert sum(vals) == pytest.approx(5 * 6 / 2)


class TestReport:
    @pytest.fixture()
    def campaign_dir(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        out = tmp_path / "bench"
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(out), "benchmark"])
        assert res.exit_code == 0, res.output
        return cfg, out

    def test_scenarios_and_trajectories(self, runner, campaign_dir, tmp_path):
        cfg, bench = campaign_dir
        out = tmp_path / "rep"
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                   "report", str(bench / "campaign.csv")])
        assert res.exit_code == 0, res.output
        assert (out / "scenario_1.csv").exists()
        assert (out / "scenario_2.csv").exists()
        assert (out / "trajectories.csv").exists()
        assert "rank correlation" in res.output
        assert "scenario (0.8, 0.1, 0.1)" in res.output
        assert "scenario (0.5, 0.25, 0.25)" in res.output

    def test_report_is_replayable(self, runner, campaign_dir, tmp_path):
        cfg, bench = campaign_dir
        outputs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            res = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                       "report", str(bench / "campaign.csv")])
            assert res.exit_code == 0
            outputs.append((res.output, (out / "scenario_1.csv").read_text(),
                            (out / "trajectories.csv").read_text()))
        assert outputs[0] == outputs[1]

    def test_malformed_csv_is_a_runtime_error(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(tmp_path / "x"),
                                   "report", str(bad)])
        assert res.exit_code == 3


class TestSimulate:
    def test_writes_instances(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        out = tmp_path / "sim"
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                   "simulate", "-k", "2"])
        assert res.exit_code == 0, res.output
        with open(out / "simulations.csv") as fh:
            rows = list(csv.DictReader(fh))
        names = {r["instance"] for r in rows}
        assert names == {report.GROUND_TRUTH, "sim-0", "sim-1"}


class TestErrors:
    def test_missing_config_is_a_config_error(self, runner, tmp_path):
        res = runner.invoke(main, ["--config", str(tmp_path / "nope.yaml"), "run"])
        assert res.exit_code == 2

    def test_malformed_config(self, runner, tmp_path):
        cfg = tmp_path / "config.yaml"
        cfg.write_text("cycles: [unclosed\n")
        res = runner.invoke(main, ["--config", str(cfg), "run"])
        assert res.exit_code == 2

    def test_missing_kb_file(self, runner, tmp_path):
        cfg = write_project(tmp_path)
        (tmp_path / "kb.yaml").unlink()
        res = runner.invoke(main, ["--config", str(cfg), "--out", str(tmp_path / "o"), "run"])
        assert res.exit_code == 2

    def test_log_level_env_accepted(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("CAAI_LOG_LEVEL", "debug")
        res = runner.invoke(main, ["init", str(tmp_path)])
        assert res.exit_code == 0


def test_strip_volatile_removes_cpu_and_time_keys():
    entry = {"iteration": 1, "cpu_time": 0.5, "timestamp": 9.0,
             "ratings": {"A": {"cpu_ratio": 2.0, "aggregate": 0.8, "rank": 1.0}}}
    out = report.strip_volatile(entry)
    # the aggregate mixes in the CPU factor, so it counts as volatile too
    assert out == {"iteration": 1, "ratings": {"A": {"rank": 1.0}}}
