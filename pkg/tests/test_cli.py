import csv
import json

import numpy as np
import pytest

from minmax_measure.cli import main
from minmax_measure.report import build_report, run_row
from minmax_measure.runner import OUTPUT_ENV, RunConfig, median_run, source_digest
from minmax_measure.trainer import read_trace_csv, stability_metric

TINY = ["--batch", "16", "-N", "20", "--n-return", "5", "--hidden", "4",
        "--stability-window", "10", "--eval-samples", "2000"]


@pytest.fixture(scope="module")
def mot_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "mot-combined"
    code = main(["train", "--preset", "mot", "--setting", "combined", "--seeds", "2", *TINY,
                 "--out", str(out)])
    assert code == 0
    return out


def test_train_writes_run_directories(mot_runs):
    for s in (0, 1):
        d = mot_runs / f"seed-{s}"
        assert {"trace.csv", "summary.json", "checkpoint.npz"} <= {p.name for p in d.iterdir()}
        summary = json.loads((d / "summary.json").read_text())
        assert summary["status"] == "ok" and summary["seed"] == s
        assert summary["source_digest"] == source_digest()
        assert set(summary["evaluation"]) == {"value", "marginal_error", "martingale_error", "n"}
        # the echoed config alone rebuilds the run configuration
        cfg = RunConfig.from_dict(summary["config"])
        assert cfg.train["unroll"] == 5 and cfg.train["mixture"] == 5
        assert cfg.to_dict() == summary["config"]
        phi = read_trace_csv(d / "trace.csv")["phi"]
        assert summary["value"] == pytest.approx(np.mean(phi[-5:]), abs=1e-12)
        assert summary["stability"] == pytest.approx(stability_metric(phi, 10), abs=1e-12)
    assert json.loads((mot_runs / "median_run.json").read_text())["seed"] in (0, 1)


def test_rerun_reuses_completed_seeds(mot_runs):
    before = (mot_runs / "seed-0" / "summary.json").read_bytes()
    code = main(["train", "--preset", "mot", "--setting", "combined", "--seeds", "2", *TINY,
                 "--out", str(mot_runs)])
    assert code == 0
    assert (mot_runs / "seed-0" / "summary.json").read_bytes() == before


def test_report_is_byte_stable_and_recomputable(mot_runs, tmp_path, capsys):
    assert main(["report", str(mot_runs), "--out", str(tmp_path / "a")]) == 0
    assert main(["report", str(mot_runs), "--out", str(tmp_path / "b")]) == 0
    for name in ["aggregate.csv", "mot-combined_seed-0.svg", "mot-combined_seed-1.svg"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a" / "aggregate.csv")))
    assert list(rows[0]) == ["group", "runs", "aborted", "value", "marginal_error",
                             "martingale_error", "stability"]
    assert len(rows) == 1 and rows[0]["runs"] == "2"
    stab = [stability_metric(read_trace_csv(mot_runs / f"seed-{s}" / "trace.csv")["phi"], 10) for s in (0, 1)]
    assert float(rows[0]["stability"]) == pytest.approx(np.mean(stab), abs=1e-6)
    svg = (tmp_path / "a" / "mot-combined_seed-0.svg").read_text()
    assert svg.count("<path") >= 1 and "iteration" in svg and "running return" in svg


def test_report_lists_missing_traces(mot_runs, tmp_path, capsys):
    broken = tmp_path / "grp" / "seed-0"
    broken.mkdir(parents=True)
    (broken / "summary.json").write_text((mot_runs / "seed-0" / "summary.json").read_text())
    rep = build_report([tmp_path / "grp", mot_runs], tmp_path / "rep")
    assert rep["missing"] == [str(broken)]
    assert len(rep["rows"]) == 1


def test_report_without_runs_is_an_error(tmp_path, capsys):
    assert main(["report"]) == 1
    assert main(["report", str(tmp_path)]) == 1
    with pytest.raises(ValueError):
        build_report([])


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"problem": {"preset": "mot"}, "learning_rate": 1}))
    assert main(["train", "--config", str(bad)]) == 1
    assert "learning_rate" in capsys.readouterr().err
    bad.write_text(json.dumps({"problem": {"preset": "mot"}, "train": {"iterations": 5, "n_return": 10}}))
    assert main(["train", "--config", str(bad)]) == 1
    bad.write_text("{not json")
    assert main(["train", "--config", str(bad)]) == 1
    assert main(["train"]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_abort_exits_2(tmp_path, capsys):
    cfg = {"problem": {"preset": "w2", "dim": 1}, "hidden_gen": 4, "hidden_disc": 4,
           "train": {"batch": 16, "iterations": 20, "n_return": 5,
                     "adam_gen": {"lr": 1e200}, "adam_disc": {"lr": 1e200}},
           "seeds": [0], "eval_samples": 0}
    path = tmp_path / "blow.json"
    path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert "numeric abort at iteration" in capsys.readouterr().err
    summary = json.loads((tmp_path / "out" / "seed-0" / "summary.json").read_text())
    assert summary["status"] == "aborted" and summary["abort_iteration"] >= 1
    assert summary["value"] is None


def test_output_root_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envroot"))
    args = ["train", "--preset", "w2", "--dim", "1", "--reg", "div", "--c", "150",
            "--batch", "8", "-N", "6", "--n-return", "2", "--hidden", "3", "--eval-samples", "100",
            "--stability-window", "4"]
    assert main(args) == 0
    summary = json.loads((tmp_path / "envroot" / "seed-0" / "summary.json").read_text())
    assert summary["config"]["regularization"] == {"mode": "divergence", "c": [150.0]}
    assert summary["problem"]["name"] == "w2" and summary["value"] is not None


def test_oracle_commands(capsys):
    assert main(["oracle", "--preset", "mot", "--grid", "12"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "optimal" and 0 < out["value"] < 0.6
    assert main(["oracle", "--preset", "ot-lipschitz", "--grid", "10", "--L", "1,2,4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert all(np.diff(out["values"]) <= 1e-10) and min(out["values"]) >= out["ot_value"] - 1e-10
    assert main(["oracle", "--preset", "dcot", "--grid-sweep", "10:20:10", "--bins", "5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert [r["grid"] for r in out["sweep"]] == [[10, 10], [20, 20]]


def test_oracle_infeasible_exits_3(capsys):
    # 16 cells cannot put mass near 1/25 into each of 25 difference bins
    assert main(["oracle", "--preset", "dcot", "--grid", "4", "--bins", "25"]) == 3
    assert main(["oracle", "--preset", "w2", "--dim", "2"]) == 1


def test_evaluate_command(mot_runs, capsys):
    assert main(["evaluate", str(mot_runs / "seed-0"), "--samples", "2000"]) == 0
    rows = json.loads(capsys.readouterr().out)
    summary = json.loads((mot_runs / "seed-0" / "summary.json").read_text())
    assert rows[0]["value"] == pytest.approx(summary["evaluation"]["value"], abs=1e-12)


def test_median_run_rule():
    rows = [{"seed": 0, "stability": 0.3}, {"seed": 1, "stability": None},
            {"seed": 2, "stability": 0.1}, {"seed": 3, "stability": 0.2}]
    assert median_run(rows) == 3
    assert median_run(rows[:3]) == 0


def test_run_row_matches_summary(mot_runs):
    row = run_row(mot_runs / "seed-1")
    summary = json.loads((mot_runs / "seed-1" / "summary.json").read_text())
    assert row["value"] == pytest.approx(summary["value"], abs=1e-12)
    assert row["stability"] == pytest.approx(summary["stability"], abs=1e-12)
