import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gsheaf import cli, experiments
from gsheaf.data import synthesize
from gsheaf.errors import NumericError, ParameterError
from gsheaf.models.base import GraphRegressor

FAST = ["--epochs", "3", "--hidden", "4", "--sinkhorn-iters", "20"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.json"
    assert cli.run(["gen", "--n", "24", "--m", "3", "--seed", "2", "--out", str(path)]) == 0
    return path


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_gen_writes_dataset(dataset):
    data = json.loads(dataset.read_text())
    assert set(data) == {"graph", "inputs", "targets", "splits", "meta"}
    assert data["graph"]["n"] == 24 and len(data["targets"][0]) == 30


def test_sweep_rows_and_summary(dataset, tmp_path):
    out = tmp_path / "sweep"
    argv = ["sweep", "--dataset", str(dataset), "--model", "mlp", "--model", "gsnn_orth", "--seeds", "3",
            "--workers", "1", "--out-dir", str(out)] + FAST
    assert cli.run(argv) == 0
    rows = read(out / "results.csv")
    assert len(rows) == 6
    assert list(rows[0]) == list(experiments.RESULT_FIELDS)
    assert [(r["model"], r["seed"]) for r in rows] == [(m, str(s)) for m in ("mlp", "gsnn_orth") for s in range(3)]
    summary = read(out / "summary.csv")
    for s in summary:
        vals = [float(r["mean_w2"]) for r in rows if r["model"] == s["model"]]
        assert abs(float(s["mean_w2"]) - np.mean(vals)) <= 1e-12
        assert "±" in s["table"]
    full = json.loads((out / "results.json").read_text())
    assert len(full) == 6 and abs(float(rows[0]["mean_w2"]) - full[0]["mean_w2"]) <= 5e-6 * full[0]["mean_w2"]


def test_sweep_reproducible(dataset, tmp_path):
    def once(name):
        out = tmp_path / name
        argv = ["sweep", "--dataset", str(dataset), "--model", "gcn", "--seeds", "2", "--workers", "1",
                "--out-dir", str(out)] + FAST
        assert cli.run(argv) == 0
        # wall-clock seconds are the only column allowed to differ
        return [{k: v for k, v in r.items() if k != "seconds"} for r in read(out / "results.csv")]
    assert once("a") == once("b")


def test_sweep_parallel_matches_serial(dataset, tmp_path):
    common = ["sweep", "--dataset", str(dataset), "--model", "mlp", "--seeds", "2"] + FAST
    assert cli.run(common + ["--workers", "1", "--out-dir", str(tmp_path / "s")]) == 0
    assert cli.run(common + ["--workers", "2", "--out-dir", str(tmp_path / "p")]) == 0
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]  # noqa: E731
    assert strip(read(tmp_path / "s" / "results.csv")) == strip(read(tmp_path / "p" / "results.csv"))


def test_energy_rows_per_model(dataset, tmp_path):
    out = tmp_path / "energy"
    argv = ["energy", "--dataset", str(dataset), "--model", "gcn", "--model", "gsnn_orth", "--workers", "1",
            "--out-dir", str(out)] + FAST
    assert cli.run(argv) == 0
    rows = read(out / "depth_w2.csv")
    for m in ("gcn", "gsnn_orth"):
        assert [int(r["depth"]) for r in rows if r["model"] == m] == [1, 2, 4, 8]
    energy = read(out / "energy.csv")
    assert sum(1 for r in energy if r["model"] == "gcn" and r["kind"] == "layer_of_deepest") == 8
    assert sum(1 for r in energy if r["model"] == "gsnn_orth" and r["kind"] == "final_layer") == 4


def test_train_writes_artifacts(dataset, tmp_path):
    out = tmp_path / "train"
    assert cli.run(["train", "--dataset", str(dataset), "--model", "nsd_diag", "--stalk-dim", "2",
                    "--out-dir", str(out)] + FAST) == 0
    assert read(out / "history.csv")[0].keys() == {"epoch", "train_loss", "val_loss", "lr"}
    est = GraphRegressor.load(out / "checkpoint.json")
    assert est.get_params()["epochs"] == 3
    assert json.loads((out / "metrics.json").read_text())["model"] == "nsd_diag"


def test_flags_only_reach_models_that_accept_them(dataset, tmp_path):
    # --stalk-dim is meaningless for an MLP and must be ignored, not rejected
    assert cli.run(["train", "--dataset", str(dataset), "--model", "mlp", "--stalk-dim", "3",
                    "--out-dir", str(tmp_path)] + FAST) == 0


def test_numeric_failure_exit_code(dataset, tmp_path, monkeypatch):
    def boom(self, X, y=None):
        raise NumericError("forced")
    monkeypatch.setattr(GraphRegressor, "fit", boom)
    out = tmp_path / "fail"
    rc = cli.run(["sweep", "--dataset", str(dataset), "--model", "mlp", "--seeds", "2", "--workers", "1",
                  "--out-dir", str(out)] + FAST)
    assert rc == 1
    rows = read(out / "results.csv")
    assert len(rows) == 2 and all(r["status"] == "failed" for r in rows)
    assert cli.run(["train", "--dataset", str(dataset), "--model", "mlp", "--out-dir", str(out)]) == 1


def test_usage_errors(dataset, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.run(["sweep", "--dataset", str(dataset), "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.run(["train", "--dataset", str(dataset), "--model", "resnet", "--out-dir", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.run([])
    assert exc.value.code == 2
    assert cli.run(["train", "--dataset", str(tmp_path / "missing.json"), "--model", "mlp",
                    "--out-dir", str(tmp_path)]) == 2
    assert cli.run(["gen", "--n", "5", "--m", "5", "--out", str(tmp_path / "x.json")]) == 2


def test_verify_subset(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert cli.run(["verify", "--check", "1", "--check", "5", "--json", str(report)]) == 0
    assert "2/2 checks passed" in capsys.readouterr().out
    assert [r["key"] for r in json.loads(report.read_text())] == ["1", "5"]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("GSL_THREADS", "2")
    assert experiments.worker_count(8) == 2
    monkeypatch.setenv("GSL_THREADS", "many")
    with pytest.raises(ParameterError):
        experiments.worker_count(4)
    monkeypatch.delenv("GSL_THREADS")
    assert experiments.worker_count(3) == 3


def test_summary_uses_written_values():
    recs = [experiments.RunRecord("m", "d", i, v, 0.0, 1, 0.0) for i, v in enumerate([1 / 3, 2 / 3, 0.1234567891])]
    s = experiments.summarize(recs)[0]
    written = [float(r.row()["mean_w2"]) for r in recs]
    assert abs(float(s["mean_w2"]) - np.mean(written)) <= 1e-12


def test_sweep_api_direct():
    ds = synthesize("BA", n=20, m=3, seed=1)
    recs = experiments.sweep(ds, ["mlp"], seeds=2, base_seed=5, params={"epochs": 2, "hidden": 4}, workers=1)
    assert [r.seed for r in recs] == [5, 6] and all(r.ok for r in recs)
    with pytest.raises(ParameterError):
        experiments.sweep(ds, ["mlp"], seeds=0)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "gsheaf", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "verify" in out.stdout
