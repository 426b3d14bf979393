import csv

import numpy as np
import pytest

import tsclearn.cli as cli
from tsclearn.errors import NotReadyError, OptimizationError
from tsclearn.targets import TargetSet

SMALL = ["--classes", "3", "--n-max", "40", "--rho", "10", "--epochs", "4", "--batch-size", "32", "--target-iterations", "300"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    assert cli.main(["train", "--method", "tsc", "--dim", "2", *SMALL, "--out-dir", str(out)]) == 0
    return out


def test_gen_targets(tmp_path, capsys):
    out = tmp_path / "t.txt"
    assert cli.main(["gen-targets", "--classes", "4", "--dim", "3", "--iterations", "2000", "--out", str(out)]) == 0
    ts = TargetSet.load(out)
    assert ts.points.shape == (4, 3) and ts.temperature == 0.07
    assert "simplex=yes" in capsys.readouterr().out


def test_train_writes_run_and_figure(run_dir):
    for name in ("config.json", "checkpoint.txt", "targets.txt", "history.csv", "history.png", "summary.txt"):
        assert (run_dir / name).exists()
    assert "accuracy=" in (run_dir / "summary.txt").read_text()


def test_train_is_reproducible(tmp_path, run_dir):
    assert cli.main(["train", "--method", "tsc", "--dim", "2", *SMALL, "--out-dir", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "history.csv").read_text() == (run_dir / "history.csv").read_text()


def test_eval_writes_metrics(run_dir):
    assert cli.main(["eval", "--run", str(run_dir), "--metrics-k", "1"]) == 0
    rows = read_csv(run_dir / "metrics.csv")
    assert [r["group"] for r in rows] == ["many", "medium", "few", "all"]
    assert list(rows[0]) == ["group", "k", "A", "U", "Uk", "R", "acc"]
    assert all(r["k"] == "1" for r in rows)
    assert (run_dir / "metrics.png").stat().st_size > 0


def test_plot_data_files(run_dir):
    assert cli.main(["plot-data", "--run", str(run_dir)]) == 0
    scatter = np.loadtxt(run_dir / "scatter.txt", skiprows=1)
    assert scatter.shape[1] == 3
    np.testing.assert_allclose(np.hypot(scatter[:, 0], scatter[:, 1]), 1.0, atol=1e-8)
    assert (run_dir / "centers.txt").read_text().startswith("class target_x target_y\n")
    centers = np.loadtxt(run_dir / "centers.txt", skiprows=1)
    assert centers[:, 0].tolist() == [0, 1, 2]
    assert (run_dir / "scatter.png").exists()
    # the run's own target file is untouched
    TargetSet.load(run_dir / "targets.txt")


def test_plot_data_rejects_higher_dim(tmp_path):
    out = tmp_path / "kcl"
    assert cli.main(["train", "--method", "kcl", "--dim", "3", *SMALL, "--out-dir", str(out)]) == 0
    assert cli.main(["plot-data", "--run", str(out)]) == 2


def test_ablate_aggregates(tmp_path):
    out = tmp_path / "ab"
    args = ["ablate", "--param", "warmup", "--values", "0.25,0.75", "--seeds", "2", "--dim", "2", *SMALL]
    assert cli.main([*args, "--out-dir", str(out)]) == 0
    rows = read_csv(out / "ablation.csv")
    assert len(rows) == 8 and {r["seeds"] for r in rows} == {"2"}
    assert len(read_csv(out / "ablation_runs.csv")) == 16
    assert (out / "ablation.png").exists()


def test_validation_exit_code(tmp_path, capsys):
    assert cli.main(["train", "--rho", "1000", "--n-max", "10", "--out-dir", str(tmp_path / "x")]) == 2
    assert cli.main(["eval", "--run", str(tmp_path)]) == 2
    assert cli.main(["ablate", "--param", "dim", "--values", "2.5", "--out-dir", str(tmp_path / "y")]) == 2
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize("exc", [OptimizationError, NotReadyError])
def test_optimization_and_contract_exit_code(tmp_path, monkeypatch, exc):
    def boom(*args, **kwargs):
        raise exc("forced")

    monkeypatch.setattr(cli, "generate_targets", boom)
    assert cli.main(["gen-targets", "--classes", "3", "--dim", "2", "--out", str(tmp_path / "t.txt")]) == 3


def test_bad_arguments_exit_with_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["train", "--method", "supcon", "--out-dir", "x"])
    assert info.value.code == 2
