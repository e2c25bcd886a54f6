"""Tests for the phasemix command line."""

import json

import pytest

from app.cli import EXIT_IO, EXIT_OK, EXIT_UNSOLVED, EXIT_USAGE, main
from app.config import settings
from app.services.mesh import read_mesh
from app.services.results import AttemptRecord, RunMetrics, read_csv, write_csv
from app.services.surrogate.dataset import read_dataset
from app.services.surrogate.surrogate import read_surrogate

BAR_CONFIG = """\
experiment = dogbone
dogbone.length = 4.0
dogbone.height = 1.0
dogbone.waist_height = 1.0
dogbone.waist_length = 2.0
dogbone.nx = 4
dogbone.ny = 2
mode = full
du0 = 0.01
u_target = 0.03
"""


@pytest.fixture
def bar_cfg(tmp_path):
    path = tmp_path / "bar.cfg"
    path.write_text(BAR_CONFIG)
    return path


class TestUsage:
    def test_no_command(self):
        assert main([]) == EXIT_USAGE

    def test_missing_argument(self):
        assert main(["run"]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.cfg")]) == EXIT_IO

    def test_bad_config_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("youngs_modulus = 1\n")
        assert main(["run", str(path)]) == EXIT_USAGE

    def test_surrogate_required_for_mixing(self, tmp_path):
        path = tmp_path / "pf.cfg"
        path.write_text(BAR_CONFIG.replace("mode = full", "mode = phase-field"))
        assert main(["run", str(path), "--output-dir", str(tmp_path / "out")]) == EXIT_USAGE


class TestMesh:
    def test_rectangle(self, tmp_path):
        out = tmp_path / "rect.mesh"
        assert main(["mesh", "--rectangle", "2", "1", "2.0", "1.0", "--out", str(out)]) == EXIT_OK
        assert read_mesh(out).n_elements == 4

    def test_experiment(self, tmp_path):
        out = tmp_path / "dogbone.mesh"
        assert main(["mesh", "--experiment", "dogbone", "--out", str(out)]) == EXIT_OK
        assert read_mesh(out).n_elements == 2 * 40 * 8

    def test_rectangle_and_experiment_exclusive(self, tmp_path):
        argv = ["mesh", "--experiment", "dogbone", "--rectangle", "1", "1", "1", "1", "--out", str(tmp_path / "m")]
        assert main(argv) == EXIT_USAGE


class TestTraining:
    def test_gen_data_then_train(self, tmp_path):
        data = tmp_path / "data.csv"
        surrogate = tmp_path / "surrogate.json"
        assert main(["gen-data", "--curves", "2", "--steps", "5", "--seed", "3", "--out", str(data)]) == EXIT_OK
        assert len(read_dataset(data)) == 10
        assert main(["train", "--data", str(data), "--restarts", "1", "--out", str(surrogate)]) == EXIT_OK
        assert read_surrogate(surrogate).gp_x.n == 10

    def test_train_missing_data(self, tmp_path):
        argv = ["train", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "s.json")]
        assert main(argv) == EXIT_IO


class TestRun:
    def test_full_run_writes_artifacts(self, bar_cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["run", str(bar_cfg), "--output-dir", str(out)]) == EXIT_OK
        metrics = read_csv(out / "metrics.csv")
        assert metrics.solved
        assert metrics.fu_curve.u[-1] == pytest.approx(0.03)
        assert (out / "summary.json").exists()
        assert (out / "final.vtk").read_text().startswith("# vtk DataFile Version 3.0")

    def test_unsolved_run(self, bar_cfg, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "newton_max_iter", 0)
        out = tmp_path / "out"
        assert main(["run", str(bar_cfg), "--output-dir", str(out)]) == EXIT_UNSOLVED
        metrics = read_csv(out / "metrics.csv")
        assert not metrics.solved
        assert not metrics.accepted
        assert (out / "metrics.csv").read_text().splitlines()[-1] == "# solved: false"

    def test_unfactorisable_surrogate(self, tmp_path, monkeypatch):
        # Repeated inputs with negligible noise give an exactly singular covariance
        component = {"kernel": {"sigma_f": 1.0, "length_scale": 1.0, "sigma_n": 1e-9}, "y": [0.0, 1.0, 2.0]}
        doc = {"E": 3130.0, "nu": 0.37, "X": [[0.01, 0.0, 0.0]] * 3}
        doc["components"] = {name: component for name in ("sxx", "syy", "sxy")}
        surrogate = tmp_path / "surrogate.json"
        surrogate.write_text(json.dumps(doc))
        config = tmp_path / "pf.cfg"
        config.write_text(BAR_CONFIG.replace("mode = full", f"mode = phase-field\nsurrogate = {surrogate}"))
        monkeypatch.setattr(settings, "gp_jitter_max", 1e-12)
        assert main(["run", str(config), "--output-dir", str(tmp_path / "out")]) == EXIT_IO


def linear_run(stiffness):
    metrics = RunMetrics()
    for k in (1, 2):
        u = 0.01 * k
        metrics.attempts.append(AttemptRecord(k, u, stiffness * u, 0.01, True, 1, k, 0, 1, 0, 0))
        metrics.fu_curve.append(u, stiffness * u)
    metrics.solved = True
    return metrics


class TestCompare:
    def test_prints_errors(self, tmp_path, capsys):
        ref, res = tmp_path / "ref.csv", tmp_path / "res.csv"
        write_csv(linear_run(100.0), ref)
        write_csv(linear_run(150.0), res)
        assert main(["compare", str(ref), str(res)]) == EXIT_OK
        path, error = capsys.readouterr().out.strip().split("\t")
        assert path == str(res)
        assert float(error) == pytest.approx(0.5 + 1.0)

    def test_empty_reference(self, tmp_path):
        ref = tmp_path / "ref.csv"
        write_csv(RunMetrics(), ref)
        assert main(["compare", str(ref), str(ref)]) == EXIT_USAGE
