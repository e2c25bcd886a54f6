"""Tests for the run ledger, F-u errors and result files."""

import json
import logging
import math

import numpy as np
import pytest

from app.services.results import (
    CSV_HEADER,
    AttemptRecord,
    FailureKind,
    FUCurve,
    FUSupportError,
    RunMetrics,
    field_stress_error,
    fu_error,
    read_csv,
    reference_grid,
    stress_error_history,
    write_csv,
    write_summary,
)


def attempt(step, u, F, du, accepted=True, kind=FailureKind.NONE, hf=0, nr=0):
    return AttemptRecord(
        step=step,
        u=u,
        F=F,
        du=du,
        accepted=accepted,
        stagger_iters=1,
        nr_iters_cum=nr,
        hf_evals_cum=hf,
        n_ips_gp=4,
        n_ips_mixed=1,
        n_ips_hf=1,
        failure_kind=kind,
    )


@pytest.fixture
def metrics():
    m = RunMetrics()
    m.attempts = [
        attempt(1, 0.01, 12.5, 0.01, hf=6, nr=3),
        attempt(2, 0.02, math.nan, 0.01, accepted=False, kind=FailureKind.MECHANICAL, hf=9, nr=28),
        attempt(3, 0.015, 14.25, 0.005, hf=15, nr=31),
    ]
    m.fu_curve.append(0.01, 12.5)
    m.fu_curve.append(0.015, 14.25)
    m.unloading_counts = [0, 2]
    m.solved = True
    return m


class TestLedger:
    def test_views_follow_accepted_steps(self, metrics):
        assert [a.step for a in metrics.accepted] == [1, 3]
        assert metrics.hf_evals_cum == [6, 15]
        assert metrics.nr_iters_cum == [3, 31]
        assert metrics.phase_counts == [(4, 1, 1), (4, 1, 1)]
        assert metrics.total_hf_evals == 15
        assert metrics.total_nr_iters == 31

    def test_curve_starts_at_origin(self):
        assert RunMetrics().fu_curve.u == [0.0]

    def test_curve_must_increase(self):
        curve = FUCurve([0.0], [0.0])
        curve.append(0.1, 1.0)
        with pytest.raises(ValueError):
            curve.append(0.1, 2.0)


class TestFUError:
    def test_reference_grid(self):
        np.testing.assert_allclose(reference_grid(0.001, 0.005), [0.001, 0.002, 0.003, 0.004, 0.005])

    def test_identical_curves(self):
        curve = FUCurve([0.0, 1.0, 2.0], [0.0, 3.0, 4.0])
        assert fu_error(curve, curve, np.array([0.5, 1.0, 1.5])) == 0.0

    def test_known_difference(self):
        curve = FUCurve([0.0, 2.0], [0.0, 4.0])
        reference = FUCurve([0.0, 2.0], [0.0, 2.0])
        assert fu_error(curve, reference, np.array([1.0, 2.0])) == pytest.approx(3.0)

    def test_interpolates_between_steps(self):
        curve = FUCurve([0.0, 0.5, 2.0], [0.0, 1.0, 1.0])
        reference = FUCurve([0.0, 2.0], [0.0, 0.0])
        assert fu_error(curve, reference, np.array([0.25, 1.0])) == pytest.approx(0.5 + 1.0)

    def test_truncated_support_warns(self, caplog):
        curve = FUCurve([0.0, 1.0], [0.0, 1.0])
        reference = FUCurve([0.0, 2.0], [0.0, 2.0])
        with caplog.at_level(logging.WARNING):
            error = fu_error(curve, reference, np.array([1.0, 2.0]))
        assert error == 0.0
        assert "truncated" in caplog.text

    def test_disjoint_support(self):
        curve = FUCurve([2.0, 3.0], [1.0, 1.0])
        reference = FUCurve([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(FUSupportError):
            fu_error(curve, reference, np.array([0.5, 2.5]))


class TestFieldError:
    def test_mean_absolute_difference(self):
        a = np.zeros((2, 3))
        b = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        assert field_stress_error(a, b) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            field_stress_error(np.zeros((2, 3)), np.zeros((3, 3)))

    def test_history_matches_common_displacements(self):
        run = {0.1: np.ones((2, 3)), 0.15: np.ones((2, 3)), 0.2: np.full((2, 3), 2.0)}
        reference = {0.1: np.zeros((2, 3)), 0.2: np.zeros((2, 3))}
        assert stress_error_history(run, reference) == [(0.1, 1.0), (0.2, 2.0)]


class TestFiles:
    def test_csv_round_trip(self, metrics, tmp_path):
        path = tmp_path / "metrics.csv"
        write_csv(metrics, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert lines[-1] == "# solved: true"

        loaded = read_csv(path)
        assert loaded.solved
        assert len(loaded.attempts) == 3
        assert math.isnan(loaded.attempts[1].F)
        assert loaded.attempts[1].failure_kind == FailureKind.MECHANICAL
        assert loaded.attempts[2] == metrics.attempts[2]
        assert loaded.fu_curve.u == metrics.fu_curve.u
        assert loaded.fu_curve.F == metrics.fu_curve.F

    def test_empty_run_is_header_only(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_csv(RunMetrics(), path)
        assert path.read_text().splitlines() == [",".join(CSV_HEADER)]

    def test_rejects_foreign_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("curve,step\n1,2\n")
        with pytest.raises(ValueError):
            read_csv(path)

    def test_summary(self, metrics, tmp_path):
        path = tmp_path / "summary.json"
        write_summary(metrics, {"experiment": "dogbone"}, path)
        summary = json.loads(path.read_text())
        assert summary["solved"] is True
        assert summary["accepted_steps"] == 2
        assert summary["attempted_steps"] == 3
        assert summary["peak_force"] == 14.25
        assert summary["failures"] == {"mechanical": 1, "phasefield": 0}
        assert summary["unloading_ips_total"] == 2
        assert summary["config"]["experiment"] == "dogbone"
