"""Tests for training data generation, the GP surrogate set and the HF adapter."""

import json

import numpy as np
import pytest

from app.services.material import PlasticState, elastic_matrix, von_mises
from app.services.surrogate.dataset import (
    CSV_HEADER,
    curve_direction,
    generate_training_data,
    read_dataset,
    write_dataset,
)
from app.services.surrogate.gp import Kernel, fit
from app.services.surrogate.surrogate import (
    ElasticSurrogate,
    HighFidelityAdapter,
    SurrogateSet,
    read_surrogate,
    surrogate_response,
    train_surrogate,
    write_surrogate,
)


class TestTrainingData:
    def test_shapes_and_ids(self, material):
        data = generate_training_data(material, n_curves=3, seed=7, n_steps=10, max_norm=0.05)
        assert len(data) == 30
        assert data.n_curves == 3
        np.testing.assert_array_equal(data.step[:10], np.arange(1, 11))
        np.testing.assert_array_equal(np.unique(data.curve), [0, 1, 2])

    def test_curves_are_monotone_rays(self, material):
        data = generate_training_data(material, n_curves=2, seed=7, n_steps=10, max_norm=0.05)
        norms = np.linalg.norm(data.strain[:10], axis=1)
        np.testing.assert_allclose(norms, 0.005 * np.arange(1, 11))
        direction = data.strain[9] / norms[9]
        np.testing.assert_allclose(direction, curve_direction(7, 0, 0))

    def test_deterministic_per_seed(self, material):
        a = generate_training_data(material, n_curves=2, seed=11, n_steps=5)
        b = generate_training_data(material, n_curves=2, seed=11, n_steps=5)
        c = generate_training_data(material, n_curves=2, seed=12, n_steps=5)
        np.testing.assert_array_equal(a.strain, b.strain)
        np.testing.assert_array_equal(a.stress, b.stress)
        assert not np.array_equal(a.strain, c.strain)

    def test_stresses_are_admissible(self, material):
        data = generate_training_data(material, n_curves=4, seed=1, n_steps=10)
        assert np.all(von_mises(data.stress) <= float(material.yield_stress(1.0)) + 1e-6)

    def test_subset_takes_first_curves(self, small_dataset):
        sub = small_dataset.subset(2)
        assert sub.n_curves == 2
        np.testing.assert_array_equal(np.unique(sub.curve), [0, 1])

    def test_rejects_zero_curves(self, material):
        with pytest.raises(ValueError):
            generate_training_data(material, n_curves=0, seed=0)

    def test_csv_is_exact(self, small_dataset, tmp_path):
        path = tmp_path / "data.csv"
        write_dataset(small_dataset, path)
        assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
        loaded = read_dataset(path)
        np.testing.assert_array_equal(loaded.strain, small_dataset.strain)
        np.testing.assert_array_equal(loaded.stress, small_dataset.stress)
        np.testing.assert_array_equal(loaded.curve, small_dataset.curve)

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_dataset(path)


class TestSurrogateSet:
    def test_tangent_matches_finite_differences(self, small_surrogate):
        strain = np.array([[0.004, -0.001, 0.002]])
        tangent = small_surrogate.respond(strain).tangent[0]
        h = 1e-7
        fd = np.empty((3, 3))
        for j in range(3):
            step = np.zeros((1, 3))
            step[0, j] = h
            fd[:, j] = (
                small_surrogate.respond(strain + step).stress[0] - small_surrogate.respond(strain - step).stress[0]
            ) / (2 * h)
        np.testing.assert_allclose(tangent, fd, rtol=1e-5, atol=1e-2)

    def test_far_field_is_elastic_and_uncertain(self, small_surrogate):
        strain = np.array([[1.0, 1.0, 1.0]])
        response, U = surrogate_response(small_surrogate, strain)
        np.testing.assert_allclose(response.stress[0], small_surrogate.D_e @ strain[0], atol=1e-9)
        assert U[0] == pytest.approx(20.0)

    def test_uncertainty_lower_near_data(self, small_surrogate, small_dataset):
        near = small_surrogate.uncertainty(small_dataset.strain[:5])
        far = small_surrogate.uncertainty(np.full((1, 3), 0.5))
        assert near.max() < far[0]

    def test_components_must_share_inputs(self, small_surrogate):
        gp_x = small_surrogate.gp_x
        other = fit(gp_x.X + 1e-3, gp_x.y, gp_x.kernel)
        with pytest.raises(ValueError):
            SurrogateSet(gp_x=gp_x, gp_y=other, gp_xy=gp_x, D_e=small_surrogate.D_e)

    def test_file_round_trip(self, small_surrogate, material_params, tmp_path):
        path = tmp_path / "surrogate.json"
        write_surrogate(small_surrogate, material_params, path)
        loaded = read_surrogate(path)
        query = np.array([[0.003, 0.001, -0.002], [0.02, -0.01, 0.0]])
        np.testing.assert_allclose(loaded.respond(query).stress, small_surrogate.respond(query).stress, rtol=1e-10)
        np.testing.assert_allclose(loaded.uncertainty(query), small_surrogate.uncertainty(query), rtol=1e-8)

    def test_file_version_checked(self, small_surrogate, material_params, tmp_path):
        path = tmp_path / "surrogate.json"
        write_surrogate(small_surrogate, material_params, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError):
            read_surrogate(path)

    def test_training(self, material, material_params):
        data = generate_training_data(material, n_curves=2, seed=5, n_steps=5)
        surrogates = train_surrogate(data, material_params, seed=0, restarts=1)
        assert surrogates.gp_x.n == 10
        np.testing.assert_allclose(surrogates.D_e, elastic_matrix(material_params.E, material_params.nu))
        assert isinstance(surrogates.gp_y.kernel, Kernel)


class TestHighFidelityAdapter:
    def test_matches_material(self, material):
        adapter = HighFidelityAdapter(material, n_ips=2)
        strain = np.array([[0.01, -0.002, 0.004], [1e-4, 0.0, 0.0]])
        expected, _ = material.update_stress(strain, PlasticState.virgin(2))
        response = adapter.respond(strain, np.arange(2))
        np.testing.assert_allclose(response.stress, expected.stress)
        assert not adapter.uncertainty(strain).any()

    def test_commit_and_rollback(self, material):
        adapter = HighFidelityAdapter(material, n_ips=1)
        strain = np.array([[0.01, -0.002, 0.004]])
        adapter.respond(strain, np.arange(1))
        adapter.rollback()
        assert adapter.state.eps_p_eq[0] == 0.0
        adapter.respond(strain, np.arange(1))
        adapter.commit()
        assert adapter.state.eps_p_eq[0] > 0.0


class TestElasticSurrogate:
    def test_linear_response_without_uncertainty(self, material):
        surrogate = ElasticSurrogate(material.D_e)
        strain = np.array([[0.01, -0.002, 0.004], [1e-4, 0.0, 0.0]])
        response = surrogate.respond(strain, np.arange(2))
        np.testing.assert_allclose(response.stress, strain @ material.D_e.T)
        np.testing.assert_allclose(response.tangent, np.broadcast_to(material.D_e, (2, 3, 3)))
        assert not surrogate.uncertainty(strain).any()
