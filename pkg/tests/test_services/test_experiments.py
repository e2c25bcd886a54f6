"""Tests for the experiment geometries and the tension load case."""

import numpy as np
import pytest

from app.schemas.run import ConfigError, DogboneParams, HolePlateParams, RunConfig
from app.services.experiments import LoadCase, build_experiment_mesh, experiment_names
from app.services.mesh import generate_rectangle, promote_to_t6, write_mesh


class TestLoadCase:
    def test_tension_dofs(self):
        mesh = promote_to_t6(generate_rectangle(2, 1, 2.0, 1.0))
        load = LoadCase.tension(mesh)
        left, right = mesh.boundary("left"), mesh.boundary("right")
        assert load.fixed_dofs.size == 2 * left.size
        np.testing.assert_array_equal(load.loaded_dofs, np.sort(2 * right))

        bc = load.bc(0.05)
        assert bc.dofs.size == bc.values.size
        loaded = np.isin(bc.dofs, load.loaded_dofs)
        np.testing.assert_allclose(bc.values[loaded], 0.05)
        np.testing.assert_allclose(bc.values[~loaded], 0.0)


class TestGeometries:
    def test_registry(self):
        assert experiment_names() == ["custom", "dogbone", "notched_plate", "plate_with_holes"]

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            build_experiment_mesh(RunConfig(experiment="cantilever"))

    def test_dogbone_waist(self):
        config = RunConfig(dogbone=DogboneParams(length=10.0, height=2.0, waist_height=1.0, waist_length=4.0, nx=20, ny=4))
        mesh = build_experiment_mesh(config)
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        at_mid = np.isclose(x, 5.0)
        at_end = np.isclose(x, 0.0)
        assert np.ptp(y[at_mid]) == pytest.approx(1.0)
        assert np.ptp(y[at_end]) == pytest.approx(2.0)
        assert mesh.areas().sum() < 20.0

    def test_notched_plate(self):
        mesh = build_experiment_mesh(RunConfig(experiment="notched_plate"))
        full = 1.0
        notches = 2 * 0.05 * 0.25
        assert mesh.areas().sum() == pytest.approx(full - notches, rel=1e-9)
        centroids = mesh.centroids()
        in_top_notch = (np.abs(centroids[:, 0] - 0.35) < 0.025) & (centroids[:, 1] > 0.75)
        assert not in_top_notch.any()

    def test_plate_with_holes(self):
        config = RunConfig(
            experiment="plate_with_holes",
            plate_with_holes=HolePlateParams(nx=40, ny=20),
        )
        mesh = build_experiment_mesh(config)
        centroids = mesh.centroids()
        for cx, cy in config.plate_with_holes.centers:
            assert np.all(np.hypot(centroids[:, 0] - cx, centroids[:, 1] - cy) >= 0.12)
        assert mesh.boundary("left").size > 0 and mesh.boundary("right").size > 0

    def test_hole_outside_plate(self):
        config = RunConfig(experiment="plate_with_holes", plate_with_holes=HolePlateParams(centers=((0.05, 0.5),)))
        with pytest.raises(ConfigError):
            build_experiment_mesh(config)

    def test_custom_mesh(self, tmp_path):
        path = tmp_path / "square.mesh"
        write_mesh(generate_rectangle(2, 2, 1.0, 1.0), path)
        mesh = build_experiment_mesh(RunConfig(experiment="custom", mesh=path))
        assert mesh.n_elements == 8

    def test_custom_needs_mesh(self):
        with pytest.raises(ConfigError):
            build_experiment_mesh(RunConfig(experiment="custom"))
