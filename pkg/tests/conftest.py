"""Shared fixtures: materials, small meshes, cheap surrogates and run configs."""

import numpy as np
import pytest

from app.schemas.run import (
    DogboneParams,
    MaterialParams,
    MixingMode,
    MixtureConfig,
    RunConfig,
    StaggerConfig,
    StepperConfig,
)
from app.services.material import VonMisesMaterial, elastic_matrix
from app.services.mesh import Mesh, generate_rectangle
from app.services.surrogate.dataset import TrainingDataset, generate_training_data
from app.services.surrogate.gp import Kernel, fit
from app.services.surrogate.surrogate import SurrogateSet, correction_targets


@pytest.fixture
def material_params() -> MaterialParams:
    return MaterialParams()


@pytest.fixture
def material(material_params: MaterialParams) -> VonMisesMaterial:
    return VonMisesMaterial(material_params)


@pytest.fixture
def unit_square() -> Mesh:
    """Two triangles on the unit square."""
    return generate_rectangle(1, 1, 1.0, 1.0)


@pytest.fixture
def small_dataset(material: VonMisesMaterial) -> TrainingDataset:
    return generate_training_data(material, n_curves=4, seed=3)


def fixed_kernel_surrogate(
    dataset: TrainingDataset,
    params: MaterialParams,
    kernel: Kernel = Kernel(sigma_f=20.0, length_scale=0.03, sigma_n=0.5),
) -> SurrogateSet:
    """Surrogate fitted with fixed hyperparameters (no optimisation)."""
    D_e = elastic_matrix(params.E, params.nu)
    targets = correction_targets(dataset, D_e)
    models = [fit(dataset.strain, targets[:, i], kernel) for i in range(3)]
    return SurrogateSet(gp_x=models[0], gp_y=models[1], gp_xy=models[2], D_e=D_e)


@pytest.fixture
def small_surrogate(small_dataset: TrainingDataset, material_params: MaterialParams) -> SurrogateSet:
    return fixed_kernel_surrogate(small_dataset, material_params)


def bar_config(mode: MixingMode = MixingMode.FULL, **overrides: object) -> RunConfig:
    """A coarse straight bar (no waist) pulled into the plastic range in a few steps."""
    base: dict[str, object] = {
        "experiment": "dogbone",
        "dogbone": DogboneParams(length=4.0, height=1.0, waist_height=1.0, waist_length=2.0, nx=4, ny=2),
        "mixture": MixtureConfig(mode=mode, b=1.0),
        "stepper": StepperConfig(du0=0.01, u_target=0.05),
        "stagger": StaggerConfig(k_max=3),
        "vtk": False,
    }
    base.update(overrides)
    return RunConfig.model_validate(base)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
