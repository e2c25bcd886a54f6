"""Surrogate constitutive models: GP corrections to linear elasticity, and an HF oracle."""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from app.schemas.run import MaterialParams
from app.schemas.surrogate import (
    SURROGATE_FORMAT_VERSION,
    ComponentFile,
    KernelParams,
    SurrogateFile,
)
from app.services.fem import ConstitutiveResponse
from app.services.material import PlasticState, VonMisesMaterial, elastic_matrix
from app.services.surrogate.dataset import TrainingDataset
from app.services.surrogate.gp import GPModel, Kernel, fit, optimize_hyperparameters, predict, predict_mean

logger = logging.getLogger(__name__)

COMPONENTS = ("sxx", "syy", "sxy")


class Surrogate(ABC):
    """A history-free constitutive model with a predictive uncertainty."""

    @abstractmethod
    def respond(self, strain: NDArray[np.float64], ips: NDArray[np.int64]) -> ConstitutiveResponse:
        """Stress and tangent at the given strains; ``ips`` are their global IP indices."""
        ...

    @abstractmethod
    def uncertainty(self, strain: NDArray[np.float64]) -> NDArray[np.float64]:
        """Driving force U per strain row (MPa)."""
        ...

    def commit(self) -> None:  # noqa: B027
        """Accept the last evaluated state. Stateless surrogates ignore it."""

    def rollback(self) -> None:  # noqa: B027
        """Discard anything evaluated since the last commit."""


@dataclass
class SurrogateSet(Surrogate):
    gp_x: GPModel
    gp_y: GPModel
    gp_xy: GPModel
    D_e: NDArray[np.float64]

    def __post_init__(self) -> None:
        if not (np.array_equal(self.gp_x.X, self.gp_y.X) and np.array_equal(self.gp_x.X, self.gp_xy.X)):
            raise ValueError("all three components must share the training inputs")

    @property
    def models(self) -> tuple[GPModel, GPModel, GPModel]:
        return self.gp_x, self.gp_y, self.gp_xy

    def respond(self, strain: NDArray[np.float64], ips: NDArray[np.int64] | None = None) -> ConstitutiveResponse:
        strain = np.atleast_2d(strain)
        stress = strain @ self.D_e.T
        tangent = np.broadcast_to(self.D_e, (strain.shape[0], 3, 3)).copy()
        for i, model in enumerate(self.models):
            mean, grad = predict_mean(model, strain)
            stress[:, i] += mean
            tangent[:, i, :] += grad
        return ConstitutiveResponse(stress=stress, tangent=tangent)

    def uncertainty(self, strain: NDArray[np.float64]) -> NDArray[np.float64]:
        strain = np.atleast_2d(strain)
        var = np.column_stack([predict(model, strain)[1] for model in self.models])
        return np.sqrt(var.max(axis=1))


class ElasticSurrogate(Surrogate):
    """Linear elasticity with zero uncertainty.

    Stands in for a trained surrogate in full-model runs, where every IP
    takes the HF response and the surrogate output carries zero weight.
    """

    def __init__(self, D_e: NDArray[np.float64]):
        self.D_e = D_e

    def respond(self, strain: NDArray[np.float64], ips: NDArray[np.int64]) -> ConstitutiveResponse:
        strain = np.atleast_2d(strain)
        return ConstitutiveResponse(
            stress=strain @ self.D_e.T,
            tangent=np.broadcast_to(self.D_e, (strain.shape[0], 3, 3)).copy(),
        )

    def uncertainty(self, strain: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.zeros(np.atleast_2d(strain).shape[0])


def surrogate_response(
    surrogates: SurrogateSet, strain: NDArray[np.float64]
) -> tuple[ConstitutiveResponse, NDArray[np.float64]]:
    return surrogates.respond(strain), surrogates.uncertainty(strain)


class HighFidelityAdapter(Surrogate):
    """Returns the HF response with zero uncertainty.

    Keeps its own plastic state per IP; the mixture commits or rolls it back
    together with its own records.
    """

    def __init__(self, material: VonMisesMaterial, n_ips: int):
        self.material = material
        self.D_e = material.D_e
        self.state = PlasticState.virgin(n_ips)
        self._tentative = self.state.copy()

    def respond(self, strain: NDArray[np.float64], ips: NDArray[np.int64]) -> ConstitutiveResponse:
        response, new_state = self.material.update_stress(strain, self.state.take(ips))
        self._tentative.put(ips, new_state)
        return response

    def uncertainty(self, strain: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.zeros(np.atleast_2d(strain).shape[0])

    def commit(self) -> None:
        self.state = self._tentative.copy()

    def rollback(self) -> None:
        self._tentative = self.state.copy()


# ---------------------------------------------------------------------------
# Training and persistence
# ---------------------------------------------------------------------------


def correction_targets(dataset: TrainingDataset, D_e: NDArray[np.float64]) -> NDArray[np.float64]:
    return dataset.stress - dataset.strain @ D_e.T


def train_surrogate(
    dataset: TrainingDataset,
    params: MaterialParams,
    seed: int = 0,
    restarts: int | None = None,
) -> SurrogateSet:
    """Optimise and fit one GP per stress component on corrections to D_e·ε."""
    D_e = elastic_matrix(params.E, params.nu)
    X = dataset.strain
    targets = correction_targets(dataset, D_e)
    logger.info("Training surrogate on %d samples from %d curves", len(dataset), dataset.n_curves)

    def train_component(i: int) -> GPModel:
        result = optimize_hyperparameters(X, targets[:, i], seed=seed + i, restarts=restarts)
        return fit(X, targets[:, i], result.kernel)

    with ThreadPoolExecutor(max_workers=3) as pool:
        gp_x, gp_y, gp_xy = pool.map(train_component, range(3))
    return SurrogateSet(gp_x=gp_x, gp_y=gp_y, gp_xy=gp_xy, D_e=D_e)


def write_surrogate(surrogates: SurrogateSet, params: MaterialParams, path: Path | str) -> None:
    doc = SurrogateFile(
        E=params.E,
        nu=params.nu,
        X=[tuple(row) for row in surrogates.gp_x.X.tolist()],
        components={
            name: ComponentFile(
                kernel=KernelParams(
                    sigma_f=model.kernel.sigma_f,
                    length_scale=model.kernel.length_scale,
                    sigma_n=model.kernel.sigma_n,
                ),
                y=model.y.tolist(),
            )
            for name, model in zip(COMPONENTS, surrogates.models, strict=True)
        },
    )
    Path(path).write_text(doc.model_dump_json(indent=1), encoding="utf-8")
    logger.info("Surrogate written to %s", path)


def read_surrogate(path: Path | str) -> SurrogateSet:
    doc = SurrogateFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    if doc.format_version != SURROGATE_FORMAT_VERSION:
        raise ValueError(f"unsupported surrogate format version {doc.format_version}")
    missing = set(COMPONENTS) - doc.components.keys()
    if missing:
        raise ValueError(f"surrogate file lacks components: {sorted(missing)}")
    X = np.array(doc.X, dtype=np.float64)
    models = []
    for name in COMPONENTS:
        comp = doc.components[name]
        kernel = Kernel(comp.kernel.sigma_f, comp.kernel.length_scale, comp.kernel.sigma_n)
        models.append(fit(X, np.array(comp.y), kernel))
    return SurrogateSet(gp_x=models[0], gp_y=models[1], gp_xy=models[2], D_e=elastic_matrix(doc.E, doc.nu))
