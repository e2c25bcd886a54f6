"""Test geometries and the tension load case they share."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from app.schemas.run import ConfigError, RunConfig
from app.services.fem import DirichletBC
from app.services.mesh import Mesh, carve, generate_grid, graded_coordinates, map_nodes, read_mesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoadCase:
    """Left edge clamped, right edge pulled in x."""

    fixed_dofs: NDArray[np.int64]
    loaded_dofs: NDArray[np.int64]

    @classmethod
    def tension(cls, mesh: Mesh) -> "LoadCase":
        left, right = mesh.boundary("left"), mesh.boundary("right")
        fixed = np.concatenate([2 * left, 2 * left + 1])
        return cls(fixed_dofs=np.sort(fixed).astype(np.int64), loaded_dofs=np.sort(2 * right).astype(np.int64))

    def bc(self, displacement: float) -> DirichletBC:
        dofs = np.concatenate([self.fixed_dofs, self.loaded_dofs])
        values = np.concatenate([np.zeros(self.fixed_dofs.size), np.full(self.loaded_dofs.size, displacement)])
        return DirichletBC(dofs=dofs, values=values)


class BaseExperiment(ABC):
    @abstractmethod
    def build_mesh(self, config: RunConfig) -> Mesh:
        """The vertex (T3) mesh for this experiment."""
        ...


class DogboneExperiment(BaseExperiment):
    """Rectangle whose mid-length section narrows smoothly to the waist height."""

    def build_mesh(self, config: RunConfig) -> Mesh:
        p = config.dogbone
        if not 0 < p.waist_height <= p.height or not 0 < p.waist_length <= p.length:
            raise ConfigError("dogbone", "waist must fit inside the specimen")
        xs = np.linspace(0.0, p.length, p.nx + 1)
        ys = np.linspace(0.0, p.height, p.ny + 1)
        mid_x, mid_y, half = 0.5 * p.length, 0.5 * p.height, 0.5 * p.waist_length
        depth = 1.0 - p.waist_height / p.height

        def squeeze(nodes: NDArray[np.float64]) -> NDArray[np.float64]:
            x, y = nodes[:, 0], nodes[:, 1]
            inside = np.abs(x - mid_x) < half
            scale = np.where(inside, 1.0 - 0.5 * depth * (1.0 + np.cos(np.pi * (x - mid_x) / half)), 1.0)
            nodes[:, 1] = mid_y + (y - mid_y) * scale
            return nodes

        return map_nodes(generate_grid(xs, ys), squeeze)


def _merge_coordinates(base: NDArray[np.float64], required: list[float], min_gap: float) -> NDArray[np.float64]:
    """Insert ``required`` coordinates, dropping base points closer than ``min_gap`` to them."""
    req = np.array(sorted(required))
    keep = np.array([np.all(np.abs(req - v) >= min_gap) for v in base])
    return np.unique(np.concatenate([base[keep], req]))


class NotchedPlateExperiment(BaseExperiment):
    """Square with a notch in the top edge and one in the bottom edge, diagonally offset."""

    def build_mesh(self, config: RunConfig) -> Mesh:
        p = config.notched_plate
        w, d, s = p.notch_width, p.notch_depth, p.size
        top_x, bottom_x = p.notch_offset, s - p.notch_offset
        if not (w < p.notch_offset and d < 0.5 * s):
            raise ConfigError("notched_plate", "notches must stay inside the plate")

        band_x = (min(top_x, bottom_x) - w, max(top_x, bottom_x) + w)
        xs = graded_coordinates(s, p.fine, p.coarse, band_x)
        xs = _merge_coordinates(
            xs, [0.0, s, top_x - w / 2, top_x + w / 2, bottom_x - w / 2, bottom_x + w / 2], 0.5 * p.fine
        )
        ys = graded_coordinates(s, p.fine, p.coarse, (d - w, s - d + w))
        ys = _merge_coordinates(ys, [0.0, s, d, s - d], 0.5 * p.fine)

        def keep(x: float, y: float) -> bool:
            in_top = abs(x - top_x) < w / 2 and y > s - d
            in_bottom = abs(x - bottom_x) < w / 2 and y < d
            return not (in_top or in_bottom)

        return carve(generate_grid(xs, ys), keep)


class PlateWithHolesExperiment(BaseExperiment):
    def build_mesh(self, config: RunConfig) -> Mesh:
        p = config.plate_with_holes
        for cx, cy in p.centers:
            if not (p.radius < cx < p.width - p.radius and p.radius < cy < p.height - p.radius):
                raise ConfigError("plate_with_holes", f"hole at ({cx}, {cy}) cuts the plate edge")
        xs = np.linspace(0.0, p.width, p.nx + 1)
        ys = np.linspace(0.0, p.height, p.ny + 1)

        def keep(x: float, y: float) -> bool:
            return all(math.hypot(x - cx, y - cy) >= p.radius for cx, cy in p.centers)

        return carve(generate_grid(xs, ys), keep)


class CustomMeshExperiment(BaseExperiment):
    def build_mesh(self, config: RunConfig) -> Mesh:
        if config.mesh is None:
            raise ConfigError("mesh", "the custom experiment needs a mesh file")
        return read_mesh(config.mesh)


# Experiment name -> implementation
_EXPERIMENT_REGISTRY: dict[str, BaseExperiment] = {
    "dogbone": DogboneExperiment(),
    "notched_plate": NotchedPlateExperiment(),
    "plate_with_holes": PlateWithHolesExperiment(),
    "custom": CustomMeshExperiment(),
}


def experiment_names() -> list[str]:
    return sorted(_EXPERIMENT_REGISTRY)


def build_experiment_mesh(config: RunConfig) -> Mesh:
    impl = _EXPERIMENT_REGISTRY.get(config.experiment)
    if impl is None:
        raise ConfigError("experiment", f"unknown experiment {config.experiment!r}; choose from {experiment_names()}")
    if config.mesh is not None and config.experiment != "custom":
        logger.warning("Ignoring mesh file %s for experiment %s", config.mesh, config.experiment)
    mesh = impl.build_mesh(config)
    logger.info("Experiment %s: %d nodes, %d elements", config.experiment, mesh.n_nodes, mesh.n_elements)
    return mesh
