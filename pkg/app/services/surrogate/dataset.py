"""Training curves: monotone HF strain paths in random directions."""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from app.services.material import PlasticState, ReturnMappingError, VonMisesMaterial

logger = logging.getLogger(__name__)

CSV_HEADER = ("curve", "step", "exx", "eyy", "gxy", "sxx", "syy", "sxy")
MAX_REDRAWS = 10


@dataclass
class TrainingDataset:
    strain: NDArray[np.float64]  # (n, 3)
    stress: NDArray[np.float64]  # (n, 3)
    curve: NDArray[np.int64]
    step: NDArray[np.int64]
    seed: int | None = None

    def __len__(self) -> int:
        return int(self.curve.size)

    @property
    def n_curves(self) -> int:
        return int(np.unique(self.curve).size)

    def subset(self, n_curves: int) -> "TrainingDataset":
        """The first ``n_curves`` curves, in id order."""
        keep = np.isin(self.curve, np.unique(self.curve)[:n_curves])
        return TrainingDataset(self.strain[keep], self.stress[keep], self.curve[keep], self.step[keep], self.seed)


def curve_direction(seed: int, curve: int, attempt: int) -> NDArray[np.float64]:
    """Uniform direction on the unit sphere of (εxx, εyy, γxy)."""
    rng = np.random.default_rng([seed, curve, attempt])
    d = rng.standard_normal(3)
    return d / np.linalg.norm(d)


def trace_curve(
    material: VonMisesMaterial, direction: NDArray[np.float64], n_steps: int, max_norm: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    strains = np.outer(np.arange(1, n_steps + 1) * (max_norm / n_steps), direction)
    stresses = np.empty_like(strains)
    state = PlasticState.virgin(1)
    for k, strain in enumerate(strains):
        response, state = material.update_stress(strain[None, :], state)
        stresses[k] = response.stress[0]
    return strains, stresses


def generate_training_data(
    material: VonMisesMaterial,
    n_curves: int,
    seed: int,
    n_steps: int = 20,
    max_norm: float = 0.10,
) -> TrainingDataset:
    if n_curves < 1:
        raise ValueError("n_curves must be at least 1")
    strains, stresses, curves, steps = [], [], [], []
    for c in range(n_curves):
        for attempt in range(MAX_REDRAWS):
            direction = curve_direction(seed, c, attempt)
            try:
                eps, sig = trace_curve(material, direction, n_steps, max_norm)
                break
            except ReturnMappingError as exc:
                logger.warning("Curve %d attempt %d failed (%s), redrawing", c, attempt, exc)
        else:
            raise ReturnMappingError(0, f"curve {c} failed after {MAX_REDRAWS} redraws")
        strains.append(eps)
        stresses.append(sig)
        curves.append(np.full(n_steps, c, dtype=np.int64))
        steps.append(np.arange(1, n_steps + 1, dtype=np.int64))
    logger.info("Generated %d curves (%d samples, seed %d)", n_curves, n_curves * n_steps, seed)
    return TrainingDataset(
        np.vstack(strains), np.vstack(stresses), np.concatenate(curves), np.concatenate(steps), seed
    )


def write_dataset(dataset: TrainingDataset, path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(len(dataset)):
            writer.writerow(
                [int(dataset.curve[i]), int(dataset.step[i])]
                + [repr(float(v)) for v in dataset.strain[i]]
                + [repr(float(v)) for v in dataset.stress[i]]
            )


def read_dataset(path: Path | str) -> TrainingDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.array([[float(v) for v in row] for row in rows])
    return TrainingDataset(
        strain=data[:, 2:5],
        stress=data[:, 5:8],
        curve=data[:, 0].astype(np.int64),
        step=data[:, 1].astype(np.int64),
    )
