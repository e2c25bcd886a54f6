"""Run ledger, F-u error, field errors and result files."""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "step",
    "u",
    "F",
    "du",
    "accepted",
    "stagger_iters",
    "nr_iters_cum",
    "hf_evals_cum",
    "n_ips_gp",
    "n_ips_mixed",
    "n_ips_hf",
    "failure_kind",
)
SOLVED_PREFIX = "# solved: "


class FUSupportError(Exception):
    """Two F-u curves share no displacement range on the requested grid."""


class FailureKind(StrEnum):
    NONE = "none"
    MECHANICAL = "mechanical"
    PHASEFIELD = "phasefield"


@dataclass
class AttemptRecord:
    step: int
    u: float
    F: float
    du: float
    accepted: bool
    stagger_iters: int
    nr_iters_cum: int
    hf_evals_cum: int
    n_ips_gp: int
    n_ips_mixed: int
    n_ips_hf: int
    failure_kind: FailureKind = FailureKind.NONE


@dataclass
class FUCurve:
    u: list[float] = field(default_factory=list)
    F: list[float] = field(default_factory=list)

    def append(self, u: float, F: float) -> None:
        if self.u and u <= self.u[-1]:
            raise ValueError(f"displacements must increase: {u} after {self.u[-1]}")
        self.u.append(u)
        self.F.append(F)

    def __len__(self) -> int:
        return len(self.u)


@dataclass
class RunMetrics:
    attempts: list[AttemptRecord] = field(default_factory=list)
    fu_curve: FUCurve = field(default_factory=lambda: FUCurve([0.0], [0.0]))
    unloading_counts: list[int] = field(default_factory=list)
    solved: bool = False

    @property
    def accepted(self) -> list[AttemptRecord]:
        return [a for a in self.attempts if a.accepted]

    @property
    def hf_evals_cum(self) -> list[int]:
        return [a.hf_evals_cum for a in self.accepted]

    @property
    def nr_iters_cum(self) -> list[int]:
        return [a.nr_iters_cum for a in self.accepted]

    @property
    def phase_counts(self) -> list[tuple[int, int, int]]:
        return [(a.n_ips_gp, a.n_ips_mixed, a.n_ips_hf) for a in self.accepted]

    @property
    def total_hf_evals(self) -> int:
        return self.attempts[-1].hf_evals_cum if self.attempts else 0

    @property
    def total_nr_iters(self) -> int:
        return self.attempts[-1].nr_iters_cum if self.attempts else 0


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


def reference_grid(du0: float, u_target: float) -> NDArray[np.float64]:
    """Displacements a run visits if every step converges: k·du0 up to u_target."""
    n = int(math.floor(u_target / du0 + 1e-9))
    return du0 * np.arange(1, n + 1)


def fu_error(curve: FUCurve, reference: FUCurve, grid: NDArray[np.float64]) -> float:
    """Sum of absolute force differences at the grid points both curves cover."""
    lo = max(curve.u[0], reference.u[0]) if len(curve) and len(reference) else math.inf
    hi = min(curve.u[-1], reference.u[-1]) if len(curve) and len(reference) else -math.inf
    tol = 1e-12 * max(abs(hi), 1.0)
    inside = grid[(grid >= lo - tol) & (grid <= hi + tol)]
    if inside.size == 0:
        raise FUSupportError("F-u curves share no grid points")
    if inside.size < grid.size:
        logger.warning("F-u grid truncated to common support: %d of %d points", inside.size, grid.size)
    f = np.interp(inside, curve.u, curve.F)
    f_ref = np.interp(inside, reference.u, reference.F)
    return float(np.abs(f - f_ref).sum())


def field_stress_error(stress: NDArray[np.float64], reference: NDArray[np.float64]) -> float:
    """Mean over IPs and components of the absolute stress difference."""
    if stress.shape != reference.shape:
        raise ValueError(f"stress fields differ in shape: {stress.shape} vs {reference.shape}")
    return float(np.abs(stress - reference).mean())


def stress_error_history(
    snapshots: dict[float, NDArray[np.float64]],
    reference: dict[float, NDArray[np.float64]],
    tol: float = 1e-12,
) -> list[tuple[float, float]]:
    """(u, field error) at displacements present in both snapshot sets."""
    ref_keys = np.array(sorted(reference))
    out = []
    for u in sorted(snapshots):
        if ref_keys.size == 0:
            break
        j = int(np.argmin(np.abs(ref_keys - u)))
        if abs(ref_keys[j] - u) <= tol * max(abs(u), 1.0):
            out.append((u, field_stress_error(snapshots[u], reference[float(ref_keys[j])])))
    return out


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def write_csv(metrics: RunMetrics, path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for a in metrics.attempts:
            writer.writerow(
                [
                    a.step,
                    _fmt(a.u),
                    _fmt(a.F),
                    _fmt(a.du),
                    int(a.accepted),
                    a.stagger_iters,
                    a.nr_iters_cum,
                    a.hf_evals_cum,
                    a.n_ips_gp,
                    a.n_ips_mixed,
                    a.n_ips_hf,
                    a.failure_kind.value,
                ]
            )
        if metrics.attempts:
            fh.write(f"{SOLVED_PREFIX}{str(metrics.solved).lower()}\n")
    logger.info("Metrics written to %s", path)


def read_csv(path: Path | str) -> RunMetrics:
    metrics = RunMetrics()
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split(",")) != CSV_HEADER:
        raise ValueError(f"{path}: not a run metrics file")
    for row in csv.reader(line for line in lines[1:] if line and not line.startswith("#")):
        record = AttemptRecord(
            step=int(row[0]),
            u=float(row[1]),
            F=float(row[2]),
            du=float(row[3]),
            accepted=row[4] == "1",
            stagger_iters=int(row[5]),
            nr_iters_cum=int(row[6]),
            hf_evals_cum=int(row[7]),
            n_ips_gp=int(row[8]),
            n_ips_mixed=int(row[9]),
            n_ips_hf=int(row[10]),
            failure_kind=FailureKind(row[11]),
        )
        metrics.attempts.append(record)
        if record.accepted:
            metrics.fu_curve.append(record.u, record.F)
    metrics.solved = any(line == f"{SOLVED_PREFIX}true" for line in lines)
    return metrics


def write_summary(metrics: RunMetrics, config: dict[str, Any], path: Path | str) -> None:
    accepted = metrics.accepted
    summary = {
        "solved": metrics.solved,
        "attempted_steps": len(metrics.attempts),
        "accepted_steps": len(accepted),
        "final_u": metrics.fu_curve.u[-1],
        "peak_force": max(metrics.fu_curve.F),
        "hf_evals_total": metrics.total_hf_evals,
        "nr_iters_total": metrics.total_nr_iters,
        "max_stagger_iters": max((a.stagger_iters for a in accepted), default=0),
        "unloading_ips_total": sum(metrics.unloading_counts),
        "failures": {
            kind.value: sum(1 for a in metrics.attempts if a.failure_kind == kind)
            for kind in (FailureKind.MECHANICAL, FailureKind.PHASEFIELD)
        },
        "config": config,
    }
    Path(path).write_text(json.dumps(summary, indent=2, default=str), encoding="utf-8")

