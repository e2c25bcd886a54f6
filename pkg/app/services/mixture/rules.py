"""Mixing rules: how the per-IP weight φ is obtained from the uncertainty U."""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from app.schemas.run import MixingMode, MixtureConfig
from app.services.fem import QuadratureRule
from app.services.phasefield import (
    PhaseFieldError,
    PhaseFieldProblem,
    PhaseFieldReport,
    phi_at_ips,
    project_uncertainty,
)
from app.utils import metrics


@dataclass
class MixingUpdate:
    phi_ip: NDArray[np.float64]
    phi_nodes: NDArray[np.float64] | None = None
    report: PhaseFieldReport | None = None


def local_phi(uncertainty: NDArray[np.float64] | float, b: float, mode: MixingMode) -> NDArray[np.float64]:
    U = np.asarray(uncertainty, dtype=np.float64)
    if mode == MixingMode.LOCAL_LINEAR:
        return np.clip(U - b, 0.0, 1.0)
    if mode == MixingMode.LOCAL_STEP:
        return np.where(U >= b, 1.0, 0.0)
    raise ValueError(f"{mode} is not a local mixing mode")


class MixingRule(ABC):
    uses_phase_field = False

    def __init__(self, config: MixtureConfig, problem: PhaseFieldProblem | None, quadrature: QuadratureRule):
        self.config = config
        self.problem = problem
        self.quadrature = quadrature

    @abstractmethod
    def update(
        self, uncertainty: NDArray[np.float64], phi_nodes: NDArray[np.float64] | None
    ) -> MixingUpdate:
        """New IP weights from the last known per-IP uncertainty.

        ``phi_nodes`` is the warm start for rules that solve a field.
        """
        ...


class PhaseFieldRule(MixingRule):
    uses_phase_field = True

    def update(
        self, uncertainty: NDArray[np.float64], phi_nodes: NDArray[np.float64] | None
    ) -> MixingUpdate:
        if self.problem is None:
            raise ValueError("phase-field mixing needs a phase-field problem")
        if phi_nodes is None:
            phi_nodes = np.zeros(self.problem.n_nodes)
        u_elem = project_uncertainty(uncertainty, self.quadrature.n_points)
        phi, report = self.problem.solve(phi_nodes, u_elem)
        metrics.phasefield_solves_total.labels(result="converged" if report.converged else "failed").inc()
        if not report.converged:
            raise PhaseFieldError(report)
        return MixingUpdate(phi_at_ips(phi, self.problem.space.elements, self.quadrature), phi, report)


class LocalLinearRule(MixingRule):
    def update(
        self, uncertainty: NDArray[np.float64], phi_nodes: NDArray[np.float64] | None
    ) -> MixingUpdate:
        return MixingUpdate(local_phi(uncertainty, self.config.b, MixingMode.LOCAL_LINEAR))


class LocalStepRule(MixingRule):
    def update(
        self, uncertainty: NDArray[np.float64], phi_nodes: NDArray[np.float64] | None
    ) -> MixingUpdate:
        return MixingUpdate(local_phi(uncertainty, self.config.b, MixingMode.LOCAL_STEP))


class FullRule(MixingRule):
    """HF everywhere."""

    def update(
        self, uncertainty: NDArray[np.float64], phi_nodes: NDArray[np.float64] | None
    ) -> MixingUpdate:
        return MixingUpdate(np.ones_like(uncertainty))


class SurrogateOnlyRule(MixingRule):
    def update(
        self, uncertainty: NDArray[np.float64], phi_nodes: NDArray[np.float64] | None
    ) -> MixingUpdate:
        return MixingUpdate(np.zeros_like(uncertainty))


# Mixing mode -> implementation class
_RULE_REGISTRY: dict[MixingMode, type[MixingRule]] = {
    MixingMode.PHASE_FIELD: PhaseFieldRule,
    MixingMode.LOCAL_LINEAR: LocalLinearRule,
    MixingMode.LOCAL_STEP: LocalStepRule,
    MixingMode.FULL: FullRule,
    MixingMode.SURROGATE: SurrogateOnlyRule,
}


def create_rule(
    config: MixtureConfig, problem: PhaseFieldProblem | None, quadrature: QuadratureRule
) -> MixingRule:
    return _RULE_REGISTRY[config.mode](config, problem, quadrature)
