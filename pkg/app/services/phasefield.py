"""Uncertainty-driven phase field on the vertex (T3) mesh.

Weak form per test function v:

    F(φ, v) = −∫U v + b∫v + ε²∫∇φ·∇v + ω∫φ(1−φ)(1−2φ) v

with U constant per element, the linear terms integrated exactly and the
double-well term with the one-point (centroid) rule. The bounds 0 ≤ φ ≤ 1 are
enforced by a projected active-set Newton method.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from app.config import settings
from app.schemas.run import PhaseFieldParams
from app.services.fem import QuadratureRule, T3Space

logger = logging.getLogger(__name__)


class PhaseFieldError(Exception):
    """The constrained phase-field solve did not converge."""

    def __init__(self, report: "PhaseFieldReport"):
        self.report = report
        super().__init__(
            f"phase field did not converge in {report.iterations} iterations (|R| = {report.residual_norm:.3e})"
        )


@dataclass
class PhaseFieldReport:
    converged: bool
    iterations: int
    residual_norm: float
    n_lower: int = 0
    n_upper: int = 0


def double_well(phi: NDArray[np.float64]) -> NDArray[np.float64]:
    return phi * (1.0 - phi) * (1.0 - 2.0 * phi)


def double_well_derivative(phi: NDArray[np.float64]) -> NDArray[np.float64]:
    return 1.0 - 6.0 * phi + 6.0 * phi**2


def project_uncertainty(ip_uncertainty: NDArray[np.float64], n_q: int) -> NDArray[np.float64]:
    """Per-element driving force: the max over that element's integration points."""
    return np.asarray(ip_uncertainty, dtype=np.float64).reshape(-1, n_q).max(axis=1)


def phi_at_ips(phi: NDArray[np.float64], elements: NDArray[np.int64], rule: QuadratureRule) -> NDArray[np.float64]:
    """Linear interpolation of nodal φ to every mechanical IP (element-major order)."""
    values = np.einsum("qa,ea->eq", rule.points, phi[elements]).ravel()
    return np.clip(values, 0.0, 1.0)


def phi_at_ip(
    phi: NDArray[np.float64], elements: NDArray[np.int64], rule: QuadratureRule, element: int, ip: int
) -> float:
    return float(np.clip(rule.points[ip] @ phi[elements[element]], 0.0, 1.0))


class PhaseFieldProblem:
    def __init__(self, space: T3Space, params: PhaseFieldParams):
        self.space = space
        self.params = params
        area = space.area
        # ε² ∫∇N_a·∇N_b
        blocks = params.eps**2 * np.einsum("eai,ebi,e->eab", space.grad, space.grad, area)
        self.laplacian = space.assemble_matrix(blocks)
        self._load_weight = np.repeat(area / 3.0, 3).reshape(-1, 3)

    @property
    def n_nodes(self) -> int:
        return self.space.n_nodes

    def _centroid_phi(self, phi: NDArray[np.float64]) -> NDArray[np.float64]:
        return phi[self.space.elements].mean(axis=1)

    def residual_vector(self, phi: NDArray[np.float64], u_elem: NDArray[np.float64]) -> NDArray[np.float64]:
        p = self.params
        source = (p.b - u_elem)[:, None] * self._load_weight
        well = p.omega * double_well(self._centroid_phi(phi))[:, None] * self._load_weight
        return self.space.assemble_vector(source + well) + self.laplacian @ phi

    def residual(
        self, phi: NDArray[np.float64], u_elem: NDArray[np.float64], v: NDArray[np.float64]
    ) -> float:
        return float(self.residual_vector(phi, u_elem) @ v)

    def jacobian(self, phi: NDArray[np.float64]) -> sparse.csr_matrix:
        dg = self.params.omega * double_well_derivative(self._centroid_phi(phi))
        blocks = (dg * self.space.area / 9.0)[:, None, None] * np.ones((1, 3, 3))
        return self.laplacian + self.space.assemble_matrix(blocks)

    def solve(
        self,
        phi0: NDArray[np.float64],
        u_elem: NDArray[np.float64],
        tol: float | None = None,
        max_iter: int | None = None,
    ) -> tuple[NDArray[np.float64], PhaseFieldReport]:
        """Projected Newton from ``phi0``.

        Nodes at a bound whose residual pushes outward are frozen; the rest
        take a Newton step and are clipped back into [0, 1]. Converged when the
        ∞-norm of the residual on the free nodes is at most ``tol``.
        """
        tol = settings.pf_tol if tol is None else tol
        max_iter = settings.pf_max_iter if max_iter is None else max_iter
        if u_elem.shape != (self.space.elements.shape[0],):
            raise ValueError("driving field needs one value per element")

        phi = np.clip(phi0, 0.0, 1.0).astype(np.float64, copy=True)
        iterations = 0
        while True:
            R = self.residual_vector(phi, u_elem)
            lower = (phi <= 0.0) & (R > 0.0)
            upper = (phi >= 1.0) & (R < 0.0)
            free = np.flatnonzero(~(lower | upper))
            norm = float(np.abs(R[free]).max()) if free.size else 0.0
            logger.debug("Phase field iteration %d: |R| = %.3e, free = %d", iterations, norm, free.size)
            if norm <= tol or iterations >= max_iter:
                break
            J = self.jacobian(phi)[free][:, free]
            try:
                step = spla.spsolve(sparse.csc_matrix(J), -R[free])
            except RuntimeError:
                logger.warning("Singular phase-field Jacobian at iteration %d", iterations)
                break
            if not np.all(np.isfinite(step)):
                logger.warning("Non-finite phase-field update at iteration %d", iterations)
                break
            phi[free] = np.clip(phi[free] + step, 0.0, 1.0)
            iterations += 1

        report = PhaseFieldReport(
            converged=norm <= tol,
            iterations=iterations,
            residual_norm=norm,
            n_lower=int(lower.sum()),
            n_upper=int(upper.sum()),
        )
        return phi, report
