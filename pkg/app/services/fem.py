"""Small-strain plane finite elements: T6 mechanics, T3 geometry, assembly and Newton.

Integration points are ordered element-major, IP-minor everywhere: IP ``3*e + q``
is quadrature point ``q`` of element ``e``. Constitutive callbacks are batched
over that ordering.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from app.config import settings
from app.services.mesh import Mesh, MeshError

logger = logging.getLogger(__name__)


class ConstitutiveError(Exception):
    """A constitutive update failed at integration point ``index`` of a batch."""

    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(message)


class AssemblyError(Exception):
    newton_iterations = 0  # set by solve_newton when raised mid-solve

    def __init__(self, element: int, ip: int, cause: Exception):
        self.element = element
        self.ip = ip
        self.cause = cause
        super().__init__(f"constitutive update failed at element {element}, IP {ip}: {cause}")


class SingularSystemError(Exception):
    """The linear system could not be factorised."""

    newton_iterations = 0


@dataclass(frozen=True)
class QuadratureRule:
    points: NDArray[np.float64]  # barycentric (L1, L2, L3)
    weights: NDArray[np.float64]  # reference-triangle weights, sum 1/2

    @property
    def n_points(self) -> int:
        return int(self.weights.size)


TRI_3POINT = QuadratureRule(
    points=np.array(
        [[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]], dtype=np.float64
    ),
    weights=np.full(3, 1 / 6),
)
TRI_1POINT = QuadratureRule(points=np.array([[1 / 3, 1 / 3, 1 / 3]]), weights=np.array([0.5]))


@dataclass
class ConstitutiveResponse:
    """Stress (…, 3) as (σxx, σyy, σxy) and tangent (…, 3, 3) dσ/dε."""

    stress: NDArray[np.float64]
    tangent: NDArray[np.float64]


ConstitutiveFn = Callable[[NDArray[np.float64]], ConstitutiveResponse]


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual_norm: float
    evaluations: int = 1
    history: list[float] = field(default_factory=list)
    internal_force: NDArray[np.float64] | None = None


@dataclass(frozen=True)
class DirichletBC:
    dofs: NDArray[np.int64]
    values: NDArray[np.float64]


# ---------------------------------------------------------------------------
# Shape functions
# ---------------------------------------------------------------------------

_DL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # dL_a/d(ξ, η)


def t6_shape(bary: NDArray[np.float64]) -> NDArray[np.float64]:
    L1, L2, L3 = bary
    return np.array(
        [L1 * (2 * L1 - 1), L2 * (2 * L2 - 1), L3 * (2 * L3 - 1), 4 * L1 * L2, 4 * L2 * L3, 4 * L3 * L1]
    )


def t6_shape_derivatives(bary: NDArray[np.float64]) -> NDArray[np.float64]:
    """dN/d(ξ, η) as a (6, 2) array."""
    L1, L2, L3 = bary
    d1, d2, d3 = _DL
    return np.array(
        [
            (4 * L1 - 1) * d1,
            (4 * L2 - 1) * d2,
            (4 * L3 - 1) * d3,
            4 * (L1 * d2 + L2 * d1),
            4 * (L2 * d3 + L3 * d2),
            4 * (L3 * d1 + L1 * d3),
        ]
    )


# ---------------------------------------------------------------------------
# Function spaces
# ---------------------------------------------------------------------------


class T6Space:
    """Displacement space on a promoted mesh with precomputed B matrices."""

    def __init__(self, mesh: Mesh, rule: QuadratureRule = TRI_3POINT):
        if mesh.t6_elements is None:
            raise MeshError("T6 space needs a promoted mesh")
        self.mesh = mesh
        self.rule = rule
        conn = mesh.t6_elements
        n_el, n_q = conn.shape[0], rule.n_points

        self.dofs = np.empty((n_el, 12), dtype=np.int64)
        self.dofs[:, 0::2] = 2 * conn
        self.dofs[:, 1::2] = 2 * conn + 1

        xe = mesh.nodes[conn]  # (E, 6, 2)
        self.B = np.zeros((n_el, n_q, 3, 12))
        self.dv = np.empty((n_el, n_q))
        self.ip_coords = np.empty((n_el, n_q, 2))
        for q in range(n_q):
            dN = t6_shape_derivatives(rule.points[q])  # (6, 2)
            J = np.einsum("eai,aj->eij", xe, dN)  # dx_i/dξ_j
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            if np.any(det <= 0):
                raise MeshError("non-positive Jacobian in T6 element")
            inv = np.empty_like(J)
            inv[:, 0, 0], inv[:, 1, 1] = J[:, 1, 1] / det, J[:, 0, 0] / det
            inv[:, 0, 1], inv[:, 1, 0] = -J[:, 0, 1] / det, -J[:, 1, 0] / det
            dNdx = np.einsum("aj,eji->eai", dN, inv)  # (E, 6, 2)
            self.B[:, q, 0, 0::2] = dNdx[:, :, 0]
            self.B[:, q, 1, 1::2] = dNdx[:, :, 1]
            self.B[:, q, 2, 0::2] = dNdx[:, :, 1]
            self.B[:, q, 2, 1::2] = dNdx[:, :, 0]
            self.dv[:, q] = rule.weights[q] * det
            self.ip_coords[:, q] = np.einsum("a,eai->ei", t6_shape(rule.points[q]), xe)

        rows = np.repeat(self.dofs, 12, axis=1)
        cols = np.tile(self.dofs, (1, 12))
        self._rows, self._cols = rows.ravel(), cols.ravel()

    @property
    def n_dofs(self) -> int:
        return 2 * self.mesh.n_nodes

    @property
    def n_elements(self) -> int:
        return int(self.dofs.shape[0])

    @property
    def n_ips(self) -> int:
        return self.n_elements * self.rule.n_points

    def node_dofs(self, nodes: NDArray[np.int64], component: int) -> NDArray[np.int64]:
        return (2 * np.asarray(nodes, dtype=np.int64) + component).astype(np.int64)

    def strains(self, u: NDArray[np.float64]) -> NDArray[np.float64]:
        """Strains (εxx, εyy, γxy) at every IP, shape (n_ips, 3)."""
        ue = u[self.dofs]  # (E, 12)
        return np.einsum("eqij,ej->eqi", self.B, ue).reshape(-1, 3)


class T3Space:
    """Linear space on the vertex set, used by the phase field."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.elements = mesh.t3_elements
        self.n_nodes = mesh.n_vertices
        xe = mesh.nodes[self.elements]
        d1, d2 = xe[:, 1] - xe[:, 0], xe[:, 2] - xe[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.area = 0.5 * det
        # Gradients of the barycentric hat functions, (E, 3, 2)
        grad = np.empty((self.elements.shape[0], 3, 2))
        grad[:, 1, 0], grad[:, 1, 1] = d2[:, 1] / det, -d2[:, 0] / det
        grad[:, 2, 0], grad[:, 2, 1] = -d1[:, 1] / det, d1[:, 0] / det
        grad[:, 0] = -grad[:, 1] - grad[:, 2]
        self.grad = grad
        self._rows = np.repeat(self.elements, 3, axis=1).ravel()
        self._cols = np.tile(self.elements, (1, 3)).ravel()

    def assemble_matrix(self, blocks: NDArray[np.float64]) -> sparse.csr_matrix:
        return sparse.coo_matrix(
            (blocks.ravel(), (self._rows, self._cols)), shape=(self.n_nodes, self.n_nodes)
        ).tocsr()

    def assemble_vector(self, blocks: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.bincount(self.elements.ravel(), weights=blocks.ravel(), minlength=self.n_nodes)


# ---------------------------------------------------------------------------
# Assembly and solution
# ---------------------------------------------------------------------------


def strain_at_ip(space: T6Space, element: int, ip: int, u: NDArray[np.float64]) -> NDArray[np.float64]:
    return space.B[element, ip] @ u[space.dofs[element]]


def _evaluate(space: T6Space, strain: NDArray[np.float64], constitutive: ConstitutiveFn) -> ConstitutiveResponse:
    try:
        return constitutive(strain)
    except ConstitutiveError as exc:
        element, ip = divmod(exc.index, space.rule.n_points)
        raise AssemblyError(element, ip, exc) from exc


def assemble(
    space: T6Space,
    u: NDArray[np.float64],
    constitutive: ConstitutiveFn,
) -> tuple[NDArray[np.float64], sparse.csr_matrix]:
    """Internal force vector and tangent stiffness at displacement ``u``."""
    response = _evaluate(space, space.strains(u), constitutive)
    n_el, n_q = space.dv.shape
    sig = response.stress.reshape(n_el, n_q, 3)
    D = response.tangent.reshape(n_el, n_q, 3, 3)

    fe = np.einsum("eqij,eqi,eq->ej", space.B, sig, space.dv)
    ke = np.einsum("eqki,eqkl,eqlj,eq->eij", space.B, D, space.B, space.dv)

    residual = np.bincount(space.dofs.ravel(), weights=fe.ravel(), minlength=space.n_dofs)
    K = sparse.coo_matrix(
        (ke.ravel(), (space._rows, space._cols)), shape=(space.n_dofs, space.n_dofs)
    ).tocsr()
    return residual, K


def factorize(K: sparse.spmatrix) -> spla.SuperLU:
    """Sparse direct factorisation in symmetric mode."""
    try:
        return spla.splu(
            sparse.csc_matrix(K),
            permc_spec="MMD_AT_PLUS_A",
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc


def solve_linear(K: sparse.spmatrix, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
    x = factorize(K).solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("linear solve produced non-finite values")
    return np.asarray(x)


def solve_newton(
    space: T6Space,
    bc: DirichletBC,
    u0: NDArray[np.float64],
    constitutive: ConstitutiveFn,
    rtol: float | None = None,
    atol: float | None = None,
    max_iter: int | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NewtonReport]:
    """Newton-Raphson on the free dofs with prescribed values eliminated.

    A step that does not reduce the residual norm is halved up to
    ``settings.newton_max_backtracks`` times; the last halving is taken
    regardless. Returns the final iterate, the strains at it, and the report.
    The strains are those the constitutive model saw in the last residual
    evaluation. An ``AssemblyError`` or ``SingularSystemError`` raised
    mid-solve carries the iterations spent in ``newton_iterations``.
    """
    if bc.dofs.size == 0:
        raise ValueError("at least one prescribed dof is required")
    rtol = settings.newton_rtol if rtol is None else rtol
    atol = settings.newton_atol if atol is None else atol
    max_iter = settings.newton_max_iter if max_iter is None else max_iter
    max_cuts = settings.newton_max_backtracks

    u = u0.copy()
    u[bc.dofs] = bc.values
    free = np.setdiff1d(np.arange(space.n_dofs), bc.dofs)

    history: list[float] = []
    iterations = 0
    evaluations = 0
    try:
        strain = space.strains(u)
        evaluations += 1
        residual, K = assemble(space, u, constitutive)
        r0 = float(np.linalg.norm(residual[free]))
        history.append(r0)
        tol = max(atol, rtol * r0)
        logger.debug("Newton start: |r0| = %.3e, tol = %.3e", r0, tol)

        norm = r0
        while norm > tol and np.isfinite(norm):
            if iterations >= max_iter:
                break
            du = solve_linear(K[free][:, free], -residual[free])
            iterations += 1
            alpha = 1.0
            for cut in range(max_cuts + 1):
                trial = u.copy()
                trial[free] += alpha * du
                evaluations += 1
                try:
                    trial_residual, trial_K = assemble(space, trial, constitutive)
                except AssemblyError:
                    if cut == max_cuts:
                        raise
                    alpha *= 0.5
                    continue
                trial_norm = float(np.linalg.norm(trial_residual[free]))
                if trial_norm < norm or cut == max_cuts:
                    break
                alpha *= 0.5
            if alpha < 1.0:
                logger.debug("Newton iteration %d: step cut to %.4g", iterations, alpha)
            u, residual, K, norm = trial, trial_residual, trial_K, trial_norm
            strain = space.strains(u)
            history.append(norm)
            logger.debug("Newton iteration %d: |r| = %.3e", iterations, norm)
    except (AssemblyError, SingularSystemError) as exc:
        exc.newton_iterations = iterations
        raise

    converged = bool(np.isfinite(norm) and norm <= tol)
    report = NewtonReport(
        converged=converged,
        iterations=iterations,
        residual_norm=norm,
        evaluations=evaluations,
        history=history,
        internal_force=residual,
    )
    return u, strain, report


def reaction(internal_force: NDArray[np.float64], dofs: NDArray[np.int64]) -> float:
    return float(internal_force[dofs].sum())
