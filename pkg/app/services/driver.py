"""Displacement-controlled simulation with adaptive load steps.

Each load step runs up to ``k_max`` staggered iterations: the mixing rule
turns the last known uncertainty into IP weights, then the mechanical problem
is solved with those weights frozen. Failed steps are retried with a smaller
increment; accepted steps commit the mixture and extend the F-u curve.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from app.schemas.run import ConfigError, MixingMode, RunConfig
from app.services.experiments import LoadCase
from app.services.fem import AssemblyError, SingularSystemError, T3Space, T6Space, reaction, solve_newton
from app.services.material import VonMisesMaterial
from app.services.mesh import Mesh, promote_to_t6
from app.services.mixture import MixtureModel, create_rule
from app.services.phasefield import PhaseFieldError, PhaseFieldProblem
from app.services.results import AttemptRecord, FailureKind, RunMetrics
from app.services.surrogate import ElasticSurrogate, Surrogate
from app.services.vtk import write_vtk
from app.utils import metrics as prom

logger = logging.getLogger(__name__)

_LOAD_TOL = 1e-12


@dataclass
class StepOutcome:
    accepted: bool
    du_used: float
    stagger_iters: int
    nr_iters_total: int
    failure_kind: FailureKind = FailureKind.NONE


@dataclass
class RunResult:
    metrics: RunMetrics
    snapshots: dict[float, NDArray[np.float64]] = field(default_factory=dict)


class Simulation:
    """Owns the discretisation, the mixture and the committed state of one run."""

    def __init__(self, mesh: Mesh, config: RunConfig, surrogate: Surrogate | None = None):
        self.config = config
        self.mesh = mesh if mesh.is_promoted else promote_to_t6(mesh)
        self.space = T6Space(self.mesh)
        self.t3 = T3Space(self.mesh)
        self.load = LoadCase.tension(self.mesh)
        self.material = VonMisesMaterial(config.material)

        if surrogate is None:
            if config.mixture.mode != MixingMode.FULL:
                raise ConfigError("surrogate", f"mode {config.mixture.mode} needs a trained surrogate")
            surrogate = ElasticSurrogate(self.material.D_e)
        self.mixture = MixtureModel(self.material, surrogate, self.space.n_ips, config.mixture)
        problem = None
        if config.mixture.mode == MixingMode.PHASE_FIELD:
            problem = PhaseFieldProblem(self.t3, config.phasefield)
        self.rule = create_rule(config.mixture, problem, self.space.rule)

        # Committed state
        self.u = np.zeros(self.space.n_dofs)
        self.u_load = 0.0
        self.phi_nodes = np.zeros(self.t3.n_nodes)
        self.stress = np.zeros((self.space.n_ips, 3))
        self.metrics = RunMetrics()
        self._nr_total = 0
        self._attempts = 0
        self.mixture.initialize_uncertainty(self.space.strains(self.u))

    @property
    def step(self) -> int:
        """Number of committed load steps."""
        return self.mixture.table.steps_committed

    def vertex_phi(self) -> NDArray[np.float64]:
        """Committed φ on the vertices; local rules are averaged from their IP weights."""
        if self.rule.uses_phase_field:
            return self.phi_nodes
        elements = self.t3.elements
        per_element = self.mixture.table.phi.reshape(elements.shape[0], -1).mean(axis=1)
        total = np.bincount(elements.ravel(), weights=np.repeat(per_element, 3), minlength=self.t3.n_nodes)
        count = np.bincount(elements.ravel(), minlength=self.t3.n_nodes)
        return total / np.maximum(count, 1)

    def export_vtk(self, path: Path) -> None:
        write_vtk(
            self.mesh,
            self.u,
            self.vertex_phi(),
            self.stress,
            self.mixture.table.plastic.eps_p_eq,
            self.space.rule.n_points,
            path,
        )

    # -- one load step ------------------------------------------------------

    def staggered_step(self, du: float) -> StepOutcome:
        if du <= 0:
            raise ValueError(f"load increment must be positive, got {du}")
        stagger = self.config.stagger
        mixture = self.mixture
        mixture.begin_attempt()
        target = self.u_load + du
        bc = self.load.bc(target)

        u_iter = self.u.copy()
        phi_nodes = self.phi_nodes.copy()
        phi_prev: NDArray[np.float64] | None = None
        internal_force: NDArray[np.float64] | None = None
        strain: NDArray[np.float64] | None = None
        nr_iters = 0
        iters = 0

        for k in range(1, stagger.k_max + 1):
            try:
                update = self.rule.update(mixture.uncertainty, phi_nodes)
            except PhaseFieldError as exc:
                logger.info("Step %d, iteration %d: %s", self.step + 1, k, exc)
                return self._fail(du, k, nr_iters, FailureKind.PHASEFIELD)

            if phi_prev is not None and np.array_equal(update.phi_ip, phi_prev):
                logger.debug("Step %d: phase field unchanged at iteration %d", self.step + 1, k)
                break
            mixture.set_phi(update.phi_ip)
            phi_prev = update.phi_ip
            if update.phi_nodes is not None:
                phi_nodes = update.phi_nodes

            try:
                u_new, strain, report = solve_newton(self.space, bc, u_iter, mixture.evaluate)
            except (AssemblyError, SingularSystemError) as exc:
                nr_iters += exc.newton_iterations
                logger.info("Step %d, iteration %d: mechanical failure: %s", self.step + 1, k, exc)
                return self._fail(du, k, nr_iters, FailureKind.MECHANICAL)
            nr_iters += report.iterations
            if not report.converged:
                logger.info(
                    "Step %d, iteration %d: Newton stalled at |r| = %.3e",
                    self.step + 1,
                    k,
                    report.residual_norm,
                )
                return self._fail(du, k, nr_iters, FailureKind.MECHANICAL)

            mixture.refresh_uncertainty(strain)
            internal_force = report.internal_force
            change = np.linalg.norm(u_new - u_iter) / max(float(np.linalg.norm(u_new)), stagger.floor)
            u_iter = u_new
            iters = k
            if k > 1 and change <= stagger.tol_u:
                break

        assert internal_force is not None and mixture.last_response is not None
        self._nr_total += nr_iters
        prom.newton_iterations_total.inc(nr_iters)

        self.u = u_iter
        self.u_load = target
        self.phi_nodes = phi_nodes
        self.stress = mixture.last_response.stress.copy()
        unloading = mixture.commit(self.step + 1, strain)
        force = reaction(internal_force, self.load.loaded_dofs)
        self.metrics.fu_curve.append(target, force)
        self.metrics.unloading_counts.append(unloading)

        outcome = StepOutcome(True, du, iters, nr_iters)
        self._record(outcome, target, force)
        n_gp, n_mixed, n_hf = mixture.populations()
        prom.ips_by_phase.labels(phase="gp").set(n_gp)
        prom.ips_by_phase.labels(phase="mixed").set(n_mixed)
        prom.ips_by_phase.labels(phase="hf").set(n_hf)
        logger.info(
            "Step %d accepted: u = %.6g, F = %.6g, %d staggered, %d Newton, IPs gp/mixed/hf = %d/%d/%d",
            self.step,
            target,
            force,
            iters,
            nr_iters,
            n_gp,
            n_mixed,
            n_hf,
        )
        return outcome

    def _fail(self, du: float, k: int, nr_iters: int, kind: FailureKind) -> StepOutcome:
        self._nr_total += nr_iters
        prom.newton_iterations_total.inc(nr_iters)
        outcome = StepOutcome(False, du, k, nr_iters, kind)
        self._record(outcome, self.u_load + du, float("nan"))
        return outcome

    def _record(self, outcome: StepOutcome, u: float, force: float) -> None:
        self._attempts += 1
        n_gp, n_mixed, n_hf = self.mixture.populations()
        self.metrics.attempts.append(
            AttemptRecord(
                step=self._attempts,
                u=u,
                F=force,
                du=outcome.du_used,
                accepted=outcome.accepted,
                stagger_iters=outcome.stagger_iters,
                nr_iters_cum=self._nr_total,
                hf_evals_cum=self.mixture.counter.total,
                n_ips_gp=n_gp,
                n_ips_mixed=n_mixed,
                n_ips_hf=n_hf,
                failure_kind=outcome.failure_kind,
            )
        )
        prom.load_steps_total.labels(outcome="accepted" if outcome.accepted else outcome.failure_kind.value).inc()

    # -- the whole run ------------------------------------------------------

    def run(self) -> RunResult:
        """March the prescribed displacement to ``u_target`` with adaptive steps.

        A failure shrinks the increment by γ down to du_min; failing at du_min
        switches to growing it by 1/γ until du_max, beyond which the run stops
        unsolved. After a success that followed a failure the increment is
        held for one step, then grows by 1/γ per step back to du0.
        """
        cfg = self.config.stepper
        du0, gamma = cfg.du0, cfg.gamma
        du_min, du_max = cfg.min_increment, cfg.max_increment
        u_target = cfg.u_target

        du = du0
        escalating = False
        recovering = False
        result = RunResult(self.metrics)

        while u_target - self.u_load > _LOAD_TOL * u_target:
            du_try = min(du, u_target - self.u_load)
            start = time.perf_counter()
            outcome = self.staggered_step(du_try)
            prom.step_seconds.observe(time.perf_counter() - start)

            if outcome.accepted:
                if self.config.record_fields:
                    result.snapshots[self.u_load] = self.stress.copy()
                if recovering:
                    recovering = escalating = False
                elif du < du0:
                    du = min(du / gamma, du0)
                else:
                    du = du0
                continue

            recovering = True
            if escalating:
                du = du_try / gamma
            elif du_try > du_min * (1.0 + 1e-9):
                du = max(du_try * gamma, du_min)
            else:
                escalating = True
                du = du_try / gamma
            logger.info("Step failed (%s); next increment %.4g", outcome.failure_kind.value, du)
            if du > du_max * (1.0 + 1e-9):
                logger.warning(
                    "Increment would exceed du_max = %.4g; stopping unsolved at u = %.6g", du_max, self.u_load
                )
                self.metrics.solved = False
                return result

        self.metrics.solved = True
        logger.info(
            "Run solved: %d steps, %d HF evaluations, %d Newton iterations",
            self.step,
            self.mixture.counter.total,
            self._nr_total,
        )
        return result
