"""The mixed constitutive model: φ-weighted blend of the surrogate and HF responses.

Weights are frozen during a mechanical solve. IPs with φ < τ use the
surrogate alone, IPs with φ > 1−τ use the HF model alone and the rest blend
both stresses and tangents linearly in φ. The HF model's internal variables
are only committed when a load step is accepted; an IP that leaves the
surrogate-only regime first has its missing history replayed.
"""

import logging

import numpy as np
from numpy.typing import NDArray

from app.schemas.run import MixtureConfig
from app.services.fem import ConstitutiveError, ConstitutiveResponse
from app.services.material import PlasticState, ReturnMappingError, VonMisesMaterial, von_mises
from app.services.mixture.records import HFCounter, IPTable
from app.services.surrogate import Surrogate

logger = logging.getLogger(__name__)


class RetraceError(ConstitutiveError):
    """Replaying committed history failed; ``index`` is the global IP."""

    def __init__(self, step: int, ip: int, cause: Exception):
        self.step = step
        self.ip = ip
        self.cause = cause
        super().__init__(ip, f"retracing IP {ip} failed at committed step {step}: {cause}")


class CommitError(Exception):
    def __init__(self, step: int, expected: int):
        self.step = step
        super().__init__(f"cannot commit step {step}; next committable step is {expected}")


def phase_populations(phi: NDArray[np.float64], tau: float) -> tuple[int, int, int]:
    """(n_gp, n_mixed, n_hf); φ = τ and φ = 1−τ count as mixed."""
    n_gp = int(np.count_nonzero(phi < tau))
    n_hf = int(np.count_nonzero(phi > 1.0 - tau))
    return n_gp, phi.size - n_gp - n_hf, n_hf


class MixtureModel:
    def __init__(
        self,
        material: VonMisesMaterial,
        surrogate: Surrogate,
        n_ips: int,
        config: MixtureConfig,
        counter: HFCounter | None = None,
    ):
        self.material = material
        self.surrogate = surrogate
        self.config = config
        self.table = IPTable(n_ips)
        self.counter = counter or HFCounter()
        self.current_step = 1
        self.phi = self.table.phi.copy()
        self.uncertainty = self.table.uncertainty.copy()
        self._tentative: PlasticState | None = None
        self._last_strain: NDArray[np.float64] | None = None
        self._last_gp_stress: NDArray[np.float64] | None = None
        self.last_response: ConstitutiveResponse | None = None
        self._all_ips = np.arange(n_ips)

    @property
    def n_ips(self) -> int:
        return self.table.n_ips

    @property
    def tau(self) -> float:
        return self.config.tau

    def initialize_uncertainty(self, strain: NDArray[np.float64]) -> None:
        """Seed the committed U before the first step (usually at zero strain)."""
        self.table.uncertainty[:] = self.surrogate.uncertainty(strain)
        self.uncertainty = self.table.uncertainty.copy()

    # -- attempt lifecycle --------------------------------------------------

    def begin_attempt(self) -> None:
        """Reset all working values to the committed ones."""
        self.current_step = self.table.steps_committed + 1
        self.phi = self.table.phi.copy()
        self.uncertainty = self.table.uncertainty.copy()
        self._tentative = None
        self._last_strain = None
        self._last_gp_stress = None
        self.surrogate.rollback()

    def set_phi(self, phi: NDArray[np.float64]) -> None:
        if phi.shape != (self.n_ips,):
            raise ValueError(f"expected {self.n_ips} weights, got shape {phi.shape}")
        self.phi = np.clip(phi, 0.0, 1.0)

    def refresh_uncertainty(self, strain: NDArray[np.float64]) -> NDArray[np.float64]:
        """Surrogate U at every IP, HF-controlled ones included."""
        self.uncertainty = self.surrogate.uncertainty(strain)
        return self.uncertainty

    # -- evaluation ---------------------------------------------------------

    def retrace(self, ips: NDArray[np.int64]) -> int:
        """Replay committed strains through the HF model for IPs lagging behind.

        Replayed states derive from committed history only, so they are
        written straight into the table. Returns the number of HF updates.
        """
        last = self.table.steps_committed
        lagging = ips[self.table.traced_through[ips] < last]
        if lagging.size == 0:
            return 0
        evaluations = 0
        start = int(self.table.traced_through[lagging].min()) + 1
        for step in range(start, last + 1):
            due = lagging[self.table.traced_through[lagging] < step]
            try:
                _, state = self.material.update_stress(
                    self.table.history[step - 1][due], self.table.plastic.take(due)
                )
            except ConstitutiveError as exc:
                raise RetraceError(step, int(due[exc.index]), exc) from exc
            self.table.plastic.put(due, state)
            self.table.traced_through[due] = step
            self.counter.add(due.size, self.current_step)
            evaluations += due.size
        logger.debug("Retraced %d IPs through %d steps (%d HF updates)", lagging.size, last, evaluations)
        return evaluations

    def evaluate(self, strain: NDArray[np.float64]) -> ConstitutiveResponse:
        """Batched constitutive callback over all IPs for the current attempt."""
        tau = self.tau
        gp = self.surrogate.respond(strain, self._all_ips)
        stress, tangent = gp.stress.copy(), gp.tangent.copy()
        self._last_strain = strain
        self._last_gp_stress = gp.stress

        hf_ips = np.flatnonzero(self.phi >= tau)
        if hf_ips.size == 0:
            self._tentative = None
            self.last_response = ConstitutiveResponse(stress=stress, tangent=tangent)
            return self.last_response

        self.retrace(hf_ips)
        try:
            hf, state = self.material.update_stress(strain[hf_ips], self.table.plastic.take(hf_ips))
        except ConstitutiveError as exc:
            raise ReturnMappingError(int(hf_ips[exc.index]), str(exc)) from exc
        self.counter.add(hf_ips.size, self.current_step)
        self._tentative = state

        w = self.phi[hf_ips]
        hf_only = w > 1.0 - tau
        w = np.where(hf_only, 1.0, w)
        stress[hf_ips] = w[:, None] * hf.stress + (1.0 - w[:, None]) * gp.stress[hf_ips]
        tangent[hf_ips] = w[:, None, None] * hf.tangent + (1.0 - w[:, None, None]) * gp.tangent[hf_ips]
        self.last_response = ConstitutiveResponse(stress=stress, tangent=tangent)
        return self.last_response

    # -- commit -------------------------------------------------------------

    def commit(self, step: int, strain: NDArray[np.float64] | None = None) -> int:
        """Accept the last evaluation as step ``step``. Returns the unloading count."""
        expected = self.table.steps_committed + 1
        if step != expected:
            raise CommitError(step, expected)
        strain = self._last_strain if strain is None else strain
        if strain is None or self._last_gp_stress is None:
            raise CommitError(step, expected)

        table = self.table
        hf_ips = np.flatnonzero(self.phi >= self.tau)
        if hf_ips.size:
            if self._tentative is None or len(self._tentative) != hf_ips.size:
                raise CommitError(step, expected)
            table.plastic.put(hf_ips, self._tentative)
            table.traced_through[hf_ips] = step

        vm = von_mises(self._last_gp_stress)
        gp_controlled = self.phi < self.tau
        unloading = int(np.count_nonzero(gp_controlled & (vm < table.surrogate_vm)))
        if unloading:
            logger.info("Step %d: %d surrogate-controlled IPs unloading", step, unloading)

        table.history.append(np.array(strain, dtype=np.float64, copy=True))
        table.phi = self.phi.copy()
        table.uncertainty = self.uncertainty.copy()
        table.surrogate_vm = vm
        self.surrogate.commit()
        self.current_step = step + 1
        self._tentative = None
        self._last_strain = None
        self._last_gp_stress = None
        return unloading

    def populations(self) -> tuple[int, int, int]:
        return phase_populations(self.table.phi, self.tau)
