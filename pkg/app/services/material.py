"""Plane-stress von Mises plasticity with exponential isotropic hardening.

The return mapping is nested: for a trial out-of-plane strain εzz a 3D radial
return is performed, and an outer scalar Newton on εzz drives σzz to zero. The
in-plane consistent tangent is the static condensation of the 3D algorithmic
tangent at the converged εzz.

Every function is vectorised over a leading batch axis of integration points.
Internal 3D ordering is (xx, yy, zz, xy) with tensorial xy components.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from app.config import settings
from app.schemas.run import MaterialParams
from app.services.fem import ConstitutiveError, ConstitutiveResponse

logger = logging.getLogger(__name__)

_ONE = np.array([1.0, 1.0, 1.0, 0.0])
_I_SYM = np.diag([1.0, 1.0, 1.0, 0.5])
_SHEAR_WEIGHT = np.array([1.0, 1.0, 1.0, 2.0])  # s:s with a symmetric xy pair


class ReturnMappingError(ConstitutiveError):
    pass


@dataclass
class PlasticState:
    """Plastic strain (εp_xx, εp_yy, γp_xy, εp_zz) and equivalent plastic strain, batched."""

    plastic_strain: NDArray[np.float64]  # (n, 4)
    eps_p_eq: NDArray[np.float64]  # (n,)

    @classmethod
    def virgin(cls, n: int) -> "PlasticState":
        return cls(np.zeros((n, 4)), np.zeros(n))

    def copy(self) -> "PlasticState":
        return PlasticState(self.plastic_strain.copy(), self.eps_p_eq.copy())

    def take(self, idx: NDArray[np.int64]) -> "PlasticState":
        return PlasticState(self.plastic_strain[idx].copy(), self.eps_p_eq[idx].copy())

    def put(self, idx: NDArray[np.int64], other: "PlasticState") -> None:
        self.plastic_strain[idx] = other.plastic_strain
        self.eps_p_eq[idx] = other.eps_p_eq

    def __len__(self) -> int:
        return int(self.eps_p_eq.size)


def elastic_matrix(E: float, nu: float) -> NDArray[np.float64]:
    """Plane-stress elasticity matrix for (εxx, εyy, γxy)."""
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0 <= nu < 0.5:
        raise ValueError(f"Poisson's ratio must be in [0, 0.5), got {nu}")
    d11 = E / (1.0 - nu**2)
    return np.array([[d11, nu * d11, 0.0], [nu * d11, d11, 0.0], [0.0, 0.0, E / (2.0 * (1.0 + nu))]])


def von_mises(stress: NDArray[np.float64]) -> NDArray[np.float64]:
    """Plane-stress von Mises stress of (σxx, σyy, σxy)."""
    sxx, syy, sxy = stress[..., 0], stress[..., 1], stress[..., 2]
    return np.sqrt(np.maximum(sxx**2 - sxx * syy + syy**2 + 3.0 * sxy**2, 0.0))


class VonMisesMaterial:
    def __init__(self, params: MaterialParams):
        self.params = params
        E, nu = params.E, params.nu
        self.D_e = elastic_matrix(E, nu)
        self.mu = E / (2.0 * (1.0 + nu))
        self.lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        self.kappa = self.lam + 2.0 * self.mu / 3.0
        self.C3 = self.lam * np.outer(_ONE, _ONE) + 2.0 * self.mu * _I_SYM

    # -- hardening ----------------------------------------------------------

    def yield_stress(self, eps_p_eq: NDArray[np.float64] | float) -> NDArray[np.float64]:
        ep = np.asarray(eps_p_eq, dtype=np.float64)
        if np.any(ep < 0):
            raise ValueError("equivalent plastic strain must be non-negative")
        p = self.params
        return p.sigma_inf - p.delta_sigma * np.exp(-ep / p.eps_ref)

    def hardening_modulus(self, eps_p_eq: NDArray[np.float64]) -> NDArray[np.float64]:
        p = self.params
        return (p.delta_sigma / p.eps_ref) * np.exp(-eps_p_eq / p.eps_ref)

    def _exceeds_yield(self, q: NDArray[np.float64], eps_p_eq: NDArray[np.float64]) -> NDArray[np.bool_]:
        """Trial states within round-off of the yield surface stay elastic."""
        sy = self.yield_stress(eps_p_eq)
        return q - sy > settings.yield_tol * sy

    # -- stress update ------------------------------------------------------

    def update_stress(
        self, strain: NDArray[np.float64], state: PlasticState
    ) -> tuple[ConstitutiveResponse, PlasticState]:
        """Return stress, consistent tangent and the tentative plastic state.

        ``strain`` is (n, 3); ``state`` holds the committed state of the same IPs
        and is not modified.
        """
        strain = np.atleast_2d(np.asarray(strain, dtype=np.float64))
        if not np.all(np.isfinite(strain)):
            bad = int(np.flatnonzero(~np.isfinite(strain).all(axis=1))[0])
            raise ReturnMappingError(bad, "non-finite strain")

        ep_plane = state.plastic_strain[:, :3]
        trial = (strain - ep_plane) @ self.D_e.T
        plastic = np.flatnonzero(self._exceeds_yield(von_mises(trial), state.eps_p_eq))

        stress = trial
        tangent = np.broadcast_to(self.D_e, (strain.shape[0], 3, 3)).copy()
        new_state = state.copy()

        if plastic.size:
            sub = state.take(plastic)
            s_p, d_p, st_p = self._plastic_update(strain[plastic], sub, plastic)
            stress[plastic] = s_p
            tangent[plastic] = d_p
            new_state.put(plastic, st_p)

        if settings.hf_tangent == "fd":
            tangent = self._fd_tangent(strain, state)
        return ConstitutiveResponse(stress=stress, tangent=tangent), new_state

    def _fd_tangent(self, strain: NDArray[np.float64], state: PlasticState) -> NDArray[np.float64]:
        h = settings.hf_fd_step
        tangent = np.empty((strain.shape[0], 3, 3))
        for j in range(3):
            dp, dm = strain.copy(), strain.copy()
            dp[:, j] += h
            dm[:, j] -= h
            sp = self._stress_only(dp, state)
            sm = self._stress_only(dm, state)
            tangent[:, :, j] = (sp - sm) / (2.0 * h)
        return tangent

    def _stress_only(self, strain: NDArray[np.float64], state: PlasticState) -> NDArray[np.float64]:
        ep_plane = state.plastic_strain[:, :3]
        trial = (strain - ep_plane) @ self.D_e.T
        plastic = np.flatnonzero(self._exceeds_yield(von_mises(trial), state.eps_p_eq))
        if plastic.size:
            s_p, _, _ = self._plastic_update(strain[plastic], state.take(plastic), plastic)
            trial[plastic] = s_p
        return trial

    def _plastic_update(
        self,
        strain: NDArray[np.float64],
        state: PlasticState,
        index: NDArray[np.int64],
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], PlasticState]:
        """Nested plane-stress return for IPs known to be plastic."""
        n = strain.shape[0]
        ep = state.plastic_strain
        # Elastic strain in 3D ordering, tensorial shear
        ee_plane = np.column_stack([strain[:, 0] - ep[:, 0], strain[:, 1] - ep[:, 1]])
        gamma_e = strain[:, 2] - ep[:, 2]
        # Plane-stress elastic estimate of εzz
        ezz = ep[:, 3] - self.lam / (self.lam + 2.0 * self.mu) * ee_plane.sum(axis=1)

        tol = settings.plane_stress_tol * self.params.E
        active = np.ones(n, dtype=bool)
        result: tuple[NDArray[np.float64], ...] | None = None
        for _ in range(settings.return_map_max_iter):
            ee3 = np.column_stack([ee_plane, ezz - ep[:, 3], 0.5 * gamma_e])
            result = self._radial_return(ee3, state.eps_p_eq, index)
            sigma3, C_alg = result[0], result[1]
            szz = sigma3[:, 2]
            active = np.abs(szz) > tol
            if not active.any():
                break
            ezz = ezz - np.where(active, szz / C_alg[:, 2, 2], 0.0)
        else:
            bad = int(index[np.flatnonzero(active)[0]])
            raise ReturnMappingError(bad, "plane-stress iteration did not converge")

        assert result is not None
        sigma3, C_alg, d_eps_p, d_gamma = result
        stress = sigma3[:, [0, 1, 3]]

        # Static condensation of the zz row/column; xy column scaled to engineering shear
        C = C_alg.copy()
        p, z = [0, 1, 3], 2
        D = C[:, p][:, :, p] - np.einsum("ni,nj->nij", C[:, p, z], C[:, z, p]) / C[:, z, z][:, None, None]

        new_ep = ep.copy()
        new_ep[:, 0] += d_eps_p[:, 0]
        new_ep[:, 1] += d_eps_p[:, 1]
        new_ep[:, 2] += 2.0 * d_eps_p[:, 3]
        new_ep[:, 3] += d_eps_p[:, 2]
        return stress, D, PlasticState(new_ep, state.eps_p_eq + d_gamma)

    def _radial_return(
        self,
        ee3: NDArray[np.float64],
        eps_p_eq: NDArray[np.float64],
        index: NDArray[np.int64],
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """3D radial return for trial elastic strains (xx, yy, zz, xy tensorial).

        Returns stress, algorithmic tangent in engineering-shear columns, the
        tensorial plastic strain increment and Δε_p_eq.
        """
        mu = self.mu
        vol = ee3[:, :3].sum(axis=1)
        sigma_tr = self.lam * vol[:, None] * _ONE + 2.0 * mu * ee3
        p_tr = sigma_tr[:, :3].mean(axis=1)
        s_tr = sigma_tr - p_tr[:, None] * _ONE
        norm_s = np.sqrt((_SHEAR_WEIGHT * s_tr**2).sum(axis=1))
        q_tr = np.sqrt(1.5) * norm_s
        n_ip = ee3.shape[0]
        d_gamma = np.zeros(n_ip)
        yielding = self._exceeds_yield(q_tr, eps_p_eq)
        if yielding.any():
            tol = settings.return_map_tol
            dg = np.zeros(int(yielding.sum()))
            q, ep0 = q_tr[yielding], eps_p_eq[yielding]
            scale = self.yield_stress(ep0)
            for _ in range(settings.return_map_max_iter):
                r = q - 3.0 * mu * dg - self.yield_stress(ep0 + dg)
                if np.all(np.abs(r) <= tol * scale):
                    break
                dg = dg + r / (3.0 * mu + self.hardening_modulus(ep0 + dg))
                dg = np.maximum(dg, 0.0)
            else:
                bad = int(index[np.flatnonzero(yielding)[0]])
                raise ReturnMappingError(bad, "radial return did not converge")
            d_gamma[yielding] = dg

        safe_norm = np.where(norm_s > 0, norm_s, 1.0)
        n_dir = s_tr / safe_norm[:, None]
        factor = np.where(yielding, 1.0 - 3.0 * mu * d_gamma / np.where(q_tr > 0, q_tr, 1.0), 1.0)
        sigma = p_tr[:, None] * _ONE + factor[:, None] * s_tr
        d_eps_p = (1.5 * d_gamma / np.where(q_tr > 0, q_tr, 1.0))[:, None] * s_tr

        # Algorithmic tangent: κ 1⊗1 + 2μθ I_dev − 2μ θ̄ n⊗n
        H = self.hardening_modulus(eps_p_eq + d_gamma)
        theta = factor
        theta_bar = np.where(yielding, 1.0 / (1.0 + H / (3.0 * mu)) - (1.0 - theta), 0.0)
        one_one = np.outer(_ONE, _ONE)
        I_dev = _I_SYM - one_one / 3.0
        C = (
            self.kappa * one_one[None]
            + 2.0 * mu * theta[:, None, None] * I_dev[None]
            - 2.0 * mu * theta_bar[:, None, None] * np.einsum("ni,nj->nij", n_dir, n_dir)
        )
        return sigma, C, d_eps_p, d_gamma


def sub_incremented(
    material: VonMisesMaterial, strain: NDArray[np.float64], steps: int
) -> tuple[NDArray[np.float64], PlasticState]:
    """Apply ``strain`` (n, 3) in ``steps`` equal committed increments from a virgin state."""
    strain = np.atleast_2d(strain)
    state = PlasticState.virgin(strain.shape[0])
    stress = np.zeros_like(strain)
    for k in range(1, steps + 1):
        response, state = material.update_stress(strain * (k / steps), state)
        stress = response.stress
    return stress, state
