"""Tests for plane-stress von Mises plasticity."""

import numpy as np
import pytest

from app.services.material import (
    PlasticState,
    ReturnMappingError,
    elastic_matrix,
    sub_incremented,
    von_mises,
)

PLASTIC_STRAIN = np.array([[0.01, -0.002, 0.004]])


def fd_tangent(material, strain, state, h=1e-6):
    tangent = np.empty((3, 3))
    for j in range(3):
        dp, dm = strain.copy(), strain.copy()
        dp[0, j] += h
        dm[0, j] -= h
        sp = material.update_stress(dp, state)[0].stress[0]
        sm = material.update_stress(dm, state)[0].stress[0]
        tangent[:, j] = (sp - sm) / (2 * h)
    return tangent


class TestElasticity:
    def test_elastic_matrix(self):
        D = elastic_matrix(3130.0, 0.37)
        assert D[0, 0] == pytest.approx(3130.0 / (1 - 0.37**2))
        assert D[0, 1] == pytest.approx(0.37 * D[0, 0])
        assert D[2, 2] == pytest.approx(3130.0 / (2 * 1.37))
        np.testing.assert_allclose(D, D.T)

    @pytest.mark.parametrize("E, nu", [(0.0, 0.3), (100.0, 0.5), (100.0, -0.1)])
    def test_elastic_matrix_rejects(self, E, nu):
        with pytest.raises(ValueError):
            elastic_matrix(E, nu)

    def test_below_yield_is_linear(self, material):
        strain = np.array([[2e-4, -1e-4, 1e-4]])
        response, state = material.update_stress(strain, PlasticState.virgin(1))
        np.testing.assert_allclose(response.stress[0], material.D_e @ strain[0])
        np.testing.assert_allclose(response.tangent[0], material.D_e)
        assert state.eps_p_eq[0] == 0.0

    def test_von_mises_uniaxial(self):
        assert von_mises(np.array([50.0, 0.0, 0.0])) == pytest.approx(50.0)
        assert von_mises(np.array([0.0, 0.0, 10.0])) == pytest.approx(10.0 * np.sqrt(3.0))


class TestHardening:
    def test_initial_yield_stress(self, material):
        assert float(material.yield_stress(0.0)) == pytest.approx(31.20)

    def test_saturation(self, material):
        assert float(material.yield_stress(1.0)) == pytest.approx(64.80, rel=1e-6)

    def test_negative_plastic_strain(self, material):
        with pytest.raises(ValueError):
            material.yield_stress(-1e-3)


class TestReturnMapping:
    def test_consistency(self, material):
        response, state = material.update_stress(PLASTIC_STRAIN, PlasticState.virgin(1))
        assert state.eps_p_eq[0] > 0
        assert von_mises(response.stress[0]) == pytest.approx(
            float(material.yield_stress(state.eps_p_eq[0])), rel=1e-9
        )

    def test_plastic_flow_is_isochoric(self, material):
        _, state = material.update_stress(PLASTIC_STRAIN, PlasticState.virgin(1))
        ep = state.plastic_strain[0]
        assert ep[0] + ep[1] + ep[3] == pytest.approx(0.0, abs=1e-12)

    def test_committed_state_untouched(self, material):
        state = PlasticState.virgin(1)
        material.update_stress(PLASTIC_STRAIN, state)
        assert state.eps_p_eq[0] == 0.0
        assert not state.plastic_strain.any()

    def test_consistent_tangent(self, material):
        state = PlasticState.virgin(1)
        response, _ = material.update_stress(PLASTIC_STRAIN, state)
        np.testing.assert_allclose(response.tangent[0], fd_tangent(material, PLASTIC_STRAIN, state), rtol=1e-4, atol=1.0)

    def test_consistent_tangent_with_history(self, material):
        _, state = material.update_stress(PLASTIC_STRAIN, PlasticState.virgin(1))
        strain = PLASTIC_STRAIN + np.array([[0.002, 0.001, -0.001]])
        response, _ = material.update_stress(strain, state)
        np.testing.assert_allclose(response.tangent[0], fd_tangent(material, strain, state), rtol=1e-4, atol=1.0)

    def test_pure_shear_path_independence(self, material):
        strain = np.array([[0.0, 0.0, 0.02]])
        one_step, state_one = sub_incremented(material, strain, 1)
        many_steps, state_many = sub_incremented(material, strain, 20)
        np.testing.assert_allclose(one_step, many_steps, rtol=1e-8, atol=1e-8)
        assert state_one.eps_p_eq[0] == pytest.approx(state_many.eps_p_eq[0], rel=1e-8)
        assert abs(one_step[0, 0]) < 1e-8 and abs(one_step[0, 1]) < 1e-8

    def test_elastic_unloading(self, material):
        _, state = material.update_stress(PLASTIC_STRAIN, PlasticState.virgin(1))
        response, unloaded = material.update_stress(PLASTIC_STRAIN * 0.99, state)
        np.testing.assert_allclose(response.tangent[0], material.D_e)
        assert unloaded.eps_p_eq[0] == state.eps_p_eq[0]

    def test_state_on_yield_surface_reloads_elastically(self, material):
        response, state = material.update_stress(PLASTIC_STRAIN, PlasticState.virgin(1))
        again, same = material.update_stress(PLASTIC_STRAIN, state)
        np.testing.assert_allclose(again.tangent[0], material.D_e)
        np.testing.assert_allclose(again.stress[0], response.stress[0], rtol=1e-9, atol=1e-9)
        assert same.eps_p_eq[0] == state.eps_p_eq[0]

    def test_small_overshoot_of_yield_surface_is_plastic(self, material):
        _, state = material.update_stress(PLASTIC_STRAIN, PlasticState.virgin(1))
        _, further = material.update_stress(PLASTIC_STRAIN * 1.0001, state)
        assert further.eps_p_eq[0] > state.eps_p_eq[0]

    def test_batched_matches_single(self, material):
        strains = np.array([[2e-4, 0.0, 0.0], [0.01, -0.002, 0.004], [0.0, 0.0, 0.02]])
        batch, _ = material.update_stress(strains, PlasticState.virgin(3))
        for i in range(3):
            single, _ = material.update_stress(strains[i : i + 1], PlasticState.virgin(1))
            np.testing.assert_allclose(batch.stress[i], single.stress[0], rtol=1e-12)

    def test_non_finite_strain_reports_index(self, material):
        strains = np.array([[0.0, 0.0, 0.0], [np.nan, 0.0, 0.0]])
        with pytest.raises(ReturnMappingError) as exc_info:
            material.update_stress(strains, PlasticState.virgin(2))
        assert exc_info.value.index == 1


class TestPlasticState:
    def test_take_and_put(self):
        state = PlasticState.virgin(4)
        sub = PlasticState(np.ones((2, 4)), np.array([0.1, 0.2]))
        state.put(np.array([1, 3]), sub)
        taken = state.take(np.array([3]))
        assert taken.eps_p_eq[0] == 0.2
        assert len(state) == 4
        assert state.eps_p_eq[0] == 0.0


def random_states(material, rng, n=1000):
    """Committed states from random plastic pre-strains, and fresh strains around them."""
    directions = rng.standard_normal((n, 3))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    pre = directions * rng.uniform(0.0, 0.04, n)[:, None]
    _, state = material.update_stress(pre, PlasticState.virgin(n))
    return pre + rng.uniform(-0.01, 0.01, (n, 3)), state


class TestRandomStates:
    def test_consistent_tangent(self, material, rng):
        strain, state = random_states(material, rng)
        response, _ = material.update_stress(strain, state)
        h = 1e-6
        fd = np.empty_like(response.tangent)
        for j in range(3):
            dp, dm = strain.copy(), strain.copy()
            dp[:, j] += h
            dm[:, j] -= h
            fd[:, :, j] = (material.update_stress(dp, state)[0].stress - material.update_stress(dm, state)[0].stress) / (
                2 * h
            )
        # Differences that straddle the yield surface measure the kink, not the tangent
        q_trial = von_mises((strain - state.plastic_strain[:, :3]) @ material.D_e.T)
        sy = material.yield_stress(state.eps_p_eq)
        clear = np.abs(q_trial - sy) > 1e-3 * sy
        assert clear.sum() > 900
        error = np.linalg.norm(response.tangent - fd, axis=(1, 2)) / np.linalg.norm(material.D_e)
        assert error[clear].max() <= 1e-4

    def test_returned_states_are_admissible(self, material, rng):
        strain, state = random_states(material, rng)
        response, new_state = material.update_stress(strain, state)
        d_eps = new_state.eps_p_eq - state.eps_p_eq
        assert np.all(d_eps >= 0.0)
        plastic = d_eps > 0
        assert plastic.any()
        sy = material.yield_stress(new_state.eps_p_eq[plastic])
        assert np.all(np.abs(von_mises(response.stress[plastic]) - sy) <= 1e-8 * sy)
        # In-plane stress is the plane-stress elastic response only when σzz vanishes
        elastic_part = (strain - new_state.plastic_strain[:, :3]) @ material.D_e.T
        assert np.abs(response.stress - elastic_part).max() <= 1e-9 * material.params.E

    def test_sub_incrementation_converges_on_general_paths(self, material):
        directions = np.array([[1.0, -0.5, 0.0], [1.0, -0.2, 0.8], [-0.3, 1.0, 0.5], [0.7, 0.7, 0.3]])
        strain = 0.1 * directions / np.linalg.norm(directions, axis=1)[:, None]
        one, _ = sub_incremented(material, strain, 1)
        hundred, _ = sub_incremented(material, strain, 100)
        reference, _ = sub_incremented(material, strain, 200)
        scale = np.linalg.norm(reference, axis=1)
        fine_gap = np.linalg.norm(hundred - reference, axis=1)
        assert np.all(fine_gap <= 0.01 * scale)
        assert np.all(fine_gap <= np.linalg.norm(one - reference, axis=1) + 1e-8 * scale)
