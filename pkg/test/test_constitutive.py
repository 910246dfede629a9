import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgdm.constitutive import (
    MaterialParams,
    damage,
    elasticity_matrix,
    equivalent_strain,
    equivalent_strain_hessian,
    free_energy_density,
    interaction,
    loading_indicator,
    micro_stresses,
    point_update,
    strain_invariants,
    update_history,
    virgin_kappa,
)
from lgdm.exceptions import InvalidArgumentError
from lgdm.problems import DEFAULTS

rng = np.random.default_rng(90417)

PARAMS = DEFAULTS["sen2d"].material
VOIGT = {1: 1, 2: 3, 3: 6}


def random_strain(dim, size=None, generator=None):
    """Strains of order 1e-3, every component at least 1e-4 in magnitude"""
    generator = generator or rng
    shape = (VOIGT[dim],) if size is None else (size, VOIGT[dim])
    magnitude = generator.uniform(1e-4, 2e-3, size=shape)
    return magnitude * generator.choice([-1.0, 1.0], size=shape)


class TestMaterialParams:
    def test_defaults_valid(self):
        assert PARAMS.violations() == []
        assert PARAMS.validate() is PARAMS

    @pytest.mark.parametrize(
        "name, value", [("nu", 0.6), ("nu", 0.5), ("k", 0.5), ("R", 1.0), ("alpha", 0.0), ("E", -1.0)]
    )
    def test_invalid(self, name, value):
        params = MaterialParams(**{**PARAMS.as_dict(), name: value})
        assert [n for n, _ in params.violations()] == [name]
        with pytest.raises(InvalidArgumentError, match=name):
            params.validate()

    def test_names(self):
        assert MaterialParams.names() == ["E", "nu", "k", "kappa0", "alpha", "beta", "h", "c", "R", "n"]


class TestElasticity:
    def test_plane_strain(self):
        E, nu = 20000.0, 0.2
        C = elasticity_matrix(E, nu, 2)
        assert C.shape == (3, 3)
        assert np.isclose(C[0, 0], E * (1 - nu) / ((1 + nu) * (1 - 2 * nu)))
        assert np.isclose(C[0, 1], E * nu / ((1 + nu) * (1 - 2 * nu)))
        assert np.isclose(C[2, 2], E / (2 * (1 + nu)))

    def test_uniaxial(self):
        assert np.array_equal(elasticity_matrix(3.0, 0.3, 1), [[3.0]])

    def test_symmetric_3d(self):
        C = elasticity_matrix(1.0, 0.25, 3)
        assert np.allclose(C, C.T)
        assert np.all(np.linalg.eigvalsh(C) > 0)


class TestEquivalentStrain:
    def test_uniaxial_k1(self):
        params = DEFAULTS["bar1d"].material
        eeq, deeq = equivalent_strain(np.array([[2e-3], [-2e-3]]), params, 1)
        assert np.allclose(eeq, 2e-3 / np.sqrt(6))
        assert np.allclose(deeq[:, 0], [1 / np.sqrt(6), -1 / np.sqrt(6)])

    def test_invariants(self):
        I1, J2, _ = strain_invariants(np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0]), 3)
        assert I1 == pytest.approx(6.0)
        assert J2 == pytest.approx(1.0)

    def test_zero_strain(self):
        eeq, deeq = equivalent_strain(np.zeros(3), PARAMS, 2)
        a = (PARAMS.k - 1) / (2 * PARAMS.k * (1 - 2 * PARAMS.nu))
        assert eeq == 0.0
        assert np.allclose(deeq, [a, a, 0.0])
        assert np.all(equivalent_strain_hessian(np.zeros(3), PARAMS, 2) == 0)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    @given(scale=st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=30, deadline=None)
    def test_homogeneous_degree_one(self, dim, scale):
        strain = random_strain(dim)
        eeq, _ = equivalent_strain(strain, PARAMS, dim)
        scaled, _ = equivalent_strain(scale * strain, PARAMS, dim)
        assert scaled == pytest.approx(scale * eeq, rel=1e-12)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_gradient_finite_differences(self, dim):
        step = 1e-8
        for strain in random_strain(dim, 100, np.random.default_rng(dim)):
            _, deeq = equivalent_strain(strain, PARAMS, dim)
            fd = np.empty(VOIGT[dim])
            for i in range(VOIGT[dim]):
                e = np.zeros(VOIGT[dim])
                e[i] = step
                fd[i] = (
                    equivalent_strain(strain + e, PARAMS, dim)[0]
                    - equivalent_strain(strain - e, PARAMS, dim)[0]
                ) / (2 * step)
            assert np.allclose(deeq, fd, atol=1e-6)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_hessian_finite_differences(self, dim):
        step = 1e-9
        for strain in random_strain(dim, 100, np.random.default_rng(dim)):
            hess = equivalent_strain_hessian(strain, PARAMS, dim)
            scale = np.abs(hess).max()
            for i in range(VOIGT[dim]):
                e = np.zeros(VOIGT[dim])
                e[i] = step
                fd = (
                    equivalent_strain(strain + e, PARAMS, dim)[1]
                    - equivalent_strain(strain - e, PARAMS, dim)[1]
                ) / (2 * step)
                # the 1D Hessian vanishes, its finite differences are round-off
                assert np.allclose(hess[:, i], fd, atol=1e-6 * scale + 1e-6)

    def test_uniaxial_hessian_vanishes(self):
        strains = random_strain(1, 20)
        hess = equivalent_strain_hessian(strains, DEFAULTS["bar1d"].material, 1)
        assert np.allclose(hess[:, 0, 0] * np.abs(strains[:, 0]), 0.0, atol=1e-12)

    def test_vectorized(self):
        strains = random_strain(3, 10)
        eeq, deeq = equivalent_strain(strains, PARAMS, 3)
        assert eeq.shape == (10,) and deeq.shape == (10, 6)
        single, _ = equivalent_strain(strains[4], PARAMS, 3)
        assert single == pytest.approx(eeq[4])


class TestDamage:
    def test_threshold_and_continuity(self):
        k0 = PARAMS.kappa0
        D, dD = damage(k0, PARAMS)
        assert D == 0.0 and dD == 0.0
        assert abs(damage(k0 * (1 + 1e-9), PARAMS)[0]) < 1e-6

    def test_range_and_monotonic(self):
        kappa = np.sort(rng.uniform(0, 50 * PARAMS.kappa0, 1000))
        D, _ = damage(kappa, PARAMS)
        assert np.all(D >= 0) and np.all(D < 1)
        assert np.all(np.diff(D) >= 0)

    @given(kappa=st.floats(min_value=1e-6, max_value=0.1))
    @settings(max_examples=50, deadline=None)
    def test_bounded(self, kappa):
        D, dD = damage(kappa, PARAMS)
        assert 0 <= D < 1
        assert dD >= 0

    def test_derivative_finite_differences(self):
        kappa = rng.uniform(1.01, 20, 100) * PARAMS.kappa0
        step = 1e-6 * kappa
        _, dD = damage(kappa, PARAMS)
        fd = (damage(kappa + step, PARAMS)[0] - damage(kappa - step, PARAMS)[0]) / (2 * step)
        assert np.allclose(dD, fd, rtol=1e-6)

    def test_per_point_threshold(self):
        kappa0 = np.array([1e-4, 2e-4])
        D, _ = damage(np.array([1.5e-4, 1.5e-4]), PARAMS, kappa0)
        assert D[0] > 0 and D[1] == 0

    def test_residual_limit(self):
        D, _ = damage(1e3, PARAMS)
        assert D == pytest.approx(1 - PARAMS.kappa0 / 1e3 * (1 - PARAMS.alpha))


class TestInteraction:
    def test_limits(self):
        g, _ = interaction(np.array([0.0, 1.0]), PARAMS)
        assert abs(g[0] - 1) < 1e-14
        assert abs(g[1] - PARAMS.R) < 1e-14

    def test_derivative_finite_differences(self):
        D = rng.uniform(0.01, 0.99, 100)
        step = 1e-7
        _, dg = interaction(D, PARAMS)
        fd = (interaction(D + step, PARAMS)[0] - interaction(D - step, PARAMS)[0]) / (2 * step)
        assert np.allclose(dg, fd, rtol=1e-6)
        assert np.all(dg < 0)


class TestHistory:
    def test_strict_increase(self):
        prev = np.full(3, 1e-3)
        ebar = prev + np.array([1e-9, 5e-11, -1e-4])
        assert np.array_equal(update_history(ebar, prev), [ebar[0], prev[1], prev[2]])
        assert np.array_equal(loading_indicator(ebar, prev), [1.0, 0.0, 0.0])

    def test_lower_bound(self):
        assert update_history(0.0, 0.0, kappa0=1e-4) == 1e-4

    def test_virgin(self):
        assert np.array_equal(virgin_kappa(None, PARAMS, 3), np.full(3, PARAMS.kappa0))
        with pytest.raises(InvalidArgumentError):
            virgin_kappa(np.ones(2), PARAMS, 3)


class TestMicroStresses:
    def test_values(self):
        sbar, xi = micro_stresses(2e-4, 1.5e-4, np.array([1e-5, -2e-5]), 0.5, PARAMS)
        assert sbar == pytest.approx(PARAMS.h * 5e-5)
        assert np.allclose(xi, 0.5 * PARAMS.h * PARAMS.c * np.array([1e-5, -2e-5]))

    def test_vectorized(self):
        grad = rng.normal(size=(7, 3))
        sbar, xi = micro_stresses(np.zeros(7), np.ones(7), grad, np.ones(7), PARAMS)
        assert sbar.shape == (7,) and xi.shape == (7, 3)
        assert np.all(sbar == -PARAMS.h)


class TestPointUpdate:
    def test_fields(self):
        C = elasticity_matrix(PARAMS.E, PARAMS.nu, 2)
        strain = random_strain(2, 5)
        ebar = np.full(5, 3 * PARAMS.kappa0)
        kappa0 = np.full(5, PARAMS.kappa0)
        state = point_update(strain, ebar, np.zeros((5, 2)), kappa0, kappa0, PARAMS, C, 2)
        assert np.array_equal(state.kappa, ebar)
        assert np.all(state.loading == 1)
        assert np.all((state.D > 0) & (state.D < 1))
        assert np.all(state.g < 1)
        eeq, deeq = equivalent_strain(strain, PARAMS, 2)
        expected = (1 - state.D)[:, None] * strain @ C.T + (
            PARAMS.h * (eeq - ebar)
        )[:, None] * deeq
        assert np.allclose(state.sigma, expected)

    def test_virgin_energy(self):
        C = elasticity_matrix(PARAMS.E, PARAMS.nu, 2)
        strain = np.array([1e-4, 0.0, 0.0])
        eeq, _ = equivalent_strain(strain, PARAMS, 2)
        psi = free_energy_density(strain, 0.0, eeq, eeq, np.zeros(2), 1.0, PARAMS, C)
        assert psi == pytest.approx(0.5 * C[0, 0] * 1e-8)
