import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_field, seeds
from qggibbs.dynamics import (
    NumericalBlowup,
    Trajectory,
    affine_term,
    divergence_eps_sweep,
    energy,
    enstrophy,
    integrate,
    integrate_arrays,
    liouville_divergence,
    nonlinear_neutrality,
    nonlinear_term,
    pseudoenergy,
    pseudoenergy_arrays,
    rk4_step,
    vector_field,
    weak_residual,
)
from qggibbs.gibbs import GibbsParams, State, mode_variances, sample_ensemble, sample_state, u_variance
from qggibbs.spectral import (
    SpectralField,
    apply_diag,
    helmholtz_inv,
    jacobian_triad,
    laplacian_inverse,
    mean_product,
    partial_x,
    synthesize_on_grid,
)


def no_topography(N=5, beta=1.0, mu=1.0):
    return GibbsParams(1.0, mu, beta, SpectralField.zeros(N), N)


def random_state(N, seed):
    rng = np.random.default_rng(seed)
    return State(float(rng.standard_normal()), random_field(N, rng))


class TestVectorField:
    def test_zero_vorticity(self, params5):
        s = State(0.7, SpectralField.zeros(5))
        dU, dw = vector_field(s, params5)
        forcing = apply_diag(apply_diag(params5.h_N, helmholtz_inv(params5.mu)), partial_x)
        assert dU == 0
        assert np.allclose(dw.coeffs, -0.7 * params5.mu * forcing.coeffs, rtol=1e-14, atol=0)

    def test_pure_rossby(self):
        p = no_topography(beta=2.0, mu=4.0)
        s = State(0.5, random_field(5, np.random.default_rng(0)))
        _, dw = vector_field(s, p)
        rossby = -apply_diag(s.omega, lambda j, k: -1j * p.beta * j / (j * j + k * k))
        expected = rossby - nonlinear_term(s.omega)
        assert np.allclose(dw.coeffs, expected.coeffs, rtol=1e-13, atol=1e-15)

    @given(seeds, st.sampled_from([1, 2, 5, 8, 13]))
    def test_matches_term_by_term(self, seed, N):
        p = GibbsParams(1.3, 0.7, 0.4, random_field(N + 3, np.random.default_rng(seed + 1)), N)
        s = random_state(N, seed)
        dU, dw = vector_field(s, p)
        lap = apply_diag(s.omega, laplacian_inverse)
        g = apply_diag(p.h_N, helmholtz_inv(p.mu))
        reference = (
            -jacobian_triad(lap, s.omega, N)
            - apply_diag(s.omega, partial_x) * (s.U - p.beta / p.mu)
            - apply_diag(g, partial_x) * (s.U * p.mu)
            - jacobian_triad(g, s.omega, N)
            - jacobian_triad(lap, g * p.mu, N)
            - apply_diag(lap, partial_x) * p.beta
        )
        assert np.allclose(dw.coeffs, reference.coeffs, rtol=1e-12, atol=1e-13)
        assert np.allclose(-nonlinear_term(s.omega).coeffs - affine_term(s, p).coeffs, dw.coeffs, atol=1e-13)
        # mean-flow coupling through the coefficient duality (2 * integral = 8 pi^2 * average)
        dx_lap = apply_diag(lap, partial_x)
        assert dU == pytest.approx(8 * np.pi**2 * mean_product(p.h_N, dx_lap), rel=1e-12, abs=1e-14)

    def test_conjugate_symmetry(self, params5):
        _, dw = vector_field(random_state(5, 3), params5)
        assert np.all(dw.coeffs[dw.index.real_mask].imag == 0)

    def test_cutoff_mismatch(self, params5):
        with pytest.raises(ValueError):
            vector_field(random_state(7, 0), params5)


class TestIntegration:
    def test_zero_fixed_point(self):
        p = no_topography()
        traj = integrate(State(0.0, SpectralField.zeros(5)), p, 0.1, 1.0)
        assert all(s.U == 0 and not np.any(s.omega.coeffs) for s in traj.states)
        assert len(traj) == 11 and traj.times[-1] == pytest.approx(1.0)

    def test_linear_oscillator(self):
        p = no_topography(N=8, beta=1.3)
        s = random_state(8, 2)
        lam = -1j * p.index.j_red * ((s.U - p.beta / p.mu) - p.beta / p.index.modulus2_red)
        errs = []
        for dt in (0.1, 0.05):
            n = int(round(1 / dt))
            _, W, _, _ = integrate_arrays(np.asarray(s.U), s.omega.coeffs, p, dt, n, nonlinear=False)
            errs.append(np.max(np.abs(W - np.exp(lam) * s.omega.coeffs)))
            z = lam * dt
            R = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
            assert np.allclose(W, R**n * s.omega.coeffs, rtol=0, atol=1e-13)
        assert 16 / 2 <= errs[0] / errs[1] <= 16 * 2

    def test_rk4_step_matches_integrate(self, params5):
        s = random_state(5, 4)
        a = rk4_step(rk4_step(s, params5, 0.05), params5, 0.05)
        b = integrate(s, params5, 0.05, 0.1).states[-1]
        assert a.U == b.U and np.array_equal(a.omega.coeffs, b.omega.coeffs)

    def test_state_stays_real(self, params5):
        s = rk4_step(random_state(5, 5), params5, 0.1)
        assert np.all(s.omega.coeffs[s.omega.index.real_mask].imag == 0)

    def test_stride(self, params5):
        traj = integrate(random_state(5, 1), params5, 0.01, 0.1, stride=5)
        assert np.allclose(traj.times, [0, 0.05, 0.1])

    @pytest.mark.parametrize("dt, T", [(0.0, 1.0), (-0.1, 1.0), (0.1, 0.05), (0.3, 1.0)])
    def test_bad_steps(self, params5, dt, T):
        with pytest.raises(ValueError):
            integrate(random_state(5, 0), params5, dt, T)

    def test_blowup_detected(self, params5):
        s = State(1e200, random_field(5, np.random.default_rng(0)) * 1e200)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(NumericalBlowup):
                integrate(s, params5, 0.5, 1.0)
            with pytest.raises(NumericalBlowup):
                rk4_step(s, params5, 0.5)

    def test_batch_flags_nonfinite_members(self, params5):
        U, W = sample_ensemble(params5, 3, 0)
        U[1] = 1e300
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _, _, finite, _ = integrate_arrays(U, W, params5, 0.5, 4)
        assert finite.tolist() == [True, False, True]


class TestInvariants:
    def test_pseudoenergy_zero_vorticity(self, params5):
        assert pseudoenergy(State(1.5, SpectralField.zeros(5)), params5) == pytest.approx(0.5 * 1.5**2)

    def test_pseudoenergy_quadrature(self):
        p = no_topography(mu=1.0)
        c = 0.8
        s = State(0.0, SpectralField.from_modes(5, {(0, 1): c}))
        n = 32
        w = synthesize_on_grid(s.omega, n, n)
        q = synthesize_on_grid(s.omega - apply_diag(s.omega, laplacian_inverse) * p.mu, n, n)
        integral = float(np.sum(q * w)) * (2 * np.pi / n) ** 2
        # the coefficient duality is twice the integral
        assert pseudoenergy(s, p) == pytest.approx(0.5 * 2 * integral, rel=1e-12)
        assert pseudoenergy(s, p) == pytest.approx(c * c)

    def test_equipartition(self, params5):
        M = 50_000
        U, W = sample_ensemble(params5, M, 2)
        S = pseudoenergy_arrays(U, W, params5)
        idx = params5.index
        n_coords = 1 + idx.n_reduced + int(np.count_nonzero(~idx.real_mask))
        expected = n_coords / (2 * params5.alpha)
        assert abs(S.mean() - expected) <= 5 * S.std() / np.sqrt(M)

    def test_gibbs_weight_is_pseudoenergy(self, params5):
        # -log density of the sampled Gaussian equals alpha * S up to a constant
        rng = np.random.default_rng(0)
        idx = params5.index
        sig2 = mode_variances(params5)
        for _ in range(3):
            s = random_state(5, int(rng.integers(1 << 30)))
            c = s.omega.coeffs
            quad = s.U**2 / (2 * u_variance(params5)) + np.sum(
                np.where(idx.real_mask, c.real**2 / (2 * sig2), np.abs(c) ** 2 / sig2)
            )
            assert quad == pytest.approx(params5.alpha * pseudoenergy(s, params5), rel=1e-12)

    @given(seeds)
    def test_energy_enstrophy_pseudoenergy_relation(self, seed):
        p = GibbsParams.default(5, mu=1.7, beta=0.6)
        s0 = random_state(5, seed)
        s1 = random_state(5, seed + 1)
        rel = lambda s: p.mu * energy(s, p) + enstrophy(s, p) - pseudoenergy(s, p)  # noqa: E731
        assert rel(s0) == pytest.approx(rel(s1), rel=1e-12, abs=1e-12)

    def test_conservation_under_refinement(self, params5):
        s = sample_state(params5, np.random.default_rng(8))
        drift = {}
        for dt in (0.05, 0.025):
            traj = integrate(s, params5, dt, 1.0)
            for name, f in (("S", pseudoenergy), ("E", energy), ("Q", enstrophy)):
                v = np.array([f(x, params5) for x in traj.states])
                drift.setdefault(name, []).append(np.max(np.abs(v - v[0])) / abs(v[0]))
        for name, (a, b) in drift.items():
            assert a < 1e-3 and 8 <= a / b <= 40, name

    @given(seeds, st.sampled_from([3, 5, 12, 20]))
    def test_neutrality(self, seed, N):
        a, b = nonlinear_neutrality(random_field(N, np.random.default_rng(seed)))
        assert a <= 1e-10 and b <= 1e-10


class TestLiouville:
    @pytest.mark.parametrize("N", [5, 12])
    def test_gibbs_states(self, N):
        p = GibbsParams.default(N)
        rng = np.random.default_rng(N)
        for _ in range(10):
            s = sample_state(p, rng)
            assert abs(liouville_divergence(s, p, 1e-5, normalize=True)) <= 1e-6

    def test_zero_vorticity(self, params5):
        assert liouville_divergence(State(0.4, SpectralField.zeros(5)), params5) == pytest.approx(0, abs=1e-9)

    def test_eps_sweep_stable(self, params5):
        vals = divergence_eps_sweep(sample_state(params5, np.random.default_rng(1)), params5)
        assert max(abs(v) for v in vals) <= 1e-6

    def test_detects_wrong_measure(self):
        # a field with a non-vanishing divergence: add linear damping
        p = GibbsParams.default(5)
        s = sample_state(p, np.random.default_rng(2))
        from qggibbs import dynamics

        ops = dynamics._operators(p)
        orig = ops.rhs

        def damped(U, W):
            dU, dW = orig(U, W)
            return dU, dW - 0.1 * W

        object.__setattr__(ops, "rhs", damped)
        try:
            assert abs(liouville_divergence(s, p, normalize=True)) > 1e-3
        finally:
            object.__delattr__(ops, "rhs")

    def test_bad_eps(self, params5):
        with pytest.raises(ValueError):
            liouville_divergence(random_state(5, 0), params5, eps=0)


class TestWeakResidual:
    def test_zero_fixed_point(self):
        p = no_topography()
        traj = integrate(State(0.0, SpectralField.zeros(5)), p, 0.1, 1.0)
        assert weak_residual(traj, SpectralField.from_modes(5, {(1, 1): 1.0})) == 0

    def test_projected_out_phi(self, params5):
        traj = integrate(random_state(5, 0), params5, 0.1, 0.5)
        phi = SpectralField.from_modes(9, {(0, 3): 1.0})
        res, series = weak_residual(traj, phi, return_series=True)
        assert res == 0 and not np.any(series)

    def test_second_order(self, params5):
        s = random_state(5, 6)
        phi = SpectralField.from_modes(5, {(1, 1): 1.0, (0, 2): -0.5})
        r = [weak_residual(integrate(s, params5, dt, 1.0), phi) for dt in (0.05, 0.025)]
        assert np.log2(r[0] / r[1]) == pytest.approx(2.0, abs=0.05)

    def test_sign_convention(self, params5):
        # the derivative of <w, phi> equals minus the kernel pairing minus the affine term
        from qggibbs.chaos import hphi_kernel_truncated, pair_tensor
        from qggibbs.spectral import duality

        s = random_state(5, 7)
        phi = random_field(5, np.random.default_rng(70))
        _, dw = vector_field(s, params5)
        rate = -pair_tensor(s.omega, hphi_kernel_truncated(phi, 5)) - duality(affine_term(s, params5), phi)
        assert duality(dw, phi) == pytest.approx(rate, rel=1e-12)

    def test_trajectory_type(self, params5):
        traj = integrate(random_state(5, 0), params5, 0.1, 0.2)
        assert isinstance(traj, Trajectory) and traj.params is params5
