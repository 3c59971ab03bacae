import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import cutoffs, random_field, seeds
from qggibbs.spectral import (
    PARSEVAL,
    ModeIndex,
    SpectralField,
    analyze_on_grid,
    apply_diag,
    beta_term,
    duality,
    grid_points,
    helmholtz_inv,
    inner_product,
    jacobian_triad,
    laplacian_inverse,
    make_index_set,
    mean_product,
    partial_x,
    project,
    sobolev_norm,
    synthesize_on_grid,
)


def grid_jacobian(a, b, n):
    """grad^perp a . grad b evaluated pointwise from exact grid derivatives."""
    x = grid_points(n)
    y = grid_points(n)

    def derivs(f):
        idx = f.index
        c = f.full()
        ex = np.exp(1j * np.outer(idx.j_full, x)) / (2 * np.pi)
        s = np.sin(np.outer(idx.k_full, y))
        co = np.cos(np.outer(idx.k_full, y))
        fx = np.einsum("l,lx,ly->xy", 1j * idx.j_full * c, ex, s).real
        fy = np.einsum("l,lx,ly->xy", idx.k_full * c, ex, co).real
        return fx, fy

    ax, ay = derivs(a)
    bx, by = derivs(b)
    return -ay * bx + ax * by


def grid_integral(values):
    n = values.shape[0]
    return float(np.sum(values)) * (2 * np.pi / n) ** 2


class TestIndexSet:
    def test_small_sets(self):
        assert make_index_set(1).full == ((0, 1),)
        assert make_index_set(2).full == ((-1, 1), (0, 1), (1, 1))
        assert set(make_index_set(5).reduced) == {(0, 1), (0, 2), (1, 1), (1, 2), (2, 1)}

    @pytest.mark.parametrize("N", [0, -3, 2.5])
    def test_rejects_bad_cutoff(self, N):
        with pytest.raises(ValueError):
            make_index_set(N)

    @given(cutoffs)
    def test_structure(self, N):
        idx = make_index_set(N)
        brute = {(j, k) for k in range(1, 5) for j in range(-4, 5) if j * j + k * k <= N}
        assert set(idx.full) == brute
        assert set(m.reflect() for m in idx.full) == set(idx.full)
        rebuilt = set(idx.reduced) | {m.reflect() for m in idx.reduced if m.j != 0}
        assert rebuilt == set(idx.full)
        assert list(idx.full) == sorted(idx.full, key=lambda m: (m.k, m.j))

    def test_mode_index(self):
        m = ModeIndex(-2, 3)
        assert m.modulus2 == 13
        assert m.reflect() == (2, 3)


class TestSpectralField:
    def test_j0_must_be_real(self):
        with pytest.raises(ValueError):
            SpectralField.from_modes(2, {(0, 1): 1j})

    def test_outside_modes_rejected(self):
        with pytest.raises(ValueError):
            SpectralField.from_modes(2, {(0, 2): 1.0})

    def test_negative_j_is_conjugated(self):
        f = SpectralField.from_modes(2, {(-1, 1): 1 + 2j})
        assert f.coefficient(1, 1) == 1 - 2j
        assert f.coefficient(-1, 1) == 1 + 2j
        assert f.coefficient(5, 5) == 0

    def test_inconsistent_partners_rejected(self):
        with pytest.raises(ValueError):
            SpectralField.from_modes(2, {(1, 1): 1.0, (-1, 1): 2.0})

    def test_coefficients_frozen(self):
        f = SpectralField.zeros(5)
        with pytest.raises(ValueError):
            f.coeffs[0] = 1.0

    def test_complex_scalar_rejected(self):
        with pytest.raises(TypeError):
            SpectralField.zeros(2) * 1j

    @given(seeds, cutoffs)
    def test_full_is_conjugate_symmetric(self, seed, N):
        f = random_field(N, np.random.default_rng(seed))
        full = f.full()
        idx = f.index
        assert np.array_equal(full[idx.reflection], np.conj(full))

    def test_project_pads_and_restricts(self):
        f = SpectralField.from_modes(5, {(2, 1): 3.0, (0, 1): 1.0})
        g = project(f, 2)
        assert g.coefficient(0, 1) == 1.0 and g.N == 2
        assert project(g, 5).coefficient(2, 1) == 0


class TestApplyDiag:
    def test_symbols(self):
        f = SpectralField.from_modes(5, {(1, 2): 1.0})
        assert apply_diag(f, laplacian_inverse).coefficient(1, 2) == pytest.approx(-0.2)
        g = SpectralField.from_modes(5, {(0, 1): 1.0, (0, 2): 2.0})
        assert np.all(apply_diag(g, partial_x).coeffs == 0)
        h = SpectralField.from_modes(5, {(2, 1): 1.0})
        assert apply_diag(h, helmholtz_inv(3.0)).coefficient(2, 1) == pytest.approx(1 / 8)
        assert apply_diag(h, beta_term(2.0)).coefficient(2, 1) == pytest.approx(-1j * 2.0 * 2 / 5)

    def test_reality_violating_symbol_rejected(self):
        with pytest.raises(ValueError):
            apply_diag(SpectralField.zeros(5), lambda j, k: 1j + 0 * j)


class TestPairings:
    def test_inner_product_examples(self):
        a = SpectralField.from_modes(2, {(0, 1): 1.0})
        assert inner_product(a, a) == pytest.approx(0.5)
        b = SpectralField.from_modes(4, {(0, 1): 1.0})
        c = SpectralField.from_modes(4, {(0, 2): 1.0})
        assert inner_product(b, c) == 0
        d = SpectralField.from_modes(2, {(1, 1): 1.0})
        assert inner_product(d, d) == pytest.approx(1.0)
        assert mean_product(d, d) == pytest.approx(1 / (4 * np.pi**2))
        assert duality(d, d) == pytest.approx(inner_product(d, d) / PARSEVAL)

    def test_cutoff_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(SpectralField.zeros(2), SpectralField.zeros(5))

    @given(seeds, st.integers(1, 64))
    def test_parseval_against_quadrature(self, seed, N):
        rng = np.random.default_rng(seed)
        a, b = random_field(N, rng), random_field(N, rng)
        n = 24
        q = grid_integral(synthesize_on_grid(a, n, n) * synthesize_on_grid(b, n, n))
        assert inner_product(a, b) == pytest.approx(q, rel=1e-8, abs=1e-8)

    def test_sobolev_norm(self):
        assert sobolev_norm(SpectralField.from_modes(1, {(0, 1): 1.0}), 0) == 1.0
        assert sobolev_norm(SpectralField.from_modes(4, {(0, 2): 1.0}), 1) == pytest.approx(4.0)
        assert sobolev_norm(SpectralField.zeros(3), 0.7) == 0.0
        # the weight is (j^2 + k^2)^(2 s), summed over both +-j
        f = SpectralField.from_modes(2, {(1, 1): 1.0})
        assert sobolev_norm(f, 0.5) == pytest.approx(np.sqrt(2 * 2.0))


class TestJacobianTriad:
    @given(seeds, st.integers(1, 20))
    def test_self_jacobian_vanishes(self, seed, N):
        a = random_field(N, np.random.default_rng(seed))
        assert np.max(np.abs(jacobian_triad(a, a).coeffs)) < 1e-12 * (1 + np.max(np.abs(a.coeffs)) ** 2)

    @pytest.mark.parametrize("N, N_out", [(5, 5), (8, 20), (8, 3), (13, 13)])
    def test_against_grid(self, N, N_out):
        rng = np.random.default_rng(N * 100 + N_out)
        a, b = random_field(N, rng), random_field(N, rng)
        expected = analyze_on_grid(grid_jacobian(a, b, 32), N_out)
        got = jacobian_triad(a, b, N_out)
        assert np.max(np.abs(got.coeffs - expected.coeffs)) < 1e-12 * np.max(np.abs(expected.coeffs))

    @given(seeds, st.integers(2, 30))
    def test_advection_is_neutral(self, seed, N):
        rng = np.random.default_rng(seed)
        a, b = random_field(N, rng), random_field(N, rng)
        j = jacobian_triad(a, b)
        scale = np.sqrt(duality(j, j) * duality(b, b))
        assert abs(duality(j, b)) <= 1e-10 * scale

    @given(seeds, st.integers(2, 30))
    def test_energy_neutrality(self, seed, N):
        w = random_field(N, np.random.default_rng(seed))
        psi = apply_diag(w, laplacian_inverse)
        j = jacobian_triad(psi, w)
        scale = np.sqrt(duality(j, j) * duality(psi, psi))
        assert abs(duality(j, psi)) <= 1e-10 * scale

    def test_cutoff_mismatch(self):
        with pytest.raises(ValueError):
            jacobian_triad(SpectralField.zeros(2), SpectralField.zeros(3))


class TestGrid:
    def test_unit_mode(self):
        f = SpectralField.from_modes(1, {(0, 1): 1.0})
        g = synthesize_on_grid(f, 8, 16)
        y = grid_points(16)
        assert np.allclose(g, np.sin(y)[None, :] / (2 * np.pi) * np.ones((8, 1)), atol=1e-15)

    def test_zero(self):
        assert not np.any(synthesize_on_grid(SpectralField.zeros(5), 4, 4))

    def test_too_small_grid(self):
        with pytest.raises(ValueError):
            synthesize_on_grid(SpectralField.zeros(5), 1, 4)

    @given(seeds, st.integers(1, 64))
    def test_roundtrip(self, seed, N):
        f = random_field(N, np.random.default_rng(seed))
        back = analyze_on_grid(synthesize_on_grid(f, 20, 20), N)
        assert np.allclose(back.coeffs, f.coeffs, rtol=0, atol=1e-8)
