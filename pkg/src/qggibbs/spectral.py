"""Mixed Fourier-sine spectral representation on the doubled channel.

Fields on D = [-pi, pi]^2 that are odd in y are expanded as

    f(x, y) = sum_{(j,k)} f_{j,k} e_j(x) s_k(y),   e_j(x) = exp(i j x) / (2 pi),
                                                   s_k(y) = sin(k y),

over lattice labels (j, k) with k >= 1. Real fields satisfy
f_{-j,k} = conj(f_{j,k}), so only the reduced half (j >= 0) is stored.

Two pairings are used throughout:

* ``inner_product`` is the L^2(D) integral. Because |e_j s_k|^2 integrates
  to 1/2 it carries the Parseval constant ``PARSEVAL = 1/2``.
* ``duality`` is the coefficient pairing sum f_l conj(g_l), i.e. the pairing
  in which the basis is orthonormal. The model's quadratic functionals (mean
  flow coupling, pseudoenergy, Gibbs weights) and the kernel pairings of
  :mod:`qggibbs.chaos` are normalized against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, NamedTuple

import numpy as np

PARSEVAL = 0.5
"""L^2(D) norm squared of a single basis function e_j s_k."""

AREA = 4.0 * np.pi**2


class ModeIndex(NamedTuple):
    """Lattice label (j, k): x-wavenumber j, sine wavenumber k >= 1."""

    j: int
    k: int

    @property
    def modulus2(self) -> int:
        return self.j * self.j + self.k * self.k

    def reflect(self) -> "ModeIndex":
        return ModeIndex(-self.j, self.k)


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Truncation set Lambda_N = {(j,k): k >= 1, j^2 + k^2 <= N}.

    ``full`` lists every mode, ``reduced`` the j >= 0 half. Both are ordered
    k-major, then j ascending. The array attributes are precomputed lookup
    tables used by the vectorized kernels.
    """

    N: int
    full: tuple[ModeIndex, ...]
    reduced: tuple[ModeIndex, ...]
    j_full: np.ndarray = field(repr=False)
    k_full: np.ndarray = field(repr=False)
    j_red: np.ndarray = field(repr=False)
    k_red: np.ndarray = field(repr=False)
    # full position -> reduced position, and whether to conjugate
    src: np.ndarray = field(repr=False)
    conj: np.ndarray = field(repr=False)
    # full position of (-j, k) for each full position
    reflection: np.ndarray = field(repr=False)
    # full position of each reduced mode
    red_in_full: np.ndarray = field(repr=False)
    full_pos: Mapping[ModeIndex, int] = field(repr=False)
    red_pos: Mapping[ModeIndex, int] = field(repr=False)

    @property
    def n_full(self) -> int:
        return len(self.full)

    @property
    def n_reduced(self) -> int:
        return len(self.reduced)

    @property
    def modulus2_full(self) -> np.ndarray:
        return self.j_full**2 + self.k_full**2

    @property
    def modulus2_red(self) -> np.ndarray:
        return self.j_red**2 + self.k_red**2

    @property
    def real_mask(self) -> np.ndarray:
        """Reduced modes with j = 0, whose coefficients are real."""
        return self.j_red == 0

    def contains(self, j: int, k: int) -> bool:
        return k >= 1 and j * j + k * k <= self.N

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """Map reduced coefficients (last axis) to the full conjugate-symmetric vector."""
        out = reduced[..., self.src]
        return np.where(self.conj, np.conj(out), out)


@lru_cache(maxsize=None)
def make_index_set(N: int) -> IndexSet:
    """Enumerate Lambda_N and its reduced half in deterministic (k, j) order."""
    if int(N) != N or N < 1:
        raise ValueError(f"cutoff N must be a positive integer, got {N!r}")
    N = int(N)
    full: list[ModeIndex] = []
    kmax = int(np.floor(np.sqrt(N)))
    for k in range(1, kmax + 1):
        jmax = int(np.floor(np.sqrt(N - k * k)))
        for j in range(-jmax, jmax + 1):
            full.append(ModeIndex(j, k))
    reduced = [m for m in full if m.j >= 0]
    full_pos = {m: i for i, m in enumerate(full)}
    red_pos = {m: i for i, m in enumerate(reduced)}
    src = np.array([red_pos[ModeIndex(abs(m.j), m.k)] for m in full], dtype=np.intp)
    conj = np.array([m.j < 0 for m in full])
    reflection = np.array([full_pos[m.reflect()] for m in full], dtype=np.intp)
    red_in_full = np.array([full_pos[m] for m in reduced], dtype=np.intp)
    arrays = {
        "j_full": np.array([m.j for m in full], dtype=np.int64),
        "k_full": np.array([m.k for m in full], dtype=np.int64),
        "j_red": np.array([m.j for m in reduced], dtype=np.int64),
        "k_red": np.array([m.k for m in reduced], dtype=np.int64),
    }
    for a in (*arrays.values(), src, conj, reflection, red_in_full):
        a.setflags(write=False)
    return IndexSet(
        N=N,
        full=tuple(full),
        reduced=tuple(reduced),
        src=src,
        conj=conj,
        reflection=reflection,
        red_in_full=red_in_full,
        full_pos=full_pos,
        red_pos=red_pos,
        **arrays,
    )


def _reality_tolerance(values: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(values), initial=0.0)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real odd-in-y field stored by its reduced coefficients over Lambda~_N.

    The constructor copies ``coeffs`` to complex128, checks that the j = 0
    entries are real (up to rounding), zeroes their imaginary parts, and
    freezes the array.
    """

    index: IndexSet
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if c.shape != (self.index.n_reduced,):
            raise ValueError(
                f"expected {self.index.n_reduced} reduced coefficients, got shape {c.shape}"
            )
        mask = self.index.real_mask
        if np.any(np.abs(c[mask].imag) > _reality_tolerance(c)):
            raise ValueError("j = 0 coefficients of a real field must be real")
        c[mask] = c[mask].real
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self) -> int:
        return self.index.N

    @classmethod
    def zeros(cls, N: int) -> "SpectralField":
        idx = make_index_set(N)
        return cls(idx, np.zeros(idx.n_reduced, dtype=np.complex128))

    @classmethod
    def from_modes(cls, N: int, modes: Mapping[tuple[int, int], complex]) -> "SpectralField":
        """Build a field from {(j, k): coefficient}; negative j entries are conjugated in.

        Modes outside Lambda_N are rejected. Giving both (j,k) and (-j,k) is
        allowed only if they are conjugate.
        """
        idx = make_index_set(N)
        c = np.zeros(idx.n_reduced, dtype=np.complex128)
        seen: dict[ModeIndex, complex] = {}
        for (j, k), v in modes.items():
            if not idx.contains(j, k):
                raise ValueError(f"mode {(j, k)} is outside Lambda_{N}")
            v = complex(v)
            key = ModeIndex(abs(j), k)
            val = v.conjugate() if j < 0 else v
            if key in seen and not np.isclose(seen[key], val, rtol=1e-12, atol=1e-14):
                raise ValueError(f"coefficients at {(j, k)} and {(-j, k)} are not conjugate")
            seen[key] = val
            c[idx.red_pos[key]] = val
        return cls(idx, c)

    def full(self) -> np.ndarray:
        """Coefficients over the full set Lambda_N (conjugate partners filled in)."""
        return self.index.expand(self.coeffs)

    def coefficient(self, j: int, k: int) -> complex:
        if not self.index.contains(j, k):
            return 0j
        v = self.coeffs[self.index.red_pos[ModeIndex(abs(j), k)]]
        return complex(np.conj(v) if j < 0 else v)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.index, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_cutoffs(self, other)
        return SpectralField(self.index, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_cutoffs(self, other)
        return SpectralField(self.index, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.index, -self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        if isinstance(scalar, complex) or np.iscomplexobj(scalar):
            raise TypeError("only real scalars preserve conjugate symmetry")
        return SpectralField(self.index, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        nz = int(np.count_nonzero(self.coeffs))
        return f"SpectralField(N={self.N}, nonzero={nz}/{self.index.n_reduced})"


def _check_cutoffs(a: SpectralField, b: SpectralField) -> None:
    if a.N != b.N:
        raise ValueError(f"cutoff mismatch: {a.N} != {b.N}")


def project(a: SpectralField, N: int) -> SpectralField:
    """Pi_N: restrict (or zero-pad) a field to the cutoff N."""
    idx = make_index_set(N)
    out = np.zeros(idx.n_reduced, dtype=np.complex128)
    for pos, m in enumerate(idx.reduced):
        if m in a.index.red_pos:
            out[pos] = a.coeffs[a.index.red_pos[m]]
    return SpectralField(idx, out)


# -- diagonal operators ----------------------------------------------------

Symbol = Callable[[np.ndarray, np.ndarray], np.ndarray]


def laplacian_inverse(j, k):
    return -1.0 / (j * j + k * k) + 0j


def partial_x(j, k):
    return 1j * j


def helmholtz_inv(mu: float) -> Symbol:
    """Symbol of (mu - Laplacian)^{-1}."""
    return lambda j, k: 1.0 / (mu + j * j + k * k) + 0j


def beta_term(beta: float) -> Symbol:
    """Symbol of beta d/dx Laplacian^{-1}."""
    return lambda j, k: -1j * beta * j / (j * j + k * k)


def symbol_values(index: IndexSet, symbol: Symbol) -> np.ndarray:
    """Evaluate a symbol on the reduced modes after checking it preserves reality."""
    j = index.j_red.astype(float)
    k = index.k_red.astype(float)
    vals = np.asarray(symbol(j, k), dtype=np.complex128) * np.ones_like(j)
    mirror = np.asarray(symbol(-j, k), dtype=np.complex128) * np.ones_like(j)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    if np.any(np.abs(mirror - np.conj(vals)) > tol):
        raise ValueError("symbol violates symbol(-j,k) = conj(symbol(j,k))")
    return vals


def apply_diag(a: SpectralField, symbol: Symbol) -> SpectralField:
    """Coefficient-wise multiplication by a reality-preserving symbol."""
    return SpectralField(a.index, a.coeffs * symbol_values(a.index, symbol))


# -- pairings ---------------------------------------------------------------


def duality(a: SpectralField, b: SpectralField) -> float:
    """Coefficient pairing sum_{Lambda_N} a_l conj(b_l) (= 2 * integral of a b)."""
    _check_cutoffs(a, b)
    return _duality_reduced(a.index, a.coeffs, b.coeffs)


def _duality_reduced(index: IndexSet, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # j = 0 modes counted once, j > 0 modes twice (their mirror contributes the conjugate)
    w = np.where(index.real_mask, 1.0, 2.0)
    return np.sum(w * (a * np.conj(b)).real, axis=-1)


def inner_product(a: SpectralField, b: SpectralField) -> float:
    """L^2(D) integral of a * b."""
    return PARSEVAL * float(duality(a, b))


def mean_product(a: SpectralField, b: SpectralField) -> float:
    """Domain average of a * b, i.e. the integral divided by 4 pi^2."""
    return inner_product(a, b) / AREA


def sobolev_norm(a: SpectralField, s: float) -> float:
    """sqrt(sum_{Lambda_N} |a_l|^2 (j^2 + k^2)^(2 s)).

    The exponent 2 s is deliberate: it is the weight of the odd Sobolev
    scale used for the regularity statements, twice the conventional one.
    """
    full = a.full()
    w = a.index.modulus2_full.astype(float) ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(full) ** 2)))


# -- triad (Jacobian) bilinear form ----------------------------------------


@dataclass(frozen=True, eq=False)
class TriadTable:
    """Sparse table of the bilinear map (a, b) -> Pi_out(grad^perp a . grad b).

    Each term contributes ``coef * a[p] * b[q]`` to reduced output mode
    ``out``; terms are sorted by ``out`` so the reduction order is fixed.
    """

    N_in: int
    N_out: int
    p: np.ndarray
    q: np.ndarray
    coef: np.ndarray
    out_modes: np.ndarray  # reduced output positions that receive terms
    starts: np.ndarray  # segment starts into the sorted term arrays

    def apply(self, a_full: np.ndarray, b_full: np.ndarray) -> np.ndarray:
        """Evaluate on full coefficient arrays (leading axes broadcast)."""
        idx_out = make_index_set(self.N_out)
        shape = np.broadcast_shapes(a_full.shape[:-1], b_full.shape[:-1])
        out = np.zeros(shape + (idx_out.n_reduced,), dtype=np.complex128)
        if self.coef.size == 0:
            return out
        vals = a_full[..., self.p] * b_full[..., self.q] * self.coef
        out[..., self.out_modes] = np.add.reduceat(vals, self.starts, axis=-1)
        mask = idx_out.real_mask
        out[..., mask] = out[..., mask].real
        return out


@lru_cache(maxsize=None)
def triad_table(N_in: int, N_out: int) -> TriadTable:
    """Direct-summation table for grad^perp a . grad b with a, b on Lambda_{N_in}.

    For modes l = (j,k), l' = (j',k') the product of basis functions gives

        grad^perp(e_j s_k) . grad(e_j' s_k') =
            i/(4 pi) [ (j k' - j' k) s_{k+k'} + (j k' + j' k) s_{k-k'} ] e_{j+j'}

    with s_{-m} = -s_m and s_0 = 0.
    """
    src = make_index_set(N_in)
    dst = make_index_set(N_out)
    jp, jq = np.meshgrid(src.j_full, src.j_full, indexing="ij")
    kp, kq = np.meshgrid(src.k_full, src.k_full, indexing="ij")
    pp, qq = np.meshgrid(np.arange(src.n_full), np.arange(src.n_full), indexing="ij")
    J = (jp + jq).ravel()
    p = pp.ravel()
    q = qq.ravel()
    pre = 1j / (4.0 * np.pi)

    plus_coef = pre * (jp * kq - jq * kp).ravel()
    plus_K = (kp + kq).ravel()

    d = (kp - kq).ravel()
    minus_coef = pre * np.sign(d) * (jp * kq + jq * kp).ravel()
    minus_K = np.abs(d)

    rows = []
    for coef, K in ((plus_coef, plus_K), (minus_coef, minus_K)):
        keep = (coef != 0) & (K >= 1) & (J >= 0) & (J * J + K * K <= N_out)
        out = np.array(
            [dst.red_pos[ModeIndex(int(a), int(b))] for a, b in zip(J[keep], K[keep])],
            dtype=np.intp,
        )
        rows.append((out, p[keep], q[keep], coef[keep]))
    out = np.concatenate([r[0] for r in rows])
    order = np.lexsort((np.concatenate([r[2] for r in rows]), np.concatenate([r[1] for r in rows]), out))
    out = out[order]
    pp_ = np.concatenate([r[1] for r in rows])[order]
    qq_ = np.concatenate([r[2] for r in rows])[order]
    cc_ = np.concatenate([r[3] for r in rows])[order]
    out_modes, starts = np.unique(out, return_index=True)
    for a in (pp_, qq_, cc_, out_modes, starts):
        a.setflags(write=False)
    return TriadTable(N_in, N_out, pp_, qq_, cc_, out_modes, starts)


def jacobian_triad(a: SpectralField, b: SpectralField, N_out: int | None = None) -> SpectralField:
    """Pi_{N_out}(grad^perp a . grad b) by direct O(|Lambda_N|^2) summation."""
    _check_cutoffs(a, b)
    N_out = a.N if N_out is None else int(N_out)
    table = triad_table(a.N, N_out)
    return SpectralField(make_index_set(N_out), table.apply(a.full(), b.full()))


# -- grid transforms --------------------------------------------------------


def grid_points(n: int) -> np.ndarray:
    """Uniform periodic grid on [-pi, pi) with n points."""
    return -np.pi + 2.0 * np.pi * np.arange(n) / n


def synthesize_on_grid(a: SpectralField, nx: int, ny: int) -> np.ndarray:
    """Evaluate the field on an (nx, ny) periodic grid of D, indexed [x, y]."""
    if nx < 2 or ny < 2:
        raise ValueError("grid needs at least 2 points per direction")
    idx = a.index
    x = grid_points(nx)
    y = grid_points(ny)
    ex = np.exp(1j * np.outer(idx.j_full, x)) / (2.0 * np.pi)
    sy = np.sin(np.outer(idx.k_full, y))
    vals = np.einsum("l,lx,ly->xy", a.full(), ex, sy)
    residue = float(np.max(np.abs(vals.imag), initial=0.0))
    if residue > 1e-12 * max(1.0, float(np.max(np.abs(vals.real), initial=0.0))):
        raise ArithmeticError(f"synthesized field is not real (residue {residue:.3e})")
    return vals.real.copy()


def analyze_on_grid(values: np.ndarray, N: int) -> SpectralField:
    """Trapezoidal analysis F_{j,k}(f) = 2 * integral f e_{-j} s_k, inverse of synthesis."""
    nx, ny = values.shape
    idx = make_index_set(N)
    x = grid_points(nx)
    y = grid_points(ny)
    ex = np.exp(-1j * np.outer(idx.j_red, x)) / (2.0 * np.pi)
    sy = np.sin(np.outer(idx.k_red, y))
    w = (2.0 * np.pi / nx) * (2.0 * np.pi / ny)
    coeffs = 2.0 * w * np.einsum("xy,lx,ly->l", values, ex, sy)
    coeffs[idx.real_mask] = coeffs[idx.real_mask].real
    return SpectralField(idx, coeffs)
