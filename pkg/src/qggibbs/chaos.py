"""Two-point kernels, tensor and diamond pairings, and Wick moment oracles.

The nonlinearity tested against phi is rewritten as a double pairing

    <grad^perp Lap^{-1} w . grad w, phi>_c = sum_{l,l'} H(-l,-l') w_l w_l'

with a symmetric kernel H_phi whose coefficients are

    H(l, l') = [ (j'k - jk') f(j+j', k+k') - (j'k + jk') f(j+j', k-k') ]
               * (1/|l|^2 - 1/|l'|^2) / (4i),

where f(j, -k) = -f(j, k), f(j, 0) = 0 and f = phi_hat / (2 pi). The 1/(2 pi)
is the only normalization choice in this module: it makes phi = sin y give
f(0, 1) = 1, so the closed form for that test function is reproduced
verbatim. With it, the pairing above equals the coefficient duality
``spectral.duality`` of the truncated Jacobian with phi.

Kernels are stored as dense complex matrices over the full set Lambda_N in
the ordering of :class:`~qggibbs.spectral.IndexSet`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gibbs import GibbsParams, mode_variances
from .spectral import IndexSet, ModeIndex, SpectralField, make_index_set

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class Kernel2:
    """Coefficient table H(l, l') over Lambda_N x Lambda_N.

    The constructor enforces reality, H(-l, -l') = conj(H(l, l')); symmetry
    is checked by the operations that require it.
    """

    N: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        idx = make_index_set(self.N)
        e = np.array(self.entries, dtype=np.complex128, copy=True)
        if e.shape != (idx.n_full, idx.n_full):
            raise ValueError(f"expected shape {(idx.n_full, idx.n_full)}, got {e.shape}")
        r = idx.reflection
        scale = max(1.0, float(np.max(np.abs(e), initial=0.0)))
        if np.max(np.abs(e[np.ix_(r, r)] - np.conj(e)), initial=0.0) > 1e-12 * scale:
            raise ValueError("kernel violates reality H(-l,-l') = conj(H(l,l'))")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def index(self) -> IndexSet:
        return make_index_set(self.N)

    @classmethod
    def zeros(cls, N: int) -> "Kernel2":
        n = make_index_set(N).n_full
        return cls(N, np.zeros((n, n), dtype=np.complex128))

    @classmethod
    def from_entries(cls, N: int, entries: Mapping[tuple, complex]) -> "Kernel2":
        """Build from {((j,k), (j',k')): value}; reflected partners are filled in."""
        idx = make_index_set(N)
        e = np.zeros((idx.n_full, idx.n_full), dtype=np.complex128)
        for (l, lp), v in entries.items():
            a, b = idx.full_pos[ModeIndex(*l)], idx.full_pos[ModeIndex(*lp)]
            e[a, b] = v
            e[idx.reflection[a], idx.reflection[b]] = np.conj(v)
        return cls(N, e)

    def entry(self, l: tuple[int, int], lp: tuple[int, int]) -> complex:
        idx = self.index
        return complex(self.entries[idx.full_pos[ModeIndex(*l)], idx.full_pos[ModeIndex(*lp)]])

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.T), initial=0.0))

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.entries), initial=0.0)))
        return self.asymmetry() <= rtol * scale

    def __add__(self, other: "Kernel2") -> "Kernel2":
        _check_kernel_cutoffs(self, other)
        return Kernel2(self.N, self.entries + other.entries)

    def __sub__(self, other: "Kernel2") -> "Kernel2":
        _check_kernel_cutoffs(self, other)
        return Kernel2(self.N, self.entries - other.entries)

    def __mul__(self, scalar: float) -> "Kernel2":
        return Kernel2(self.N, self.entries * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Kernel2(N={self.N}, nonzero={int(np.count_nonzero(self.entries))})"


def _check_kernel_cutoffs(a: Kernel2, b: Kernel2) -> None:
    if a.N != b.N:
        raise ValueError(f"kernel cutoff mismatch: {a.N} != {b.N}")


def _require_symmetric(H: Kernel2) -> None:
    if not H.is_symmetric():
        raise ValueError(f"kernel is not symmetric (max |H - H^T| = {H.asymmetry():.3e})")


# -- H_phi ------------------------------------------------------------------


class _PhiLookup:
    """Vectorized f(J, K) = phi_hat(J, K) / (2 pi) with the odd extension in K."""

    def __init__(self, phi: SpectralField) -> None:
        idx = phi.index
        self.jmax = int(np.max(idx.j_red, initial=0))
        self.kmax = int(np.max(idx.k_red, initial=0))
        table = np.zeros((2 * self.jmax + 1, self.kmax + 1), dtype=np.complex128)
        full = phi.full() / _TWO_PI
        table[idx.j_full + self.jmax, idx.k_full] = full
        self.table = table
        self.support = [(int(j), int(k)) for j, k, v in zip(idx.j_full, idx.k_full, full) if v != 0]

    def __call__(self, J: np.ndarray, K: np.ndarray) -> np.ndarray:
        J = np.asarray(J)
        K = np.asarray(K)
        aK = np.abs(K)
        inside = (np.abs(J) <= self.jmax) & (aK <= self.kmax)
        Jc = np.where(inside, J + self.jmax, 0)
        Kc = np.where(inside, aK, 0)
        return np.where(inside, np.sign(K) * self.table[Jc, Kc], 0.0)


def _hphi_formula(f: _PhiLookup, j, k, jp, kp, out_cutoff: float | None = None) -> np.ndarray:
    """Kernel coefficient for arrays of (l, l'); optional output indicator 1{(j+j', |k +- k'|) in Lambda_M}."""
    J = j + jp
    Kp = k + kp
    Km = k - kp
    fp = f(J, Kp)
    fm = f(J, Km)
    if out_cutoff is not None:
        fp = np.where(J * J + Kp * Kp <= out_cutoff, fp, 0.0)
        fm = np.where(J * J + Km * Km <= out_cutoff, fm, 0.0)
    m2 = (j * j + k * k).astype(float)
    m2p = (jp * jp + kp * kp).astype(float)
    bracket = (jp * k - j * kp) * fp - (jp * k + j * kp) * fm
    return bracket * (1.0 / m2 - 1.0 / m2p) / 4j


def _hphi_dense(phi: SpectralField, N: int, out_cutoff: float | None) -> Kernel2:
    idx = make_index_set(N)
    j, jp = np.meshgrid(idx.j_full, idx.j_full, indexing="ij")
    k, kp = np.meshgrid(idx.k_full, idx.k_full, indexing="ij")
    e = _hphi_formula(_PhiLookup(phi), j, k, jp, kp, out_cutoff)
    return Kernel2(N, e)


def hphi_kernel(phi: SpectralField, N: int) -> Kernel2:
    """H_phi restricted to Lambda_N x Lambda_N (no output truncation)."""
    return _hphi_dense(phi, N, None)


def hphi_kernel_truncated(phi: SpectralField, N: int, M: int | None = None) -> Kernel2:
    """H^N_phi: the kernel of Pi_M(grad^perp Lap^{-1} w . grad w) paired with phi, w on Lambda_N.

    Each branch keeps the indicator that its output mode (j+j', |k +- k'|)
    lies in Lambda_M; M defaults to N, the Galerkin kernel.
    """
    return _hphi_dense(phi, N, float(N if M is None else M))


def truncate_kernel(H: Kernel2, M: int) -> Kernel2:
    """Progressive truncation H^M: zero every entry with l or l' outside Lambda_M (cutoff kept)."""
    idx = H.index
    keep = idx.modulus2_full <= M
    e = np.where(keep[:, None] & keep[None, :], H.entries, 0.0)
    return Kernel2(H.N, e)


def random_symmetric_kernel(N: int, rng: np.random.Generator, decay: float = 1.0) -> Kernel2:
    """Random symmetric real kernel with entries damped by (|l| |l'|)^(-decay)."""
    idx = make_index_set(N)
    n = idx.n_full
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a = g + g.T
    r = idx.reflection
    a = 0.5 * (a + np.conj(a[np.ix_(r, r)]))
    w = idx.modulus2_full.astype(float) ** (-0.5 * decay)
    return Kernel2(N, a * np.outer(w, w))


# -- pairings -----------------------------------------------------------------


def _reflected(H: Kernel2) -> np.ndarray:
    r = H.index.reflection
    return H.entries[np.ix_(r, r)]


def _real_or_raise(values: np.ndarray, what: str) -> np.ndarray:
    scale = np.maximum(1.0, np.abs(values.real))
    if np.any(np.abs(values.imag) > 1e-12 * scale):
        raise ArithmeticError(f"{what} has a non-negligible imaginary part")
    return values.real


def pair_tensor(omega: SpectralField, H: Kernel2) -> float:
    """<w (x) w, H> = sum_{l,l'} H(-l,-l') w_l w_l'."""
    if omega.N != H.N:
        raise ValueError(f"cutoff mismatch: field N={omega.N}, kernel N={H.N}")
    w = omega.full()
    val = np.sum(_reflected(H) * np.multiply.outer(w, w))
    return float(_real_or_raise(np.asarray(val), "tensor pairing"))


def pair_tensor_batch(W: np.ndarray, H: Kernel2, chunk: int = 4096) -> np.ndarray:
    """pair_tensor for reduced coefficient rows W of shape (M, n_reduced)."""
    idx = H.index
    A = _reflected(H)
    W = np.atleast_2d(W)
    out = np.empty(W.shape[0])
    for s in range(0, W.shape[0], chunk):
        w = idx.expand(W[s : s + chunk])
        # plain einsum loops (no BLAS) keep the summation order fixed
        v = np.einsum("mi,ij,mj->m", w, A, w, optimize=False)
        out[s : s + chunk] = _real_or_raise(v, "tensor pairing")
    return out


def diag_trace(H: Kernel2, params: GibbsParams) -> float:
    """E[<w (x) w, H>] = sum_l H(l, -l) sigma^2_l under the Gibbs measure."""
    if H.N != params.N:
        raise ValueError("cutoff mismatch between kernel and params")
    idx = H.index
    sig2 = mode_variances(params, full=True)
    tr = np.sum(H.entries[np.arange(idx.n_full), idx.reflection] * sig2)
    return float(_real_or_raise(np.asarray(tr), "trace"))


def diamond_pair(omega: SpectralField, H: Kernel2, params: GibbsParams) -> float:
    """<w diamond w, H> = <w (x) w, H> minus the Gibbs trace."""
    _require_symmetric(H)
    return pair_tensor(omega, H) - diag_trace(H, params)


def diamond_pair_batch(W: np.ndarray, H: Kernel2, params: GibbsParams) -> np.ndarray:
    _require_symmetric(H)
    return pair_tensor_batch(W, H) - diag_trace(H, params)


def _sigma_outer(params: GibbsParams) -> np.ndarray:
    s = mode_variances(params, full=True)
    return np.multiply.outer(s, s)


def kernel_distance(H1: Kernel2, H2: Kernel2, params: GibbsParams) -> float:
    """sum_{l,l'} |H1 - H2|^2 sigma^2_l sigma^2_l'."""
    _check_kernel_cutoffs(H1, H2)
    d = H1.entries - H2.entries
    return float(np.sum(np.abs(d) ** 2 * _sigma_outer(params)))


def wick_variance(H: Kernel2, params: GibbsParams) -> float:
    """Var<w diamond w, H> = 2 sum |H(l,l')|^2 sigma^2_l sigma^2_l'."""
    _require_symmetric(H)
    return 2.0 * float(np.sum(np.abs(H.entries) ** 2 * _sigma_outer(params)))


def wick_second_moment(H: Kernel2, params: GibbsParams) -> float:
    """E[<w (x) w, H>^2] = trace^2 + 2 sum |H(l,l')|^2 sigma^2_l sigma^2_l'."""
    _require_symmetric(H)
    return diag_trace(H, params) ** 2 + wick_variance(H, params)


def pairing_mean_square_difference(H1: Kernel2, H2: Kernel2, params: GibbsParams) -> float:
    """E[(<w (x) w, H1> - <w (x) w, H2>)^2], by linearity the second moment of H1 - H2."""
    return wick_second_moment(H1 - H2, params)


# -- grid representation -----------------------------------------------------


def kernel_on_grid(H: Kernel2, nx: int, ny: int) -> np.ndarray:
    """Kernel as a function H(z, z') on the grid, shape (nx, ny, nx, ny).

    Normalized so that the double integral of H(z, z') w(z) w(z') equals
    pair_tensor(w, H).
    """
    from .spectral import grid_points

    idx = H.index
    x = grid_points(nx)
    y = grid_points(ny)
    basis = np.einsum(
        "lx,ly->lxy",
        np.exp(1j * np.outer(idx.j_full, x)) / _TWO_PI,
        np.sin(np.outer(idx.k_full, y)),
    )
    vals = 4.0 * np.einsum("ab,axy,buv->xyuv", H.entries, basis, basis)
    return _real_or_raise(vals, "grid kernel").copy()


# -- regularity tail profile --------------------------------------------------


def hphi_tail_profile(
    phi: SpectralField,
    delta: float | Sequence[float],
    M_list: Iterable[float],
) -> list[float] | dict[float, list[float]]:
    """Partial sums of (1 + |l|^2 + |l'|^2)^delta |H_phi(l, l')|^2 over |l|, |l'| <= M.

    M is a bound on the modulus of both mode labels, so the sum runs over
    Lambda_{M^2} x Lambda_{M^2} of the untruncated lattice. ``delta`` may be
    a sequence, in which case a dict {delta: sums} is returned from a single
    sweep.
    """
    deltas = [float(d) for d in np.atleast_1d(delta)]
    M_in = np.array([float(m) for m in M_list])
    order = np.argsort(M_in, kind="stable")
    Ms = M_in[order]
    if Ms.size == 0:
        return {d: [] for d in deltas} if np.ndim(delta) else []
    if np.any(Ms <= 0):
        raise ValueError("M values must be positive")
    R2 = Ms**2
    f = _PhiLookup(phi)
    sums = np.zeros((len(deltas), Ms.size))
    if not f.support:
        return _shape_profile(delta, deltas, sums, order)
    Js = sorted({j for j, _ in f.support})
    Ks = sorted({k for _, k in f.support})
    # (l, l') -> (-l, -l') preserves |H| and the weight, so only j >= 0 is swept
    for j, k in _lattice_chunks(R2[-1]):
        mult = np.where(j == 0, 1.0, 2.0)
        # candidate k' from k + k' = K and |k - k'| = K
        cand = np.stack([c for K in Ks for c in (K - k, k + K, k - K)])
        cand = np.where(cand >= 1, cand, 0)
        if len(Ks) > 1:
            cand = np.sort(cand, axis=0)
            cand[1:][cand[1:] == cand[:-1]] = 0
        m2 = (j * j + k * k).astype(float)
        for J in Js:
            jp = J - j
            for kp in cand:
                live = kp >= 1
                if not np.any(live):
                    continue
                e = _hphi_formula(f, j[live], k[live], jp[live], kp[live])
                a2 = (e.real**2 + e.imag**2) * mult[live]
                m2l = m2[live]
                m2p = (jp[live] ** 2 + kp[live] ** 2).astype(float)
                # bin by the smallest M whose square admits both labels
                bins = np.searchsorted(R2, np.maximum(m2l, m2p), side="left")
                ok = (bins < Ms.size) & (a2 > 0)
                base = 1.0 + m2l[ok] + m2p[ok]
                a2 = a2[ok]
                bins = bins[ok]
                for di, d in enumerate(deltas):
                    w = _power(base, d) * a2
                    sums[di] += np.cumsum(np.bincount(bins, weights=w, minlength=Ms.size))
    return _shape_profile(delta, deltas, sums, order)


def _power(base: np.ndarray, d: float) -> np.ndarray:
    # integer and half-integer exponents avoid the generic pow
    if d == 0:
        return np.ones_like(base)
    if (2 * d).is_integer() and d > 0:
        out = base ** int(d) if d >= 1 else np.ones_like(base)
        return out * np.sqrt(base) if not d.is_integer() else out
    return base**d


def _lattice_chunks(R2: float, target: int = 1 << 20):
    """Yield (j, k) arrays covering {j >= 0, k >= 1, j^2 + k^2 <= R2} in blocks of whole k rows."""
    kmax = int(np.floor(np.sqrt(R2)))
    k0 = 1
    while k0 <= kmax:
        rows, size = [], 0
        while k0 <= kmax and (size == 0 or size < target):
            jm = int(np.floor(np.sqrt(max(R2 - k0 * k0, 0.0))))
            rows.append((k0, jm))
            size += jm + 1
            k0 += 1
        j = np.concatenate([np.arange(0, jm + 1) for _, jm in rows])
        k = np.concatenate([np.full(jm + 1, kk) for kk, jm in rows])
        yield j, k


def _shape_profile(delta, deltas, sums, order):
    out = np.empty_like(sums)
    out[:, order] = sums
    sums = out
    if np.ndim(delta) == 0:
        return [float(v) for v in sums[0]]
    return {d: [float(v) for v in row] for d, row in zip(deltas, sums)}
