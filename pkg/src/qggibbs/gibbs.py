"""Gibbs measures of the truncated system, their mean state, and centering.

Under the Gibbs measure the centred mean flow U and the vorticity modes are
independent centred Gaussians,

    U ~ N(0, 1 / (alpha mu)),   E|w_{j,k}|^2 = (j^2 + k^2) / (alpha (mu + j^2 + k^2)).

Complex modes (j > 0) have independent real and imaginary parts of variance
sigma^2 / 2 each; j = 0 modes are real with variance sigma^2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import ModeIndex, SpectralField, make_index_set, project

DEFAULT_TOPOGRAPHY = {(1, 1): 1.0, (2, 1): 0.5}
SAMPLING_BLOCK = 1024


@dataclass(frozen=True, eq=False)
class GibbsParams:
    """Parameters (alpha, mu, beta, h, N) of the Gibbs measure and the dynamics.

    ``h`` may be given at any cutoff; ``h_N`` is its projection on Lambda_N.
    beta = 0 is accepted with a warning (the truncated system stays well
    defined, the existence theory does not cover it).
    """

    alpha: float
    mu: float
    beta: float
    h: SpectralField
    N: int
    h_N: SpectralField = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not np.isfinite(self.beta):
            raise ValueError("beta must be finite")
        if self.beta == 0:
            warnings.warn("beta = 0: outside the hypotheses of the existence result", stacklevel=3)
        make_index_set(self.N)
        object.__setattr__(self, "h_N", project(self.h, self.N))

    @property
    def index(self):
        return make_index_set(self.N)

    @classmethod
    def default(cls, N: int = 5, alpha: float = 1.0, mu: float = 1.0, beta: float = 1.0) -> "GibbsParams":
        h = SpectralField.from_modes(max(N, 5), DEFAULT_TOPOGRAPHY)
        return cls(alpha=alpha, mu=mu, beta=beta, h=h, N=N)


@dataclass(frozen=True, eq=False)
class State:
    """Centred state: mean flow U = V + beta/mu and fluctuation omega = q - qbar."""

    U: float
    omega: SpectralField

    @property
    def N(self) -> int:
        return self.omega.N


def mode_variance(l: tuple[int, int], params: GibbsParams) -> float:
    """sigma^2_{j,k} = (j^2 + k^2) / (alpha (mu + j^2 + k^2))."""
    m2 = l[0] ** 2 + l[1] ** 2
    return m2 / (params.alpha * (params.mu + m2))


def mode_variances(params: GibbsParams, full: bool = False) -> np.ndarray:
    idx = params.index
    m2 = (idx.modulus2_full if full else idx.modulus2_red).astype(float)
    return m2 / (params.alpha * (params.mu + m2))


def u_variance(params: GibbsParams) -> float:
    return 1.0 / (params.alpha * params.mu)


def _draw(params: GibbsParams, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    idx = params.index
    sig2 = mode_variances(params)
    U = rng.normal(0.0, np.sqrt(u_variance(params)), size=size)
    z = rng.standard_normal(size=(size, idx.n_reduced, 2))
    real = idx.real_mask
    scale = np.where(real, np.sqrt(sig2), np.sqrt(sig2 / 2.0))
    W = scale * (z[..., 0] + 1j * np.where(real, 0.0, z[..., 1]))
    return U, W


def sample_state(params: GibbsParams, rng: np.random.Generator) -> State:
    """Draw one exact sample of the truncated Gibbs measure."""
    U, W = _draw(params, rng, 1)
    return State(float(U[0]), SpectralField(params.index, W[0]))


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Generator for one sampling block, keyed by (seed, stream, block)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def draw_block(
    params: GibbsParams, seed: int, block: int, stream: int = 0, size: int = SAMPLING_BLOCK
) -> tuple[np.ndarray, np.ndarray]:
    """First ``size`` members of sampling block ``block``.

    The whole block is always drawn, so a member's value never depends on
    how many members are requested.
    """
    if not 0 <= size <= SAMPLING_BLOCK:
        raise ValueError(f"block size must be in [0, {SAMPLING_BLOCK}]")
    U, W = _draw(params, block_rng(seed, block, stream), SAMPLING_BLOCK)
    return U[:size].copy(), W[:size].copy()


def sample_ensemble(
    params: GibbsParams,
    M: int,
    seed: int,
    stream: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw M Gibbs samples as arrays (U of shape (M,), reduced omega of shape (M, n)).

    Members are generated in fixed blocks of ``SAMPLING_BLOCK``, each from its
    own keyed stream, so member i depends only on (seed, stream, i) and never
    on M or on how the work is scheduled.
    """
    Us, Ws = [], []
    for b, start in enumerate(range(0, M, SAMPLING_BLOCK)):
        U, W = draw_block(params, seed, b, stream, min(SAMPLING_BLOCK, M - start))
        Us.append(U)
        Ws.append(W)
    if not Us:
        return np.zeros(0), np.zeros((0, params.index.n_reduced), dtype=np.complex128)
    return np.concatenate(Us), np.concatenate(Ws)


def y_sine_coefficient(k: int) -> float:
    """Synthesis coefficient of y (odd sawtooth on [-pi, pi]) at mode (0, k)."""
    return 4.0 * np.pi * (-1.0) ** (k + 1) / k


def mean_vorticity(params: GibbsParams) -> SpectralField:
    """qbar = mu (mu - Laplacian)^{-1} h + beta y, truncated to Lambda_N."""
    idx = params.index
    m2 = idx.modulus2_red.astype(float)
    c = params.mu / (params.mu + m2) * params.h_N.coeffs
    for pos, m in enumerate(idx.reduced):
        if m.j == 0:
            c[pos] += params.beta * y_sine_coefficient(m.k)
    return SpectralField(idx, c)


def decenter(state: State, params: GibbsParams) -> tuple[float, SpectralField]:
    """(U, omega) -> (V, q) with V = U - beta/mu and q = omega + qbar.

    The beta y part of q is represented by its sine series truncated to
    Lambda_N; the remainder beyond the cutoff is dropped.
    """
    return state.U - params.beta / params.mu, state.omega + mean_vorticity(params)


def center(V: float, q: SpectralField, params: GibbsParams) -> State:
    return State(V + params.beta / params.mu, q - mean_vorticity(params))


def reduced_index(j: int, k: int, N: int) -> int:
    return make_index_set(N).red_pos[ModeIndex(j, k)]
