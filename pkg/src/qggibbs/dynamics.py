"""Galerkin-truncated barotropic QG dynamics in centred variables.

The truncated system for (U, omega) on Lambda_N reads

    d omega/dt = -Pi_N(grad^perp Lap^{-1} omega . grad omega) - L_N omega
    dU/dt      = < h_N, d_x Lap^{-1} omega >

with the affine part

    L_N omega = (U - beta/mu) d_x omega + U mu d_x (mu - Lap)^{-1} h_N
              + Pi_N(grad^perp (mu - Lap)^{-1} h_N . grad omega)
              + Pi_N(grad^perp Lap^{-1} omega . mu grad (mu - Lap)^{-1} h_N)
              + beta d_x Lap^{-1} omega.

Brackets are the coefficient duality of :mod:`qggibbs.spectral`; with that
normalization the pseudoenergy

    S = mu U^2 / 2 + < omega - mu Lap^{-1} omega, omega > / 2

is conserved and exp(-alpha S) is the sampled Gibbs density.

The hot path works on plain arrays: ``U`` of shape (...,) and reduced
coefficients ``W`` of shape (..., n_reduced), so whole ensembles are stepped
at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .gibbs import GibbsParams, State, mode_variances, u_variance
from .spectral import (
    SpectralField,
    _duality_reduced,
    duality,
    jacobian_triad,
    make_index_set,
    project,
    triad_table,
)


class NumericalBlowup(FloatingPointError):
    """Raised when an integration produces non-finite values."""


@dataclass(frozen=True, eq=False)
class _Operators:
    """Per-parameter symbols and tables for the vectorized right-hand side."""

    params: GibbsParams
    lap_inv: np.ndarray  # -1/|l|^2
    dx: np.ndarray  # i j
    gh: np.ndarray  # (mu - Lap)^{-1} h_N
    mu_gh: np.ndarray  # mu (mu - Lap)^{-1} h_N
    forcing: np.ndarray  # mu d_x (mu - Lap)^{-1} h_N
    beta_sym: np.ndarray  # beta d_x Lap^{-1}
    h: np.ndarray
    triad: object
    nonlinear: bool = True

    def rhs(self, U: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vector field B^N on arrays.

        The three Jacobian terms are fused: with psi' = Lap^{-1} w + g and
        q' = w + mu g (g = (mu - Lap)^{-1} h_N),
        J(psi', q') = J(Lap^{-1} w, w) + J(g, w) + J(Lap^{-1} w, mu g),
        because J(g, mu g) = 0.
        """
        p = self.params
        idx = p.index
        U = np.asarray(U, dtype=float)
        psi = self.lap_inv * W + self.gh
        qp = W + self.mu_gh
        jac = self.triad.apply(idx.expand(psi), idx.expand(qp))
        if not self.nonlinear:
            jac = jac - self.triad.apply(idx.expand(self.lap_inv * W), idx.expand(W))
        Ue = U[..., None]
        dW = -jac - (Ue - p.beta / p.mu) * self.dx * W - Ue * self.forcing - self.beta_sym * W
        dW[..., idx.real_mask] = dW[..., idx.real_mask].real
        dU = _duality_reduced(idx, self.h, self.dx * self.lap_inv * W)
        return dU, dW


@lru_cache(maxsize=64)
def _operators(params: GibbsParams, nonlinear: bool = True) -> _Operators:
    idx = params.index
    j = idx.j_red.astype(float)
    m2 = idx.modulus2_red.astype(float)
    G = 1.0 / (params.mu + m2)
    h = params.h_N.coeffs.copy()
    dx = 1j * j
    return _Operators(
        params=params,
        lap_inv=-1.0 / m2,
        dx=dx,
        gh=G * h,
        mu_gh=params.mu * G * h,
        forcing=params.mu * dx * G * h,
        beta_sym=-1j * params.beta * j / m2,
        h=h,
        triad=triad_table(params.N, params.N),
        nonlinear=nonlinear,
    )


def _check_state(state: State, params: GibbsParams) -> None:
    if state.N != params.N:
        raise ValueError(f"cutoff mismatch: state N={state.N}, params N={params.N}")


def vector_field(state: State, params: GibbsParams) -> tuple[float, SpectralField]:
    """(dU/dt, d omega/dt) of the truncated system at ``state``."""
    _check_state(state, params)
    dU, dW = _operators(params).rhs(np.asarray(state.U), state.omega.coeffs)
    return float(dU), SpectralField(params.index, dW)


def affine_term(state: State, params: GibbsParams) -> SpectralField:
    """L_N omega, assembled term by term with :func:`jacobian_triad`."""
    _check_state(state, params)
    p = params
    w = state.omega
    idx = p.index
    m2 = idx.modulus2_red.astype(float)
    j = idx.j_red.astype(float)
    g = p.h_N.with_coeffs(p.h_N.coeffs / (p.mu + m2))
    lap_w = w.with_coeffs(-w.coeffs / m2)
    dx = lambda f: f.with_coeffs(1j * j * f.coeffs)  # noqa: E731
    return (
        dx(w) * (state.U - p.beta / p.mu)
        + dx(g) * (state.U * p.mu)
        + jacobian_triad(g, w, p.N)
        + jacobian_triad(lap_w, g * p.mu, p.N)
        + dx(lap_w) * p.beta
    )


def nonlinear_term(omega: SpectralField) -> SpectralField:
    """Pi_N(grad^perp Lap^{-1} omega . grad omega)."""
    m2 = omega.index.modulus2_red.astype(float)
    return jacobian_triad(omega.with_coeffs(-omega.coeffs / m2), omega, omega.N)


def nonlinear_neutrality(omega: SpectralField) -> tuple[float, float]:
    """Relative sizes of <Pi_N J, omega> and <Pi_N J, Lap^{-1} omega> for J the quadratic term.

    Both vanish exactly in exact arithmetic; each is divided by the product
    of the norms involved.
    """
    m2 = omega.index.modulus2_red.astype(float)
    lap = omega.with_coeffs(-omega.coeffs / m2)
    jac = nonlinear_term(omega)
    nj = np.sqrt(duality(jac, jac))
    out = []
    for g in (omega, lap):
        scale = nj * np.sqrt(duality(g, g))
        out.append(abs(duality(jac, g)) / scale if scale > 0 else 0.0)
    return out[0], out[1]


# -- time integration -------------------------------------------------------


def _rk4(ops: _Operators, U: np.ndarray, W: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    k1u, k1w = ops.rhs(U, W)
    k2u, k2w = ops.rhs(U + 0.5 * dt * k1u, W + 0.5 * dt * k1w)
    k3u, k3w = ops.rhs(U + 0.5 * dt * k2u, W + 0.5 * dt * k2w)
    k4u, k4w = ops.rhs(U + dt * k3u, W + dt * k3w)
    U = U + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    W = W + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return U, W


def rk4_step(state: State, params: GibbsParams, dt: float) -> State:
    """One classical fourth-order Runge-Kutta step."""
    _check_state(state, params)
    U, W = _rk4(_operators(params), np.asarray(state.U, dtype=float), state.omega.coeffs, dt)
    if not (np.isfinite(U) and np.all(np.isfinite(W))):
        raise NumericalBlowup(f"non-finite state after RK4 step (dt={dt})")
    return State(float(U), SpectralField(params.index, W))


def n_steps_for(dt: float, T: float) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T == 0:
        return 0
    if T < dt * (1 - 1e-12):
        raise ValueError(f"T={T} is shorter than one step dt={dt}")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def integrate_arrays(
    U: np.ndarray,
    W: np.ndarray,
    params: GibbsParams,
    dt: float,
    n_steps: int,
    stride: int | None = None,
    nonlinear: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Advance array states ``n_steps`` RK4 steps.

    Returns the final (U, W), the per-member finite flag, and snapshots taken
    every ``stride`` steps (including t = 0) when ``stride`` is given.
    Non-finite members are flagged rather than aborting the batch.
    ``nonlinear=False`` drops the quadratic term and integrates L_N alone.
    """
    ops = _operators(params, nonlinear)
    U = np.array(U, dtype=float)
    W = np.array(W, dtype=np.complex128)
    snaps = [(U.copy(), W.copy())] if stride else []
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            U, W = _rk4(ops, U, W, dt)
            if stride and step % stride == 0:
                snaps.append((U.copy(), W.copy()))
    finite = np.isfinite(U) & np.all(np.isfinite(W), axis=-1)
    return U, W, finite, snaps


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple[State, ...]
    params: GibbsParams

    def __len__(self) -> int:
        return len(self.states)


def integrate(state0: State, params: GibbsParams, dt: float, T: float, stride: int = 1) -> Trajectory:
    """RK4 trajectory from ``state0`` to time T, recording every ``stride`` steps."""
    _check_state(state0, params)
    n = n_steps_for(dt, T)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    U, W, finite, snaps = integrate_arrays(
        np.asarray(state0.U), state0.omega.coeffs, params, dt, n, stride=stride
    )
    if not bool(finite):
        raise NumericalBlowup(f"trajectory became non-finite before T={T} (dt={dt})")
    times = dt * stride * np.arange(len(snaps))
    states = tuple(State(float(u), SpectralField(params.index, w)) for u, w in snaps)
    return Trajectory(times, states, params)


# -- conserved quantities ---------------------------------------------------


def pseudoenergy_arrays(U: np.ndarray, W: np.ndarray, params: GibbsParams) -> np.ndarray:
    idx = params.index
    m2 = idx.modulus2_red.astype(float)
    P = W * (1.0 + params.mu / m2)
    return 0.5 * params.mu * np.asarray(U) ** 2 + 0.5 * _duality_reduced(idx, P, W)


def pseudoenergy(state: State, params: GibbsParams) -> float:
    """S_mu(U, omega) = mu U^2/2 + <omega - mu Lap^{-1} omega, omega>/2."""
    _check_state(state, params)
    return float(pseudoenergy_arrays(state.U, state.omega.coeffs, params))


def _stream_fluctuation(state: State, params: GibbsParams) -> SpectralField:
    # psi' = Lap^{-1} omega + (mu - Lap)^{-1} h_N
    m2 = params.index.modulus2_red.astype(float)
    return state.omega.with_coeffs(-state.omega.coeffs / m2 + params.h_N.coeffs / (params.mu + m2))


def energy(state: State, params: GibbsParams) -> float:
    """E = V^2/2 + <grad psi', grad psi'>/2 with V = U - beta/mu."""
    _check_state(state, params)
    V = state.U - params.beta / params.mu
    psi = _stream_fluctuation(state, params)
    m2 = params.index.modulus2_red.astype(float)
    return 0.5 * V**2 + 0.5 * float(_duality_reduced(params.index, m2 * psi.coeffs, psi.coeffs))


def enstrophy(state: State, params: GibbsParams) -> float:
    """Q = beta V + <q - beta y, q - beta y>/2, where q - beta y = omega + mu (mu - Lap)^{-1} h_N."""
    _check_state(state, params)
    V = state.U - params.beta / params.mu
    m2 = params.index.modulus2_red.astype(float)
    qp = state.omega.coeffs + params.mu * params.h_N.coeffs / (params.mu + m2)
    return params.beta * V + 0.5 * float(_duality_reduced(params.index, qp, qp))


# -- Liouville property -----------------------------------------------------


def _real_coordinates(index) -> tuple[np.ndarray, np.ndarray]:
    """Positions of the reduced modes that carry an imaginary coordinate."""
    cplx = np.flatnonzero(~index.real_mask)
    return np.arange(index.n_reduced), cplx


def to_real(U: float, W: np.ndarray, index) -> np.ndarray:
    _, cplx = _real_coordinates(index)
    return np.concatenate([[U], W.real, W[cplx].imag])


def from_real(x: np.ndarray, index) -> tuple[float, np.ndarray]:
    n = index.n_reduced
    _, cplx = _real_coordinates(index)
    W = x[1 : 1 + n].astype(np.complex128)
    W[cplx] += 1j * x[1 + n :]
    return float(x[0]), W


def gibbs_log_density_gradient(x: np.ndarray, params: GibbsParams) -> np.ndarray:
    """Gradient of log(d eta^N / dx) in real coordinates (U, Re w, Im w)."""
    idx = params.index
    sig2 = mode_variances(params)
    _, cplx = _real_coordinates(idx)
    # per real coordinate variance: sigma^2 for j = 0, sigma^2/2 for Re/Im of j > 0
    var = np.concatenate(
        [[u_variance(params)], np.where(idx.real_mask, sig2, sig2 / 2.0), sig2[cplx] / 2.0]
    )
    return -x / var


def real_vector_field(x: np.ndarray, params: GibbsParams) -> np.ndarray:
    idx = params.index
    U, W = from_real(x, idx)
    dU, dW = _operators(params).rhs(np.asarray(U), W)
    return to_real(float(dU), dW, idx)


def liouville_divergence(
    state: State, params: GibbsParams, eps: float = 1e-5, normalize: bool = False
) -> float:
    """Divergence of B^N with respect to the Gibbs measure eta^N.

    div_eta B = sum_i d B_i / d x_i + sum_i (d log rho / d x_i) B_i in the real
    coordinates (U, Re w_l, Im w_l); the first sum uses central differences of
    step ``eps``. With ``normalize`` the result is divided by the sum of the
    absolute values of all contributing terms.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check_state(state, params)
    x = to_real(state.U, state.omega.coeffs, params.index)
    B = real_vector_field(x, params)
    diag = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        diag[i] = (real_vector_field(x + e, params)[i] - real_vector_field(x - e, params)[i]) / (2 * eps)
    weight = gibbs_log_density_gradient(x, params) * B
    div = float(np.sum(diag) + np.sum(weight))
    if not normalize:
        return div
    scale = float(np.sum(np.abs(diag)) + np.sum(np.abs(weight)))
    return div / scale if scale > 0 else div


def divergence_eps_sweep(
    state: State, params: GibbsParams, eps_values: Sequence[float] = (1e-4, 1e-5, 1e-6)
) -> list[float]:
    """Normalized divergence for several difference steps (cancellation check)."""
    return [liouville_divergence(state, params, eps, normalize=True) for eps in eps_values]


# -- weak vorticity formulation --------------------------------------------


def _trapezoid_cumulative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    inc = 0.5 * dt * (values[1:] + values[:-1])
    return np.concatenate([[0.0], np.cumsum(inc)])


def weak_residual(
    traj: Trajectory,
    phi: SpectralField,
    params: GibbsParams | None = None,
    renormalized: bool = False,
    return_series: bool = False,
):
    """max_t |<w_t, phi> - <w_0, phi> + int_0^t (<<w_s, H_phi^N>> + <L_N w_s, phi>) ds|.

    The nonlinear term is the kernel pairing of :mod:`qggibbs.chaos` with the
    truncated kernel H^N_phi (the diamond pairing with ``renormalized``); the
    affine term is assembled independently by :func:`affine_term`. Time
    integrals use the trapezoidal rule on the stored samples.
    """
    from .chaos import diamond_pair, hphi_kernel_truncated, pair_tensor

    params = traj.params if params is None else params
    phiN = project(phi, params.N)
    H = hphi_kernel_truncated(phiN, params.N)
    lhs = np.array([duality(s.omega, phiN) for s in traj.states])
    rate = np.empty(len(traj.states))
    for i, s in enumerate(traj.states):
        nl = diamond_pair(s.omega, H, params) if renormalized else pair_tensor(s.omega, H)
        rate[i] = -nl - duality(affine_term(s, params), phiN)
    rhs = lhs[0] + _trapezoid_cumulative(rate, traj.times)
    err = np.abs(lhs - rhs)
    res = float(np.max(err)) if err.size else 0.0
    return (res, err) if return_series else res
