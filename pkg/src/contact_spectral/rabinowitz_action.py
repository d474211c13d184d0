"""Discretized Rabinowitz action on loops in the symplectization.

A loop is stored as N + 1 samples u_k = (y_k, tau_k, r_k) at t_k = k/N, with
tau carried by its real lift, together with the multiplier eta.  The action

    A(u, eta) = int u*lambda - eta int beta (r - 1) dt - int chi' H_chi(u) dt,
    lambda = r alpha, H_t(x, r) = r h_t(x),

is discretized edge by edge.  The two cutoff integrals are taken in their own
clocks, i.e. as trapezoid Stieltjes sums against dB and d(chi) with B the
antiderivative of beta, so the cutoffs enter through exact increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .contact_calculus import (
    ContactIsotopy,
    HamiltonianIsotopy,
    contact_field_from_gradient,
    smooth_step,
)
from .contact_calculus import smooth_step_derivative as smooth_step_prime
from .model_spaces import PrequantizationPoint, SymplectizationPoint, gamma_form

CLOSURE = 1e-8
FD_STEP = 1e-6


class LoopError(ValueError):
    """Malformed or non-closed discretized loop."""


# ------------------------------------------------------------ cutoffs

@dataclass(frozen=True)
class CutoffProfile:
    """beta supported in [0, 1/2] with integral 1; chi monotone from 0 at 1/2 to 1 at 1.

    ``B`` is the antiderivative of beta with B(0) = 0.
    """

    beta: Callable
    B: Callable
    chi: Callable
    chi_dot: Callable
    name: str = "custom"


def default_cutoff() -> CutoffProfile:
    """beta(t) = 2 S'(2t), chi(t) = S(2t - 1) for the C-infinity step S."""
    return CutoffProfile(
        beta=lambda t: 2.0 * smooth_step_prime(2.0 * np.asarray(t)),
        B=lambda t: smooth_step(2.0 * np.asarray(t)),
        chi=lambda t: smooth_step(2.0 * np.asarray(t) - 1.0),
        chi_dot=lambda t: 2.0 * smooth_step_prime(2.0 * np.asarray(t) - 1.0),
        name="smooth-step")


# ------------------------------------------------------------ loops

@dataclass(frozen=True)
class DiscretizedLoop:
    """Samples (y, tau_lift, r) at t_k = k/N, k = 0..N, and the multiplier eta."""

    samples: np.ndarray
    eta: float

    def __post_init__(self):
        u = np.array(self.samples, dtype=float)
        if u.ndim != 2 or u.shape[1] < 4 or (u.shape[1] - 2) % 2:
            raise LoopError(f"samples must have shape (N+1, 2n+2), got {u.shape}")
        N = u.shape[0] - 1
        if N < 16 or N % 2:
            raise LoopError(f"N must be even and >= 16, got {N}")
        if np.any(u[:, -1] <= 0):
            raise LoopError("r must be positive along the loop")
        gap_y = float(np.max(np.abs(u[-1, :-2] - u[0, :-2])))
        dtau = u[-1, -2] - u[0, -2]
        gap_tau = abs(dtau - round(dtau))
        gap_r = abs(u[-1, -1] - u[0, -1])
        if max(gap_y, gap_tau, gap_r) > CLOSURE:
            raise LoopError(f"loop does not close: |dy|={gap_y:.3e}, "
                            f"|dtau mod 1|={gap_tau:.3e}, |dr|={gap_r:.3e}")
        u.setflags(write=False)
        object.__setattr__(self, "samples", u)
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def N(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def n(self) -> int:
        return (self.samples.shape[1] - 2) // 2

    @property
    def x(self) -> np.ndarray:
        return self.samples[:, :-1]

    @property
    def r(self) -> np.ndarray:
        return self.samples[:, -1]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    def winding(self) -> int:
        return int(round(self.samples[-1, -2] - self.samples[0, -2]))

    def coarsened(self) -> np.ndarray:
        return self.samples[::2]

    @classmethod
    def from_points(cls, points: Sequence[SymplectizationPoint], eta: float) -> "DiscretizedLoop":
        arr = np.array([np.concatenate([p.base.as_array(), [p.r]]) for p in points])
        return cls(arr, eta)

    def points(self):
        return [SymplectizationPoint(PrequantizationPoint.from_array(s[:-1]), float(s[-1]))
                for s in self.samples]


@dataclass(frozen=True)
class ActionValue:
    value: float
    quadrature_error_estimate: float


# ------------------------------------------------------------ action

HamiltonianFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _default_H(phi: ContactIsotopy) -> HamiltonianFn:
    return lambda t, x, r: r * phi.hamiltonian(t, x)


def _edge_terms(u: np.ndarray, eta: float, times: np.ndarray, cutoff: CutoffProfile,
                H: HamiltonianFn) -> np.ndarray:
    """Per-edge contributions L_k(u_k, u_{k+1}) whose sum is the discrete action."""
    x, r = u[..., :-1], u[..., -1]
    dx = x[..., 1:, :] - x[..., :-1, :]
    lam_left = r[..., :-1] * (gamma_form(x[..., :-1, :-1], dx[..., :-1]) + dx[..., -1])
    lam_right = r[..., 1:] * (gamma_form(x[..., 1:, :-1], dx[..., :-1]) + dx[..., -1])
    B = cutoff.B(times)
    chi = cutoff.chi(times)
    dB = np.diff(B)
    dchi = np.diff(chi)
    Hn = H(np.broadcast_to(chi, r.shape), x, r)
    return (0.5 * (lam_left + lam_right)
            - eta * dB * (0.5 * (r[..., :-1] + r[..., 1:]) - 1.0)
            - dchi * 0.5 * (Hn[..., :-1] + Hn[..., 1:]))


def _action_raw(samples: np.ndarray, eta: float, cutoff: CutoffProfile, H: HamiltonianFn) -> float:
    times = np.linspace(0.0, 1.0, samples.shape[0])
    return float(np.sum(_edge_terms(samples, eta, times, cutoff, H)))


def evaluate_rabinowitz_action(loop: DiscretizedLoop, phi: ContactIsotopy,
                               cutoff: Optional[CutoffProfile] = None,
                               hamiltonian: Optional[HamiltonianFn] = None) -> ActionValue:
    """Action value with the Richardson estimate |A_N - A_{N/2}| / 3.

    ``hamiltonian`` replaces H = r h, e.g. by a truncation H(t, x, r).
    """
    cutoff = cutoff or default_cutoff()
    H = hamiltonian or _default_H(phi)
    fine = _action_raw(loop.samples, loop.eta, cutoff, H)
    coarse = _action_raw(loop.coarsened(), loop.eta, cutoff, H)
    return ActionValue(fine, abs(fine - coarse) / 3.0)


# ------------------------------------------------------------ critical points

def _field(phi: ContactIsotopy, t, x, r):
    h = phi.hamiltonian
    g = h.gradient(t, x)
    X = contact_field_from_gradient(x, h(t, x), g)
    return X, -r * g[..., -1]


def defect(loop: DiscretizedLoop, phi: ContactIsotopy,
           cutoff: Optional[CutoffProfile] = None) -> np.ndarray:
    """Cell defects (u_{k+1} - u_k - eta dB R - dchi X_H(chi_mid, u_mid)) / dt, shape (N, 2n+2)."""
    cutoff = cutoff or default_cutoff()
    u = loop.samples
    t = loop.times
    dt = 1.0 / loop.N
    dB = np.diff(cutoff.B(t))
    chi = cutoff.chi(t)
    dchi = np.diff(chi)
    mid = 0.5 * (u[1:] + u[:-1])
    X, Xr = _field(phi, 0.5 * (chi[1:] + chi[:-1]), mid[:, :-1], mid[:, -1])
    V = np.concatenate([dchi[:, None] * X, (dchi * Xr)[:, None]], axis=1)
    V[:, -2] += loop.eta * dB
    return (np.diff(u, axis=0) - V) / dt


def constraint(loop: DiscretizedLoop, cutoff: Optional[CutoffProfile] = None) -> float:
    """Discrete int beta (r - 1) dt, equal to minus dA/d(eta)."""
    cutoff = cutoff or default_cutoff()
    dB = np.diff(cutoff.B(loop.times))
    r = loop.r
    return float(np.sum(dB * (0.5 * (r[:-1] + r[1:]) - 1.0)))


def action_gradient(loop: DiscretizedLoop, phi: ContactIsotopy,
                    cutoff: Optional[CutoffProfile] = None,
                    hamiltonian: Optional[HamiltonianFn] = None,
                    step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of the discrete action w.r.t. samples 0..N-1.

    Samples are two-coloured by parity; every edge term touches exactly one
    sample of each colour, so one batched evaluation per colour and coordinate
    yields all partial derivatives.  N even keeps the colouring periodic.
    """
    cutoff = cutoff or default_cutoff()
    H = hamiltonian or _default_H(phi)
    u = loop.samples
    N, d = loop.N, u.shape[1]
    t = loop.times
    grad = np.zeros((N, d))
    batch = []
    for colour in (0, 1):
        for i in range(d):
            for sgn in (1.0, -1.0):
                v = u.copy()
                v[colour::2, i] += sgn * step
                batch.append(v)
    L = _edge_terms(np.stack(batch), loop.eta, t, cutoff, H)
    j = 0
    for colour in (0, 1):
        left = np.arange(N) % 2 == colour  # edge k touches sample k of this colour
        for i in range(d):
            dL = (L[j] - L[j + 1]) / (2 * step)
            j += 2
            nodes = np.where(left, np.arange(N), (np.arange(N) + 1) % N)
            np.add.at(grad[:, i], nodes, dL)
    return grad


def residual_components(loop: DiscretizedLoop, phi: ContactIsotopy,
                        cutoff: Optional[CutoffProfile] = None) -> dict:
    dt = 1.0 / loop.N
    D = defect(loop, phi, cutoff)
    g = action_gradient(loop, phi, cutoff)
    return {
        "defect": float(np.max(np.abs(D))),
        "constraint": abs(constraint(loop, cutoff)),
        "gradient": float(np.max(np.abs(g))) / dt,
    }


def critical_residual(loop: DiscretizedLoop, phi: ContactIsotopy,
                      cutoff: Optional[CutoffProfile] = None) -> float:
    """Sup of the cell defects, the constraint and the rescaled action gradient."""
    return max(residual_components(loop, phi, cutoff).values())


def symplectic_matrix(x: np.ndarray, r: float) -> np.ndarray:
    """Matrix of omega = d(r alpha) = dr ^ alpha + r d(alpha) in (y, tau, r) coordinates."""
    d = x.size + 1
    W = np.zeros((d, d))
    m = x.size - 1
    for j in range(0, m, 2):
        W[j, j + 1] = r
        W[j + 1, j] = -r
    a = np.zeros(d)
    a[0:m:2] = -0.5 * x[1:m:2]
    a[1:m:2] = 0.5 * x[0:m:2]
    a[m] = 1.0
    # dr ^ alpha (e_i, e_j) = dr_i a_j - dr_j a_i
    W[d - 1, :] += a
    W[:, d - 1] -= a
    return W


def construct_critical_pair(phi: ContactIsotopy, x: np.ndarray, shift: float, N: int = 256,
                            cutoff: Optional[CutoffProfile] = None) -> DiscretizedLoop:
    """Critical pair through a translated point x with phi_1(x) = theta^shift(x).

    On [0, 1/2] the loop is a Reeb arc at r = 1 ending at x; on [1/2, 1] it is
    t -> (phi_chi(t)(x), 1 / rho_chi(t)(x)).  The multiplier is eta = -shift.
    """
    cutoff = cutoff or default_cutoff()
    if N < 16 or N % 2:
        raise LoopError("N must be even and >= 16")
    x = np.asarray(x, dtype=float)
    eta = -float(shift)
    t = np.linspace(0.0, 1.0, N + 1)
    half = t <= 0.5
    samples = np.empty((N + 1, x.size + 1))
    B = cutoff.B(t[half])
    samples[half, :-1] = x
    samples[half, -2] = x[-1] - eta + eta * B
    samples[half, -1] = 1.0
    late = ~half
    chi = cutoff.chi(t[late])
    pts, rho = phi.evaluate(chi, np.repeat(x[None, :], chi.size, axis=0))
    samples[late, :-1] = pts
    samples[late, -1] = 1.0 / rho
    return DiscretizedLoop(samples, eta)


# ------------------------------------------------------------ Hamiltonian action on M

def _hamiltonian_action_raw(v: np.ndarray, f: HamiltonianIsotopy, times: np.ndarray) -> float:
    dv = np.diff(v, axis=0)
    area = np.sum(gamma_form(0.5 * (v[1:] + v[:-1]), dv))
    Fv = f.F(times, v)
    dt = np.diff(times)
    return float(area - np.sum(dt * 0.5 * (Fv[1:] + Fv[:-1])))


def evaluate_hamiltonian_action(v: np.ndarray, f: HamiltonianIsotopy) -> ActionValue:
    """int v*gamma - int F_t(v) dt for a closed loop sampled at t_k = k/N."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[0] < 3:
        raise LoopError("loop must have shape (N+1, 2n) with N >= 2")
    gap = float(np.max(np.abs(v[-1] - v[0])))
    if gap > CLOSURE:
        raise LoopError(f"loop does not close: gap {gap:.3e}")
    t = np.linspace(0.0, 1.0, v.shape[0])
    fine = _hamiltonian_action_raw(v, f, t)
    if (v.shape[0] - 1) % 2 == 0:
        coarse = _hamiltonian_action_raw(v[::2], f, t[::2])
        err = abs(fine - coarse) / 3.0
    else:
        err = math.nan
    return ActionValue(fine, err)
