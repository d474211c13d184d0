"""Analytic test families: bumps, rotations, twisted rotation bumps, translations.

Every family here comes with closed forms for the map, its inverse and its
contact Hamiltonian, so it can serve as an oracle for the integrators and for
the composition formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .contact_calculus import (
    ClosedFormIsotopy,
    ContactHamiltonian,
    Contactomorphism,
    HamiltonianIsotopy,
    PinTag,
    newton_inverse,
)

# ------------------------------------------------------------ scalar bumps


def bump_profile(q):
    """psi(q) = exp(1 - 1/(1 - q)) for q < 1, else 0; psi(0) = 1, C-infinity."""
    q = np.asarray(q)
    inside = q < 1
    qq = np.where(inside, q, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - qq)), 0.0)


def bump_profile_prime(q):
    q = np.asarray(q)
    inside = q < 1
    qq = np.where(inside, q, 0.0)
    return np.where(inside, -np.exp(1.0 - 1.0 / (1.0 - qq)) / (1.0 - qq) ** 2, 0.0)


def bump_profile_second(q):
    q = np.asarray(q)
    inside = q < 1
    qq = np.where(inside, q, 0.0)
    e = np.exp(1.0 - 1.0 / (1.0 - qq))
    a = 1.0 - qq
    return np.where(inside, e * (1.0 / a ** 4 - 2.0 / a ** 3), 0.0)


@dataclass(frozen=True)
class RadialBump:
    """F(y) = A psi(|y - c|^2 / w^2); maximum A at c, support radius |c| + w."""

    amplitude: float
    center: tuple
    width: float

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def support_radius(self) -> float:
        return float(np.linalg.norm(self.c)) + self.width

    def value(self, y):
        z = np.asarray(y) - self.c
        return self.amplitude * bump_profile(np.sum(z * z, axis=-1) / self.width ** 2)

    def gradient(self, y):
        z = np.asarray(y) - self.c
        q = np.sum(z * z, axis=-1) / self.width ** 2
        return (self.amplitude * bump_profile_prime(q) * 2.0 / self.width ** 2)[..., None] * z

    def hessian_at_center(self) -> np.ndarray:
        d = self.c.size
        return self.amplitude * bump_profile_prime(0.0) * 2.0 / self.width ** 2 * np.eye(d)

    def radial(self, s):
        """f(s) = A psi(s^2 / w^2) as a function of the distance s to the centre."""
        return self.amplitude * bump_profile(np.asarray(s) ** 2 / self.width ** 2)

    def rate(self, s):
        """f'(s)/s, smooth through s = 0."""
        return self.amplitude * bump_profile_prime(np.asarray(s) ** 2 / self.width ** 2) * 2.0 / self.width ** 2


# ------------------------------------------------------------ contact Hamiltonians


def tau_modulated_bump(bump: RadialBump, tau_amp: float = 0.0, tau_phase: float = 0.0,
                       time_amp: float = 0.0) -> ContactHamiltonian:
    """h = (1 + b sin 2 pi t) (1 + a sin 2 pi (tau - p)) F(y), with analytic gradient."""

    def mods(t, x):
        tm = 1.0 + time_amp * np.sin(2 * np.pi * np.asarray(t))
        ph = 2 * np.pi * (x[..., -1] - tau_phase)
        return tm, 1.0 + tau_amp * np.sin(ph), 2 * np.pi * tau_amp * np.cos(ph)

    def h(t, x):
        tm, tmod, _ = mods(t, x)
        return tm * tmod * bump.value(x[..., :-1])

    def grad(t, x):
        tm, tmod, dtmod = mods(t, x)
        g = np.empty_like(x)
        g[..., :-1] = (tm * tmod)[..., None] * bump.gradient(x[..., :-1])
        g[..., -1] = tm * dtmod * bump.value(x[..., :-1])
        return g

    return ContactHamiltonian(h, n=bump.c.size // 2, grad=grad,
                              support_radius=bump.support_radius, name="bump")


def random_bump_hamiltonian(rng: np.random.Generator, n: int = 1,
                            amplitude: float = 0.6) -> ContactHamiltonian:
    bump = RadialBump(float(rng.uniform(-amplitude, amplitude)),
                      tuple(rng.uniform(-0.3, 0.3, size=2 * n)), float(rng.uniform(0.5, 0.9)))
    return tau_modulated_bump(bump, tau_amp=float(rng.uniform(-0.5, 0.5)),
                              tau_phase=float(rng.uniform()), time_amp=float(rng.uniform(-0.5, 0.5)))


# ------------------------------------------------------------ twisted rotation bumps


def circle_twist(k: float, p: float = 0.0) -> Contactomorphism:
    """theta(y, tau) = (sqrt(s'(tau)) y, s(tau)) for the Moebius circle map

        s(tau) = p + arctan(k tan(pi (tau - p))) / pi   (continued as a degree-one lift),

    so theta^* alpha = s'(tau) alpha with s'(tau) = k / (cos^2 + k^2 sin^2).  The
    inverse is the same map with 1/k.
    """
    if not k > 0:
        raise ValueError("the Moebius parameter k must be positive")

    def sig(tau, k):
        th = np.pi * (tau - p)
        c, s = np.cos(th), np.sin(th)
        return tau + np.arctan2((k - 1.0) * s * c, c * c + k * s * s) / np.pi

    def dsig(tau, k):
        th = np.pi * (tau - p)
        c, s = np.cos(th), np.sin(th)
        return k / (c * c + k * k * s * s)

    def fwd(x):
        kap = dsig(x[..., -1], k)
        out = np.array(x, dtype=float)
        out[..., :-1] *= np.sqrt(kap)[..., None]
        out[..., -1] = sig(x[..., -1], k)
        return out, kap

    def inv(x):
        tau = sig(x[..., -1], 1.0 / k)
        out = np.array(x, dtype=float)
        out[..., :-1] /= np.sqrt(dsig(tau, k))[..., None]
        out[..., -1] = tau
        return out

    return Contactomorphism(fwd, inv, name=f"twist({k:g},{p:g})")


def rotation_bump_map(bump: RadialBump, t, x):
    """Flow of the tau-independent contact Hamiltonian F(y) = f(|y - c|) (n = 1)."""
    t = np.asarray(t)
    c = bump.c[0] + 1j * bump.c[1]
    z0 = (x[..., 0] + 1j * x[..., 1]) - c
    s = np.abs(z0)
    w = bump.rate(s)
    rot = np.exp(1j * w * t)
    z = c + rot * z0
    tau = (x[..., 2] + t * (bump.radial(s) - 0.5 * w * s * s)
           - 0.5 * np.real(np.conj(c) * z0 * (rot - 1.0) / 1j))
    out = np.empty_like(np.asarray(x, dtype=float))
    out[..., 0], out[..., 1], out[..., 2] = z.real, z.imag, tau
    return out


class TwistedRotationBump(ClosedFormIsotopy):
    """phi_t = theta o R_t o theta^{-1}: R_t rotates about c at rate f'(s)/s, theta a circle twist.

    Its contact Hamiltonian is kappa(theta^{-1} x) F(theta^{-1} x) with kappa = s'(tau).
    """

    def __init__(self, bump: RadialBump, k: float = 1.0, p: float = 0.0):
        if bump.c.size != 2:
            raise ValueError("twisted rotation bumps live on R^2 x S^1")
        self.bump = bump
        self.theta = circle_twist(k, p)
        theta = self.theta

        def h(t, x):
            w = theta.inverse(x)
            return theta.kappa(w) * bump.value(w[..., :-1])

        def fwd(t, x):
            w = theta.inverse(x)
            k_in = theta.kappa(w)
            y, k_out = theta.apply(rotation_bump_map(bump, t, w))
            return y, k_out / k_in

        def inv(t, x):
            return theta.apply(rotation_bump_map(bump, -t, theta.inverse(x)))[0]

        scale = math.sqrt(max(k, 1.0 / k))
        super().__init__(ContactHamiltonian(h, n=1, support_radius=scale * bump.support_radius,
                                            name="twisted-rotation-bump"), fwd, inv)


def random_twisted_rotation_bump(rng: np.random.Generator, amplitude: float = 0.2,
                                  widths=(0.8, 1.1)) -> TwistedRotationBump:
    bump = RadialBump(float(rng.uniform(-amplitude, amplitude)),
                      tuple(rng.uniform(-0.3, 0.3, size=2)), float(rng.uniform(*widths)))
    return TwistedRotationBump(bump, k=float(np.exp(rng.uniform(-0.4, 0.4))), p=float(rng.uniform()))


@dataclass(frozen=True)
class QuadraticWell:
    """F(y) = (omega/2)|y - c|^2 + C on R^2: rigid rotation about c."""

    omega: float
    center: tuple
    constant: float = 0.0

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def value(self, y):
        z = np.asarray(y) - self.c
        return 0.5 * self.omega * np.sum(z * z, axis=-1) + self.constant

    def gradient(self, y):
        return self.omega * (np.asarray(y) - self.c)

    def radial(self, s):
        return 0.5 * self.omega * np.asarray(s) ** 2 + self.constant

    def rate(self, s):
        return self.omega * np.ones_like(np.asarray(s, dtype=float))


def radial_flow(field, name: str = "radial-flow") -> ClosedFormIsotopy:
    """Closed-form lift of the flow of a radial bump or quadratic well on R^2."""

    def h(t, x):
        return field.value(x[..., :-1])

    def grad(t, x):
        g = np.zeros_like(x)
        g[..., :-1] = field.gradient(x[..., :-1])
        return g

    radius = getattr(field, "support_radius", math.inf)
    ham = ContactHamiltonian(h, n=1, grad=grad, support_radius=radius, name=name, tau_independent=True)
    return ClosedFormIsotopy(ham,
                             lambda t, x: (rotation_bump_map(field, t, x), np.ones(x.shape[:-1])),
                             lambda t, x: rotation_bump_map(field, -t, x))


# ------------------------------------------------------------ Hamiltonian isotopies of R^{2n}


def rotation_isotopy(omega: float = 2 * math.pi, n: int = 1, steps: int = 1000) -> HamiltonianIsotopy:
    """F = (omega/2)|y|^2, rotating each pair counter-clockwise at rate omega."""
    return HamiltonianIsotopy(lambda t, y: 0.5 * omega * np.sum(y * y, axis=-1), n=n,
                              grad=lambda t, y: omega * np.asarray(y), steps=steps,
                              name=f"rotation({omega:g})", autonomous=True)


def bump_isotopy(bump: RadialBump, time_amp: float = 0.0, steps: int = 1000) -> HamiltonianIsotopy:
    """F_t = (1 + b sin 2 pi t) F(y) for a radial bump F."""

    def F(t, y):
        return (1.0 + time_amp * np.sin(2 * np.pi * np.asarray(t))) * bump.value(y)

    def grad(t, y):
        return (1.0 + time_amp * np.sin(2 * np.pi * np.asarray(t)))[..., None] * bump.gradient(y)

    return HamiltonianIsotopy(F, n=bump.c.size // 2, grad=grad, support_radius=bump.support_radius,
                              steps=steps, name="bump", autonomous=time_amp == 0.0)


def random_bump_isotopy(rng: np.random.Generator, n: int = 1, steps: int = 400) -> HamiltonianIsotopy:
    bump = RadialBump(float(rng.uniform(-1.0, 1.0)), tuple(rng.uniform(-0.5, 0.5, size=2 * n)),
                      float(rng.uniform(0.4, 0.9)))
    f = bump_isotopy(bump, time_amp=float(rng.uniform(-0.5, 0.5)), steps=steps)
    f.bump = bump
    return f


def translation_lift(v, n: int = 1) -> Contactomorphism:
    """Exact lift of y -> y + v: (y, tau) -> (y + v, tau + gamma_y(v)), kappa = 1."""
    v = np.asarray(v, dtype=float)

    def gam(y):
        return 0.5 * (np.sum(y[..., 0::2] * v[1::2], axis=-1) - np.sum(y[..., 1::2] * v[0::2], axis=-1))

    def fwd(x):
        out = np.array(x, dtype=float)
        out[..., :-1] += v
        out[..., -1] += gam(x[..., :-1])
        return out, np.ones(out.shape[:-1])

    def inv(x):
        out = np.array(x, dtype=float)
        out[..., :-1] -= v
        out[..., -1] -= gam(out[..., :-1])
        return out

    lift = Contactomorphism(fwd, inv, n=n, name="translation-lift")
    lift.exact_lift = True
    return lift
