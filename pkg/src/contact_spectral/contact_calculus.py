"""Contact Hamiltonians, their isotopies, and the algebra relating them.

Conventions (fixed here and nowhere else):

* On R^{2n} the Hamiltonian vector field of F is X_F = J grad F with
  omega(X_F, .) = -dF, i.e. (x, y) -> (-F_y, F_x) on each pair.  With this
  choice F = (w/2)|y|^2 rotates counter-clockwise at angular speed w, and the
  contact Hamiltonian of a lifted isotopy equals F itself.
* The contact vector field of h on R^{2n} x S^1 is
  X = J grad_y h + (1/2) h_tau y  in the y-directions and
  h - gamma(that) in the tau-direction.
* The conformal factor obeys d/dt log rho_t(x) = h_tau(t, phi_t(x)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .model_spaces import PrequantizationPoint, alpha_form, gamma_form

FD_STEP = 1e-5
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10
BLOWUP = 1e8


class IntegrationError(RuntimeError):
    """State norm blew up during fixed-step integration."""


class InverseError(RuntimeError):
    """Newton iteration for an inverse map did not converge."""


# ------------------------------------------------------------ Hamiltonians

ScalarField = Callable[[float, np.ndarray], np.ndarray]


class ContactHamiltonian:
    """Time-dependent scalar field h(t, x) on R^{2n} x S^1.

    ``func`` and ``grad`` act on arrays of shape (..., 2n+1) whose last entry is
    the real tau lift; ``func`` must be 1-periodic in that entry.  Without an
    analytic ``grad`` derivatives come from central differences.
    """

    def __init__(self, func: ScalarField, n: int = 1, support_radius: float = math.inf,
                 grad: Optional[Callable] = None, name: str = "h",
                 tau_independent: bool = False):
        self.func = func
        self.n = n
        self.support_radius = float(support_radius)
        self._grad = grad
        self.name = name
        self.tau_independent = tau_independent

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    def __call__(self, t, x) -> np.ndarray:
        x = np.asarray(x)
        return np.asarray(self.func(t, x))

    def gradient(self, t, x) -> np.ndarray:
        x = np.asarray(x)
        if self._grad is not None:
            return np.asarray(self._grad(t, x))
        return fd_gradient(lambda z: self.func(t, z), x)

    def check_support(self, times=(0.0, 0.5, 1.0), shells: int = 4, samples: int = 64) -> float:
        """Largest |h| found on shells |y| >= support_radius (0 if unbounded)."""
        if not math.isfinite(self.support_radius):
            return 0.0
        rng = np.random.default_rng(0)
        worst = 0.0
        for k in range(shells):
            rad = self.support_radius * (1.0 + 0.25 * k)
            u = rng.normal(size=(samples, 2 * self.n))
            u *= rad / np.linalg.norm(u, axis=1, keepdims=True)
            pts = np.column_stack([u, rng.random(samples)])
            for t in times:
                worst = max(worst, float(np.max(np.abs(self(t, pts)))))
        return worst


def fd_gradient(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a vectorised scalar field, one batched call."""
    x = np.asarray(x)
    d = x.shape[-1]
    h = step * np.maximum(1.0, np.abs(x))
    stencil = np.repeat(x[None, ...], 2 * d, axis=0)
    for i in range(d):
        stencil[2 * i, ..., i] += h[..., i]
        stencil[2 * i + 1, ..., i] -= h[..., i]
    vals = np.asarray(f(stencil))
    grad = np.empty_like(x)
    for i in range(d):
        grad[..., i] = (vals[2 * i] - vals[2 * i + 1]) / (2 * h[..., i])
    return grad


def constant_hamiltonian(c: float, n: int = 1) -> ContactHamiltonian:
    return ContactHamiltonian(
        lambda t, x: np.full(np.shape(x)[:-1], c, dtype=np.asarray(x).dtype),
        n=n, grad=lambda t, x: np.zeros_like(x), name=f"const({c})", tau_independent=True)


def contact_field_from_gradient(x: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    y = x[..., :-1]
    gy = g[..., :-1]
    ht = g[..., -1:]
    v = np.empty_like(x)
    v[..., 0:-1:2] = -gy[..., 1::2] + 0.5 * ht * y[..., 0::2]
    v[..., 1:-1:2] = gy[..., 0::2] + 0.5 * ht * y[..., 1::2]
    v[..., -1] = h - gamma_form(y, v[..., :-1])
    return v


def contact_vector_field(h: ContactHamiltonian, t, x) -> np.ndarray:
    """X with alpha(X) = h and i_X d(alpha) = dh(R) alpha - dh, evaluated at x."""
    x = np.asarray(x)
    return contact_field_from_gradient(x, h(t, x), h.gradient(t, x))


def _field_and_rate(h: ContactHamiltonian, t, x):
    g = h.gradient(t, x)
    return contact_field_from_gradient(x, h(t, x), g), g[..., -1]


# ------------------------------------------------------------ isotopies

@dataclass(frozen=True)
class PinTag:
    """Records how an isotopy was built, for the spectral-number case logic."""

    kind: str
    params: tuple = ()


class ContactIsotopy:
    """A path of contactomorphisms phi_t with phi_0 = id.

    ``evaluate(t, x)`` returns (phi_t(x), rho_t(x)) for point arrays x; the tau
    entry of the output is the continuously transported lift.
    """

    method = "abstract"

    def __init__(self, hamiltonian: ContactHamiltonian, tag: Optional[PinTag] = None):
        self.hamiltonian = hamiltonian
        self.n = hamiltonian.n
        self.tag = tag

    def evaluate(self, t, x):
        raise NotImplementedError

    def inverse(self, t, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t, x) -> np.ndarray:
        return self.evaluate(t, x)[0]

    def path(self, times, x) -> np.ndarray:
        """Samples of t -> phi_t(x) for each t in ``times``; shape (len(times), ..., d)."""
        times = np.asarray(times, dtype=float)
        x = np.asarray(x, dtype=float)
        tt = np.broadcast_to(times.reshape((-1,) + (1,) * (x.ndim - 1)),
                             (times.size,) + x.shape[:-1])
        xx = np.broadcast_to(x, (times.size,) + x.shape)
        return self.evaluate(tt, np.array(xx))[0]

    def point(self, t: float, p: PrequantizationPoint):
        y, rho = self.evaluate(t, p.as_array())
        return PrequantizationPoint.from_array(y), float(rho)

    @property
    def support_radius(self) -> float:
        return self.hamiltonian.support_radius


def _broadcast_time(t, x):
    t = np.asarray(t, dtype=x.dtype)
    return np.broadcast_to(t, x.shape[:-1]).copy()


class IntegratedIsotopy(ContactIsotopy):
    """Classical fixed-step RK4 realisation of the flow of a contact Hamiltonian.

    Each evaluation uses ``ceil(max|t| * steps)`` equal substeps of size t/count,
    so different entries of a batch may carry different end times.
    """

    method = "integrated"

    def __init__(self, h: ContactHamiltonian, steps: int = 1000, dtype=float,
                 tag: Optional[PinTag] = None, polish: bool = True):
        if steps < 1:
            raise ValueError("steps must be >= 1")
        super().__init__(h, tag)
        self.steps = int(steps)
        self.dtype = dtype
        self.polish = polish

    def _count(self, t: np.ndarray) -> int:
        tmax = float(np.max(np.abs(t))) if t.size else 0.0
        return max(1, math.ceil(tmax * self.steps - 1e-9))

    def _rk4(self, t0: np.ndarray, t1: np.ndarray, x: np.ndarray, with_rho: bool):
        h = self.hamiltonian
        count = self._count(t1 - t0)
        dt = ((t1 - t0) / count)[..., None]
        s = t0.copy()
        logr = np.zeros(x.shape[:-1], dtype=x.dtype)
        half = dt * 0.5
        for _ in range(count):
            k1, r1 = _field_and_rate(h, s, x)
            sm = s + half[..., 0]
            k2, r2 = _field_and_rate(h, sm, x + half * k1)
            k3, r3 = _field_and_rate(h, sm, x + half * k2)
            s = s + dt[..., 0]
            k4, r4 = _field_and_rate(h, s, x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if with_rho:
                logr = logr + (dt[..., 0] / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
            if not np.all(np.abs(x) < BLOWUP):
                raise IntegrationError("state norm exceeded 1e8 during integration")
        return x, logr

    def evaluate(self, t, x):
        x = np.array(x, dtype=self.dtype)
        t1 = _broadcast_time(t, x)
        y, logr = self._rk4(np.zeros_like(t1), t1, x, True)
        return y, np.exp(logr)

    def inverse(self, t, x) -> np.ndarray:
        x = np.array(x, dtype=self.dtype)
        t1 = _broadcast_time(t, x)
        z, _ = self._rk4(t1, np.zeros_like(t1), x, False)
        if not self.polish:
            return z
        return newton_inverse(lambda w: self.evaluate(t1, w)[0], x, z)


def newton_inverse(forward: Callable[[np.ndarray], np.ndarray], target: np.ndarray,
                   seed: np.ndarray, tol: float = NEWTON_TOL,
                   max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """Solve forward(z) = target by Newton from ``seed`` (batched, FD Jacobian)."""
    z = np.array(seed)
    res = forward(z) - target
    it = 0
    while float(np.max(np.abs(res))) >= tol:
        if it >= max_iter:
            raise InverseError(f"inverse did not converge, residual {float(np.max(np.abs(res))):.3e}")
        d = z.shape[-1]
        jac = np.empty(z.shape + (d,), dtype=z.dtype)
        step = FD_STEP * np.maximum(1.0, np.abs(z))
        for i in range(d):
            zp = z.copy()
            zm = z.copy()
            zp[..., i] += step[..., i]
            zm[..., i] -= step[..., i]
            jac[..., :, i] = (forward(zp) - forward(zm)) / (2 * step[..., i:i + 1])
        delta = np.linalg.solve(jac, res[..., None])[..., 0]
        z = z - delta
        res = forward(z) - target
        it += 1
    return z


def integrate_isotopy(h: ContactHamiltonian, steps: int = 1000, order: int = 4,
                      dtype=float, tag: Optional[PinTag] = None) -> IntegratedIsotopy:
    if order != 4:
        raise ValueError("only the classical fourth-order scheme is provided")
    return IntegratedIsotopy(h, steps=steps, dtype=dtype, tag=tag)


class ClosedFormIsotopy(ContactIsotopy):
    """Isotopy given by explicit forward and inverse maps."""

    method = "closed-form"

    def __init__(self, hamiltonian, forward, inverse, tag=None):
        super().__init__(hamiltonian, tag)
        self._forward = forward
        self._inverse = inverse

    def evaluate(self, t, x):
        x = np.asarray(x, dtype=float)
        return self._forward(_broadcast_time(t, x), x)

    def inverse(self, t, x):
        x = np.asarray(x, dtype=float)
        return self._inverse(_broadcast_time(t, x), x)


def identity_isotopy(n: int = 1) -> ClosedFormIsotopy:
    return ClosedFormIsotopy(
        constant_hamiltonian(0.0, n),
        lambda t, x: (x.copy(), np.ones(x.shape[:-1])),
        lambda t, x: x.copy(),
        tag=PinTag("reeb", (0.0,)))


def reeb_path(T: float, n: int = 1) -> ClosedFormIsotopy:
    """t -> theta^{tT}."""

    def fwd(t, x):
        y = x.copy()
        y[..., -1] += T * t
        return y, np.ones(x.shape[:-1])

    def inv(t, x):
        y = x.copy()
        y[..., -1] -= T * t
        return y

    return ClosedFormIsotopy(constant_hamiltonian(T, n), fwd, inv, tag=PinTag("reeb", (float(T),)))


class Contactomorphism:
    """A single contactomorphism with its conformal factor kappa (theta^* alpha = kappa alpha)."""

    def __init__(self, forward, inverse, n: int = 1, name: str = "map"):
        self._forward = forward
        self._inverse = inverse
        self.n = n
        self.name = name

    def apply(self, x):
        return self._forward(np.asarray(x, dtype=float))

    def inverse(self, x):
        return self._inverse(np.asarray(x, dtype=float))

    def kappa(self, x):
        return self.apply(x)[1]

    @classmethod
    def time_one(cls, phi: ContactIsotopy, t: float = 1.0) -> "Contactomorphism":
        return cls(lambda x: phi.evaluate(t, x), lambda x: phi.inverse(t, x), phi.n,
                   name=f"time-{t} map")


# ------------------------------------------------------------ algebra

def hamiltonian_algebra(mode: str, first: ContactIsotopy, second) -> ContactHamiltonian:
    """Contact Hamiltonian of phi psi, phi psi^{-1}, or theta phi theta^{-1}.

    ``first`` is phi with Hamiltonian h and conformal factor rho.  For
    product/quotient ``second`` is the isotopy psi (k, sigma); for conjugate it
    is a fixed :class:`Contactomorphism` theta.
    """
    h = first.hamiltonian
    if mode == "product":
        k = second.hamiltonian

        def l(t, x):
            w = first.inverse(t, x)
            _, rho = first.evaluate(t, w)
            return h(t, x) + rho * k(t, w)

        return ContactHamiltonian(l, n=first.n, name=f"({h.name})*({k.name})",
                                  support_radius=max(h.support_radius, k.support_radius))
    if mode == "quotient":
        k = second.hamiltonian

        def m(t, x):
            w = first.inverse(t, x)
            _, rho = first.evaluate(t, w)
            z, sigma = second.evaluate(t, w)
            return h(t, x) - rho * k(t, z) / sigma

        return ContactHamiltonian(m, n=first.n, name=f"({h.name})/({k.name})",
                                  support_radius=max(h.support_radius, k.support_radius))
    if mode == "conjugate":
        theta: Contactomorphism = second

        def q(t, x):
            w = theta.inverse(x)
            return theta.kappa(w) * h(t, w)

        return ContactHamiltonian(q, n=first.n, name=f"conj({h.name})")
    raise ValueError(f"unknown mode {mode!r}")


class ProductIsotopy(ContactIsotopy):
    """t -> phi_t psi_t."""

    method = "composed"

    def __init__(self, phi: ContactIsotopy, psi: ContactIsotopy, tag=None):
        super().__init__(hamiltonian_algebra("product", phi, psi), tag)
        self.phi = phi
        self.psi = psi

    def evaluate(self, t, x):
        z, sigma = self.psi.evaluate(t, x)
        y, rho = self.phi.evaluate(t, z)
        return y, rho * sigma

    def inverse(self, t, x):
        return self.psi.inverse(t, self.phi.inverse(t, x))


class InverseIsotopy(ContactIsotopy):
    """t -> phi_t^{-1}."""

    method = "composed"

    def __init__(self, phi: ContactIsotopy, tag=None):
        super().__init__(hamiltonian_algebra("quotient", identity_isotopy(phi.n), phi), tag)
        self.phi = phi

    def evaluate(self, t, x):
        z = self.phi.inverse(t, x)
        _, rho = self.phi.evaluate(t, z)
        return z, 1.0 / rho

    def inverse(self, t, x):
        return self.phi.evaluate(t, x)[0]


class ConjugatedIsotopy(ContactIsotopy):
    """t -> theta phi_t theta^{-1} for a fixed contactomorphism theta."""

    method = "composed"

    def __init__(self, phi: ContactIsotopy, theta: Contactomorphism, tag=None):
        super().__init__(hamiltonian_algebra("conjugate", phi, theta), tag)
        self.phi = phi
        self.theta = theta

    def evaluate(self, t, x):
        w = self.theta.inverse(x)
        k_in = self.theta.kappa(w)
        z, rho = self.phi.evaluate(t, w)
        y, k_out = self.theta.apply(z)
        return y, k_out * rho / k_in

    def inverse(self, t, x):
        return self.theta.apply(self.phi.inverse(t, self.theta.inverse(x)))[0]


class RescaledIsotopy(ContactIsotopy):
    """t -> phi_{s t}; its Hamiltonian is s h_{s t}."""

    method = "composed"

    def __init__(self, phi: ContactIsotopy, s: float, tag=None):
        h = phi.hamiltonian
        super().__init__(ContactHamiltonian(lambda t, x: s * h(s * np.asarray(t), x), n=phi.n,
                                            support_radius=h.support_radius,
                                            name=f"{s}*{h.name}"), tag)
        self.phi = phi
        self.s = s

    def evaluate(self, t, x):
        return self.phi.evaluate(self.s * np.asarray(t), x)

    def inverse(self, t, x):
        return self.phi.inverse(self.s * np.asarray(t), x)


def iterate_isotopy(phi: ContactIsotopy, nu: int) -> ContactIsotopy:
    """t -> (phi_t)^nu, whose time-one map is phi_1^nu."""
    if nu < 1:
        raise ValueError("nu must be >= 1")
    out = phi
    for _ in range(nu - 1):
        out = ProductIsotopy(phi, out)
    return out


# ------------------------------------------------------------ Hamiltonian isotopies of R^{2n}

def hamiltonian_field(grad_f: np.ndarray) -> np.ndarray:
    """X_F = J grad F, pairwise (x, y) -> (-F_y, F_x)."""
    v = np.empty_like(grad_f)
    v[..., 0::2] = -grad_f[..., 1::2]
    v[..., 1::2] = grad_f[..., 0::2]
    return v


class HamiltonianIsotopy:
    """Flow f_t of a time-dependent Hamiltonian F on R^{2n} with the primitive a_t.

    a_t solves f_t^* gamma - gamma = d a_t, a_0 = 0, and is integrated along
    with the flow as a_t = int_0^t (gamma(X_F) - F) o f_s ds.
    """

    def __init__(self, F: Callable, n: int = 1, grad: Optional[Callable] = None,
                 support_radius: float = math.inf, steps: int = 1000, name: str = "F",
                 autonomous: bool = False):
        self.F = F
        self.n = n
        self._grad = grad
        self.support_radius = float(support_radius)
        self.steps = int(steps)
        self.name = name
        self.autonomous = autonomous

    def gradient(self, t, y):
        if self._grad is not None:
            return np.asarray(self._grad(t, y))
        return fd_gradient(lambda z: self.F(t, z), np.asarray(y))

    def vector_field(self, t, y):
        return hamiltonian_field(self.gradient(t, y))

    def _rhs(self, t, y):
        v = self.vector_field(t, y)
        return v, gamma_form(y, v) - self.F(t, y)

    def _rk4(self, t0, t1, y):
        count = max(1, math.ceil(float(np.max(np.abs(t1 - t0))) * self.steps - 1e-9)) if np.size(t1) else 1
        dt = ((t1 - t0) / count)[..., None]
        s = t0.copy()
        a = np.zeros(y.shape[:-1])
        half = 0.5 * dt
        for _ in range(count):
            k1, b1 = self._rhs(s, y)
            sm = s + half[..., 0]
            k2, b2 = self._rhs(sm, y + half * k1)
            k3, b3 = self._rhs(sm, y + half * k2)
            s = s + dt[..., 0]
            k4, b4 = self._rhs(s, y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            a = a + (dt[..., 0] / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
            if not np.all(np.abs(y) < BLOWUP):
                raise IntegrationError("state norm exceeded 1e8 during integration")
        return y, a

    def evaluate(self, t, y):
        """(f_t(y), a_t(y))."""
        y = np.array(y, dtype=float)
        t1 = _broadcast_time(t, y)
        return self._rk4(np.zeros_like(t1), t1, y)

    def inverse(self, t, y):
        y = np.array(y, dtype=float)
        t1 = _broadcast_time(t, y)
        z, _ = self._rk4(t1, np.zeros_like(t1), y)
        return newton_inverse(lambda w: self.evaluate(t1, w)[0], y, z)

    def exactness_residual(self, t: float, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """(f_t^* gamma - gamma - d a_t)(v) by central differences along v."""
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        eps = FD_STEP
        fp, ap = self.evaluate(t, y + eps * v)
        fm, am = self.evaluate(t, y - eps * v)
        f0, _ = self.evaluate(t, y)
        dfv = (fp - fm) / (2 * eps)
        dav = (ap - am) / (2 * eps)
        return gamma_form(f0, dfv) - gamma_form(y, v) - dav


class LiftedIsotopy(ContactIsotopy):
    """phi_t(y, tau) = (f_t(y), tau - a_t(y)); exact, with contact Hamiltonian F_t."""

    method = "lifted"

    def __init__(self, f: HamiltonianIsotopy, tag=None):
        def h(t, x):
            return f.F(t, x[..., :-1])

        def grad(t, x):
            g = np.zeros_like(x)
            g[..., :-1] = f.gradient(t, x[..., :-1])
            return g

        ham = ContactHamiltonian(h, n=f.n, grad=grad, support_radius=f.support_radius,
                                 name=f"lift({f.name})", tau_independent=True)
        super().__init__(ham, tag)
        self.f = f

    def evaluate(self, t, x):
        x = np.asarray(x, dtype=float)
        t1 = _broadcast_time(t, x)
        y, a = self.f.evaluate(t1, x[..., :-1])
        out = np.concatenate([y, (x[..., -1] - a)[..., None]], axis=-1)
        return out, np.ones(x.shape[:-1])

    def inverse(self, t, x):
        x = np.asarray(x, dtype=float)
        t1 = _broadcast_time(t, x)
        z = self.f.inverse(t1, x[..., :-1])
        _, a = self.f.evaluate(t1, z)
        return np.concatenate([z, (x[..., -1] + a)[..., None]], axis=-1)


def lift_hamiltonian_isotopy(f: HamiltonianIsotopy, tag=None) -> LiftedIsotopy:
    return LiftedIsotopy(f, tag)


# ------------------------------------------------------------ symplectization

@dataclass
class SymplectizationLift:
    """Phi_t(x, r) = (phi_t(x), r / rho_t(x)) generated by H_t(x, r) = r h_t(x)."""

    phi: ContactIsotopy

    def map(self, t, x, r):
        y, rho = self.phi.evaluate(t, x)
        return y, np.asarray(r) / rho

    def hamiltonian(self, t, x, r):
        return np.asarray(r) * self.phi.hamiltonian(t, x)

    def vector_field(self, t, x, r):
        """(X_h, -r h_tau): the field with omega(X_H, .) = -dH for omega = d(r alpha)."""
        h = self.phi.hamiltonian
        g = h.gradient(t, x)
        X = contact_field_from_gradient(np.asarray(x), h(t, x), g)
        return X, -np.asarray(r) * g[..., -1]

    def pullback_residual(self, t: float, x: np.ndarray, r: np.ndarray,
                          v: np.ndarray, vr: np.ndarray) -> np.ndarray:
        """(Phi_t^* lambda - lambda)(v, vr) with lambda = r alpha, by central differences."""
        eps = FD_STEP
        yp, rp = self.map(t, x + eps * v, r + eps * vr)
        ym, rm = self.map(t, x - eps * v, r - eps * vr)
        y0, r0 = self.map(t, x, r)
        dy = (yp - ym) / (2 * eps)
        return r0 * alpha_form(y0, dy) - np.asarray(r) * alpha_form(x, v)


def lift_to_symplectization(phi: ContactIsotopy) -> SymplectizationLift:
    return SymplectizationLift(phi)


# ------------------------------------------------------------ truncation

def _step_logit(u):
    """log(b/a) for a = e^{-1/u}, b = e^{-1/(1-u)} on 0 < u < 1."""
    return 1.0 / u - 1.0 / (1.0 - u)


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    v = np.where(inside, np.maximum(u, 1e-300), 0.5)
    return np.where(inside, expit(-_step_logit(v)), np.where(u >= 1, 1.0, 0.0))


def smooth_step_derivative(u):
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    v = np.where(inside, np.maximum(u, 1e-300), 0.5)
    z = _step_logit(v)
    log_w = np.logaddexp(-2.0 * np.log(v), -2.0 * np.log1p(-v))
    d = np.exp(z - 2.0 * np.logaddexp(0.0, z) + log_w)
    return np.where(inside, d, 0.0)


def epsilon_kappa(r, kappa: float):
    """Cutoff equal to 1 on [e^-k, e^k], 0 on [0, e^-2k] and [e^k + 1, inf)."""
    r = np.asarray(r, dtype=float)
    lo0, lo1 = math.exp(-2 * kappa), math.exp(-kappa)
    hi0 = math.exp(kappa)
    rise = smooth_step((r - lo0) / (lo1 - lo0))
    fall = 1.0 - smooth_step(r - hi0)
    return np.where(r <= lo1, rise, np.where(r >= hi0, fall, 1.0))


def epsilon_kappa_derivative(r, kappa: float):
    r = np.asarray(r, dtype=float)
    lo0, lo1 = math.exp(-2 * kappa), math.exp(-kappa)
    hi0 = math.exp(kappa)
    rise = smooth_step_derivative((r - lo0) / (lo1 - lo0)) / (lo1 - lo0)
    fall = -smooth_step_derivative(r - hi0)
    return np.where(r <= lo1, rise, np.where(r >= hi0, fall, 0.0))


FILLING_VALUE = -0.75


@dataclass
class TruncatedHamiltonian:
    """H^{kappa;w}(t, x, r) = eps_kappa(w r) w r h_t(x) on the symplectization.

    Points of the filling away from the symplectization shell carry the
    constant value -3/4 (``in_filling=True``).
    """

    phi: ContactIsotopy
    kappa: float
    w: float = 1.0

    def __call__(self, t, x, r, in_filling=False):
        r = np.asarray(r, dtype=float)
        val = epsilon_kappa(self.w * r, self.kappa) * self.w * r * self.phi.hamiltonian(t, x)
        return np.where(in_filling, FILLING_VALUE, val)

    def slope_bounds_hold(self) -> bool:
        k = self.kappa
        rr = np.linspace(math.exp(-2 * k), math.exp(-k), 2001)
        up = epsilon_kappa_derivative(rr, k)
        rr2 = np.linspace(math.exp(k), math.exp(k) + 1, 2001)
        down = epsilon_kappa_derivative(rr2, k)
        return bool(np.all(up >= 0) and np.all(up <= 2 * math.exp(2 * k))
                    and np.all(down <= 0) and np.all(down >= -2))


def truncate_hamiltonian(phi: ContactIsotopy, kappa: float, w: float = 1.0,
                         phi_kappa: Optional[float] = None) -> TruncatedHamiltonian:
    if phi_kappa is None:
        phi_kappa = norms(phi, samples=8).kappa
    if not kappa > phi_kappa / w:
        raise ValueError(f"kappa={kappa} must exceed kappa_w(phi)={phi_kappa / w}")
    return TruncatedHamiltonian(phi, kappa, w)


# ------------------------------------------------------------ norms

@dataclass(frozen=True)
class NormReport:
    osc_plus: float
    osc_minus: float
    osc: float
    kappa: float


def _sample_box(n: int, radius: float, m: int) -> np.ndarray:
    axes = [np.linspace(-radius, radius, m)] * (2 * n) + [np.linspace(0.0, 1.0, max(4, m // 3), endpoint=False)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)


def _extremum(func, pts: np.ndarray, radius: float, sign: float, rounds: int = 3) -> float:
    vals = sign * func(pts)
    best = float(np.max(vals))
    centre = pts[int(np.argmax(vals))]
    width = 2 * radius / max(2, round(pts.shape[0] ** (1 / pts.shape[1])))
    d = pts.shape[1]
    rng = np.random.default_rng(1)
    for _ in range(rounds):
        cand = centre + width * (rng.random((64 * d, d)) - 0.5)
        cand = np.vstack([cand, centre])
        v = sign * func(cand)
        i = int(np.argmax(v))
        if v[i] >= best:
            best = float(v[i])
            centre = cand[i]
        width *= 0.25
    return sign * best


def norms(phi: ContactIsotopy, samples: int = 16, box_radius: Optional[float] = None,
          grid: int = 13) -> NormReport:
    """Sampled oscillation norms and kappa(phi); a lower bound that converges under refinement."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    h = phi.hamiltonian
    radius = box_radius or (1.1 * h.support_radius if math.isfinite(h.support_radius) else 2.0)
    pts = _sample_box(phi.n, radius, grid)
    times = (np.arange(samples) + 0.5) / samples
    maxs, mins = [], []
    for t in times:
        f = lambda z, t=t: h(t, z)
        # clamped at 0, so a constant T > 0 has norms (T, 0)
        mx = max(_extremum(f, pts, radius, +1.0), 0.0)
        mn = min(_extremum(f, pts, radius, -1.0), 0.0)
        maxs.append(mx)
        mins.append(mn)
    plus = float(np.mean(maxs))
    minus = -float(np.mean(mins)) + 0.0
    # kappa from finite differences of rho in t at the same spatial samples
    sub = pts[:: max(1, pts.shape[0] // 256)]
    tt = np.linspace(0.0, 1.0, samples + 1)
    dt = 1e-4
    worst = 0.0
    for t in tt:
        tp, tm = min(t + dt, 1.0), max(t - dt, 0.0)
        _, rp = phi.evaluate(tp, sub)
        _, rm = phi.evaluate(tm, sub)
        _, r0 = phi.evaluate(t, sub)
        rdot = (rp - rm) / (tp - tm)
        worst = max(worst, float(np.max(np.abs(rdot / r0 ** 2))))
    kappa = 8.0 * worst
    if kappa < 1e-9:
        kappa = 0.0
    return NormReport(plus, minus, plus + minus, kappa)


def k_bound(phi: ContactIsotopy, psi: ContactIsotopy, samples: int = 16) -> float:
    """Upper bound e^{max(kappa)} ||h^phi - h^psi||_+ for the continuation constant."""
    diff = ContactHamiltonian(lambda t, x: phi.hamiltonian(t, x) - psi.hamiltonian(t, x),
                              n=phi.n, support_radius=max(phi.support_radius, psi.support_radius))
    tmp = ClosedFormIsotopy(diff, lambda t, x: (x, np.ones(x.shape[:-1])), lambda t, x: x)
    plus = norms(tmp, samples).osc_plus
    kap = max(norms(phi, samples).kappa, norms(psi, samples).kappa)
    return math.exp(kap) * plus
