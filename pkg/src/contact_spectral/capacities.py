"""Spectral numbers on the pinned class, ceiling capacities, HZ probes, displacement.

The spectral number c(phi) is Floer-theoretic.  It is returned as a point value
only for constructions where its value is forced by the axioms (Reeb paths,
C^2-small bumps, lifts of such bumps, the compactly supported profile flows,
and products of these with Reeb paths).  Everything else falls back to a
bracket built from the computed action spectrum and the oscillation bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .contact_calculus import (
    ConjugatedIsotopy,
    ContactIsotopy,
    HamiltonianIsotopy,
    IntegratedIsotopy,
    InverseIsotopy,
    LiftedIsotopy,
    PinTag,
    ProductIsotopy,
    RescaledIsotopy,
    hamiltonian_field,
    identity_isotopy,
    k_bound,
)
from .fixtures import (
    RadialBump,
    bump_isotopy,
    bump_profile_prime,
    bump_profile_second,
    tau_modulated_bump,
)
from .model_spaces import DomainKind, DomainSpec
from .rabinowitz_action import smooth_step, smooth_step_prime
from .translated_points import ActionSpectrum, action_spectrum

PIN_TOL = 1e-8
RETURN_TOL = 1e-6
PERIOD_TOL = 1e-6


class CapacityError(ValueError):
    pass


class ProbeError(RuntimeError):
    pass


class DisplacementError(RuntimeError):
    pass


# ------------------------------------------------------------ spectral numbers

METHODS = ("reeb", "small-bump", "lifted-hamiltonian", "profile-flow", "spectrum-bracket")


@dataclass
class SpectralValue:
    c: Optional[float]
    method: str
    bracket: Optional[Tuple[float, float]] = None
    spectrum_snapshot: Optional[ActionSpectrum] = None
    candidates: Tuple[float, ...] = ()
    ceiling_hint: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def pinned(self) -> bool:
        return self.method != "spectrum-bracket"

    @property
    def ceiling(self) -> Optional[int]:
        """The integer ceiling when it is determined, else None."""
        if self.pinned:
            return _ceil(self.c)
        if self.ceiling_hint is not None:
            return self.ceiling_hint
        lo, hi = self.bracket
        if _ceil(lo) == _ceil(hi):
            return _ceil(hi)
        return None

    def in_snapshot(self, tol: float = PIN_TOL) -> bool:
        if self.spectrum_snapshot is None or not self.pinned:
            return False
        return any(abs(v - self.c) < tol for v in self.spectrum_snapshot.values)


def _ceil(a: float) -> int:
    # values within roundoff of an integer are treated as that integer
    k = round(a)
    if abs(a - k) < 1e-12:
        return int(k)
    return int(math.ceil(a))


def profile_spectral_value(rho: float) -> float:
    """c of the compactly supported profile flow: 0 for rho >= 0, -rho otherwise."""
    return 0.0 if rho >= 0 else -rho


def _pinned(phi: ContactIsotopy) -> Optional[Tuple[float, str]]:
    tag = phi.tag
    if tag is not None:
        if tag.kind == "reeb":
            return -float(tag.params[0]), "reeb"
        if tag.kind in ("small-bump", "lifted-hamiltonian"):
            return float(tag.params[0]), tag.kind
        if tag.kind == "profile-flow":
            return profile_spectral_value(float(tag.params[0])), "profile-flow"
    if isinstance(phi, InverseIsotopy):
        inner = phi.phi.tag
        if inner is not None and inner.kind == "reeb":
            return float(inner.params[0]), "reeb"
        if inner is not None and inner.kind == "profile-flow":
            return profile_spectral_value(-float(inner.params[0])), "profile-flow"
        if inner is not None and inner.kind in ("small-bump", "lifted-hamiltonian"):
            # generated by +b >= 0: c <= 0 on a spectrum {-b, 0}, and c(phi) + c(phi^-1) > 0 excludes -b
            return 0.0, inner.kind
        if isinstance(phi.phi, ProductIsotopy):
            # (a b)^-1 = b^-1 a^-1 as paths
            return _pinned(ProductIsotopy(InverseIsotopy(phi.phi.psi), InverseIsotopy(phi.phi.phi)))
        return None
    if isinstance(phi, RescaledIsotopy):
        inner = phi.phi.tag
        if inner is None or phi.s < 0:
            return None
        if inner.kind == "reeb":
            return -phi.s * float(inner.params[0]), "reeb"
        if inner.kind == "profile-flow":
            return profile_spectral_value(phi.s * float(inner.params[0])), "profile-flow"
        if inner.kind in ("small-bump", "lifted-hamiltonian") and phi.s > 0:
            return phi.s * float(inner.params[0]), inner.kind
        return None
    if isinstance(phi, ProductIsotopy):
        # c(theta^T phi) = c(phi) - T, forced by c(theta^T) = -T and the triangle inequality
        a, b = _pinned(phi.phi), _pinned(phi.psi)
        if a is None or b is None:
            return None
        if a[1] == "reeb":
            return a[0] + b[0], b[1]
        if b[1] == "reeb":
            return a[0] + b[0], a[1]
        return None
    if isinstance(phi, ConjugatedIsotopy):
        # conjugating a lift by the exact lift of a symplectomorphism preserves c
        inner = _pinned(phi.phi)
        if inner is not None and inner[1] == "lifted-hamiltonian" and getattr(phi.theta, "exact_lift", False):
            return inner
    return None


def _unconjugate(phi: ContactIsotopy) -> Optional[ContactIsotopy]:
    """A path with the same ceiling as phi, read off a conjugation; None if there is none."""
    if isinstance(phi, ConjugatedIsotopy):
        return phi.phi
    if isinstance(phi, InverseIsotopy) and isinstance(phi.phi, ConjugatedIsotopy):
        return InverseIsotopy(phi.phi.phi)
    if isinstance(phi, ProductIsotopy):
        # (t a t^-1)(t b t^-1) = t (a b) t^-1 as paths, with b possibly an inverse
        a, b = _unconjugate(phi.phi), _unconjugate(phi.psi)
        ta, tb = _theta_of(phi.phi), _theta_of(phi.psi)
        if a is not None and b is not None and ta is not None and ta is tb:
            return ProductIsotopy(a, b)
    return None


def _theta_of(phi: ContactIsotopy):
    if isinstance(phi, ConjugatedIsotopy):
        return phi.theta
    if isinstance(phi, InverseIsotopy) and isinstance(phi.phi, ConjugatedIsotopy):
        return phi.phi.theta
    return None


def _conjugation_ceiling(phi: ContactIsotopy) -> Optional[int]:
    inner = _unconjugate(phi)
    if inner is None:
        return None
    pin = _pinned(inner)
    if pin is not None:
        return _ceil(pin[0])
    return _conjugation_ceiling(inner)


def spectral_number(phi: ContactIsotopy, snapshot: bool = False, box: Optional[DomainSpec] = None,
                    window: Optional[Tuple[float, float]] = None, seeds: int = 1024,
                    seed: int = 0) -> SpectralValue:
    """Pinned value of c(phi) when forced, otherwise a spectrum bracket."""
    pin = _pinned(phi)
    if pin is not None and not snapshot:
        return SpectralValue(pin[0], pin[1])
    if box is None:
        radius = phi.support_radius if math.isfinite(phi.support_radius) else 1.0
        box = DomainSpec(DomainKind.BALL, 1.05 * radius, ambient_dim=2 * phi.n)
    if pin is not None:
        lo, hi = window or (pin[0] - 0.5, pin[0] + 0.5)
        spec = action_spectrum(phi, box, (lo, hi), seeds, seed)
        return SpectralValue(pin[0], pin[1], spectrum_snapshot=spec)
    upper = k_bound(identity_isotopy(phi.n), phi)
    lower = -k_bound(phi, identity_isotopy(phi.n))
    spec = action_spectrum(phi, box, window or (lower - 1e-9, upper + 1e-9), seeds, seed,
                           contractible_only=True)
    vals = [v for v in spec.contractible_values if lower - 1e-9 <= v <= upper + 1e-9]
    lo = min(vals) if vals else lower
    hi = max(upper, lo)
    cands = tuple(v for v in vals if lo <= v <= hi)
    return SpectralValue(None, "spectrum-bracket", (lo, hi), spec, cands,
                         ceiling_hint=_conjugation_ceiling(phi))


# ------------------------------------------------------------ pinned constructions

def _c2_norm(bump: RadialBump, scale: float = 1.0) -> float:
    s = np.linspace(0.0, bump.width, 2001)
    q = s * s / bump.width ** 2
    a = abs(bump.amplitude) * scale
    first = np.abs(bump_profile_prime(q)) * 2 / bump.width ** 2
    second = np.abs(bump_profile_prime(q) * 2 / bump.width ** 2
                    + bump_profile_second(q) * 4 * s * s / bump.width ** 4)
    return float(a * max(np.max(first), np.max(second)))


def small_bump(b_max: float, center=(0.0, 0.0), width: float = 1.5,
               steps: int = 400) -> IntegratedIsotopy:
    """Contact isotopy generated by the autonomous -b, b >= 0 C^2-small with max b = b_max."""
    if not 0 < b_max < 1:
        raise CapacityError("b_max must lie in (0, 1)")
    bump = RadialBump(-b_max, tuple(center), width)
    if _c2_norm(bump) >= 2 * math.pi:
        raise CapacityError("bump is not C^2-small: the Hessian bound reaches 2 pi")
    h = tau_modulated_bump(bump)
    return IntegratedIsotopy(h, steps=steps, tag=PinTag("small-bump", (float(b_max),)))


def lifted_bump(b_max: float, center=(0.0, 0.0), width: float = 1.5, steps: int = 400) -> LiftedIsotopy:
    """Lift of the Hamiltonian isotopy of -b, b a C^2-small radial bump with max b_max."""
    if not b_max > 0:
        raise CapacityError("b_max must be positive")
    bump = RadialBump(-b_max, tuple(center), width)
    if _c2_norm(bump) >= 2 * math.pi:
        raise CapacityError("bump is not C^2-small: the Hessian bound reaches 2 pi")
    f = bump_isotopy(bump, steps=steps)
    return LiftedIsotopy(f, tag=PinTag("lifted-hamiltonian", (float(b_max),)))


# ------------------------------------------------------------ ceilings, gamma, d_gamma

def ceiling_and_gamma(c_phi: SpectralValue, c_phi_inverse: SpectralValue) -> Tuple[int, int]:
    a, b = c_phi.ceiling, c_phi_inverse.ceiling
    if a is None or b is None:
        raise CapacityError("ceiling undetermined: the bracket straddles an integer")
    return a, abs(a) + abs(b)


def gamma(phi: ContactIsotopy, **kw) -> int:
    return ceiling_and_gamma(spectral_number(phi, **kw), spectral_number(InverseIsotopy(phi), **kw))[1]


def d_gamma(phi: ContactIsotopy, psi: ContactIsotopy, **kw) -> int:
    """gamma(phi psi^{-1}); the inverse path is built as psi phi^{-1}."""
    forward = ProductIsotopy(phi, InverseIsotopy(psi))
    backward = ProductIsotopy(psi, InverseIsotopy(phi))
    return ceiling_and_gamma(spectral_number(forward, **kw), spectral_number(backward, **kw))[1]


def ceiling_subadditive(a: float, b: float) -> bool:
    return _ceil(a + b) <= _ceil(a) + _ceil(b)


# ------------------------------------------------------------ capacities and certificates

def domain_capacity(domain: DomainSpec) -> float:
    kind = domain.kind
    if kind in (DomainKind.BALL, DomainKind.PRODUCT_WITH_CIRCLE, DomainKind.CYLINDER):
        return math.pi * domain.radius ** 2
    if kind is DomainKind.LIOUVILLE_SCALED:
        return domain.scale * math.pi * domain.radius ** 2
    raise CapacityError(f"unsupported domain kind {kind}")


def _ball_of_capacity(c: float) -> DomainSpec:
    return DomainSpec(DomainKind.PRODUCT_WITH_CIRCLE, math.sqrt(c / math.pi))


@dataclass(frozen=True)
class CapacityCertificate:
    source: DomainSpec
    target: DomainSpec
    source_capacity: float
    target_capacity: float
    source_capacity_ceiling: int
    target_capacity_ceiling: int
    verdict: str

    def as_dict(self) -> dict:
        return {
            "source": {"kind": self.source.kind.value, "radius": self.source.radius},
            "target": {"kind": self.target.kind.value, "radius": self.target.radius},
            "source_capacity": self.source_capacity,
            "target_capacity": self.target_capacity,
            "source_capacity_ceiling": self.source_capacity_ceiling,
            "target_capacity_ceiling": self.target_capacity_ceiling,
            "verdict": self.verdict,
        }


def nonsqueeze_certificate(source_capacity: float, target_capacity: float,
                           source: Optional[DomainSpec] = None,
                           target: Optional[DomainSpec] = None) -> CapacityCertificate:
    """Obstruction iff ceil(target) < ceil(source); compares capacities, never radii."""
    for v in (source_capacity, target_capacity):
        if not (math.isfinite(v) and v > 0):
            raise CapacityError("capacities must be finite and positive")
    cs, ct = _ceil(source_capacity), _ceil(target_capacity)
    return CapacityCertificate(source or _ball_of_capacity(source_capacity),
                               target or _ball_of_capacity(target_capacity),
                               source_capacity, target_capacity, cs, ct,
                               "obstruction" if ct < cs else "no-obstruction")


def rigidity_pair(c: float, epsilon: float, delta: float, lam: float) -> Tuple[float, float]:
    """Capacities of M(r) x S^1 and M(r / (1 + a r)) x S^1 with r = 1/(c - lam), a = min(eps, eps c)."""
    a = min(epsilon, epsilon * c)
    if not 0 < lam < min(a, delta):
        raise CapacityError("need 0 < lambda < min(a, delta)")
    r = 1.0 / (c - lam)
    return r * c, c * r / (1 + a * r)


# ------------------------------------------------------------ Hofer-Zehnder cutoff

def _ramp(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (4 - 3 * u)


def _ramp_integral(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 4 - 0.6 * u ** 5


@dataclass(frozen=True)
class SlopeCutoff:
    """Piecewise quintic: 1 on [0, a], 0 on [b, inf), -1 <= beta' <= 0.

    beta' ramps from 0 to -k over length d with u^3 (4 - 3u), stays at -k,
    and ramps back; the total drop k (b - a - 1.2 d) equals 1.
    """

    a: float
    b: float
    d: float

    @property
    def k(self) -> float:
        return 1.0 / (self.b - self.a - 1.2 * self.d)

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        up = _ramp((s - self.a) / self.d)
        down = _ramp((self.b - s) / self.d)
        return -self.k * np.minimum(up, down) * ((s > self.a) & (s < self.b))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        a, b, d, k = self.a, self.b, self.d, self.k
        lin = np.clip(s, a + d, b - d) - (a + d)
        drop = k * (d * _ramp_integral((s - a) / d) + lin
                    + d * (0.4 - _ramp_integral((b - s) / d)) * (s > b - d))
        return np.where(s <= a, 1.0, np.where(s >= b, 0.0, 1.0 - drop))


def slope_cutoff(plateau: float, end: float) -> SlopeCutoff:
    length = end - plateau
    if length <= 1.0:
        raise CapacityError("the transition must be longer than 1 for |beta'| <= 1")
    d = min((length - 1.0) / 1.2, length / 2.4) * 0.8
    return SlopeCutoff(plateau, end, d)


@dataclass
class CutoffHamiltonian:
    """H_beta(x, y) = beta(|y|) H(x) on M x R^2m, with its symplectic gradient."""

    H: Callable
    grad_H: Callable
    beta: SlopeCutoff
    m: int
    n: int
    r: float
    epsilon: float
    max_H: float
    period_guarantee: float
    description: str = "cutoff"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        x, y = z[..., : 2 * self.n], z[..., 2 * self.n:]
        return self.beta(np.linalg.norm(y, axis=-1)) * self.H(x)

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        x, y = z[..., : 2 * self.n], z[..., 2 * self.n:]
        s = np.linalg.norm(y, axis=-1)
        bs = self.beta(s)
        safe = np.where(s > 0, s, 1.0)
        dbeta = np.where(s > 0, self.beta.slope(s) / safe, 0.0)
        gx = bs[..., None] * self.grad_H(x)
        gy = (self.H(x) * dbeta)[..., None] * y
        return np.concatenate([gx, gy], axis=-1)

    def vector_field(self, z):
        """(beta(|y|) X_H(x), H(x) X_beta(y))."""
        return hamiltonian_field(self.gradient(z))


def hz_cutoff(H: Callable, grad_H: Callable, r: float, epsilon: float, n: int = 1, m: int = 1,
              max_H: Optional[float] = None, description: str = "H") -> CutoffHamiltonian:
    if not r > 1 + epsilon:
        raise CapacityError("need r > 1 + epsilon")
    beta = slope_cutoff(r - 1 - epsilon, r)
    if max_H is None:
        g = np.linspace(-3, 3, 121)
        pts = np.stack(np.meshgrid(*([g] * (2 * n)), indexing="ij"), -1).reshape(-1, 2 * n)
        max_H = float(np.max(H(pts)))
    guarantee = math.pi * (r - 1 - epsilon) ** 2 / max_H if max_H > 0 else math.inf
    return CutoffHamiltonian(H, grad_H, beta, m, n, r, epsilon, max_H, guarantee,
                             f"cutoff({description}, r={r:g}, eps={epsilon:g})")


# ------------------------------------------------------------ HZ admissibility probe

@dataclass(frozen=True)
class HZProbeReport:
    hamiltonian_description: str
    tested_initial_conditions: int
    min_detected_period: float
    admissible_consistent: bool
    period_limit: float
    returns_polished: int = 0

    def as_dict(self) -> dict:
        return {
            "hamiltonian_description": self.hamiltonian_description,
            "tested_initial_conditions": self.tested_initial_conditions,
            "min_detected_period": self.min_detected_period,
            "admissible_consistent": self.admissible_consistent,
            "period_limit": self.period_limit,
        }


def _rk4_flow(field_fn, z, T, steps):
    """Fixed-step RK4 for a batch; returns the trajectory (steps+1, batch, d)."""
    h = T / steps
    out = np.empty((steps + 1,) + z.shape)
    out[0] = z
    for i in range(steps):
        k1 = field_fn(z)
        k2 = field_fn(z + 0.5 * h * k1)
        k3 = field_fn(z + 0.5 * h * k2)
        k4 = field_fn(z + h * k3)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 1e8:
            raise ProbeError("integrator blow-up in the admissibility probe")
        out[i + 1] = z
    return out


def _flow_to(field_fn, z, T, dt):
    steps = max(1, int(math.ceil(abs(T) / dt)))
    return _rk4_flow(field_fn, z, T, steps)[-1]


def _polish_return(field_fn, z0, T0, dt, tol=RETURN_TOL, iters=12):
    """Gauss-Newton on (z, T) -> phi_T(z) - z with z - z0 orthogonal to X(z0)."""
    z, T = z0.copy(), T0
    d = z.size
    xz = field_fn(z0[None])[0]
    xz = xz / np.linalg.norm(xz)
    for _ in range(iters):
        cols = np.vstack([z[None] + 1e-6 * np.eye(d), z[None]])
        ends = _flow_to(field_fn, cols, T, dt)
        base = ends[-1]
        res = np.concatenate([base - z, [np.dot(z - z0, xz)]])
        if np.linalg.norm(res[:-1]) < tol:
            return T, float(np.linalg.norm(res[:-1]))
        J = np.zeros((d + 1, d + 1))
        J[:d, :d] = (ends[:d] - base).T / 1e-6 - np.eye(d)
        J[:d, d] = field_fn(base[None])[0]
        J[d, :d] = xz
        step = np.linalg.lstsq(J, -res, rcond=1e-10)[0]
        z, T = z + step[:d], T + step[d]
        if not 0 < T < 10 * T0:
            break
    ends = _flow_to(field_fn, z[None], T, dt)
    return T, float(np.linalg.norm(ends[0] - z))


def hz_admissibility_probe(field_fn: Callable, initial_conditions: np.ndarray, period_limit: float = 1.0,
                           description: str = "H", horizon_factor: float = 1.25, dt: float = 2.5e-3,
                           move_tol: float = 1e-5) -> HZProbeReport:
    """Shooting probe: integrate, find near-returns, polish by Newton; falsifies admissibility only."""
    if not period_limit > 0:
        raise ProbeError("period_limit must be positive")
    z0 = np.asarray(initial_conditions, dtype=float)
    horizon = horizon_factor * period_limit
    steps = int(math.ceil(horizon / dt))
    traj = _rk4_flow(field_fn, z0, horizon, steps)
    times = np.linspace(0.0, horizon, steps + 1)
    dist = np.linalg.norm(traj - z0[None], axis=-1)
    reach = dist.max(axis=0)
    best = math.inf
    polished = 0
    for j in np.nonzero(reach > move_tol)[0]:
        dj = dist[:, j]
        left = np.argmax(dj > 0.5 * reach[j])
        cand = [i for i in range(max(left, 1), steps)
                if dj[i] <= dj[i - 1] and dj[i] <= dj[i + 1] and dj[i] < 0.05 * reach[j]]
        for i in cand:
            if times[i] > best - 2 * dt:
                break
            T, res = _polish_return(field_fn, z0[j], times[i], dt)
            polished += 1
            if res < RETURN_TOL and T > 0:
                best = min(best, T)
                break
    return HZProbeReport(description, int(z0.shape[0]), float(best),
                         bool(best > period_limit * (1 + PERIOD_TOL)), period_limit, polished)


def slice_grid(n_points: int, x_radius: float, y_radius: float) -> np.ndarray:
    """Grid on the (x1, y1) half-axes of R^2 x R^2; radial fields need nothing more by symmetry."""
    xs = np.linspace(0.0, x_radius, n_points)
    ys = np.linspace(0.0, y_radius, n_points)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    z = np.zeros((n_points * n_points, 4))
    z[:, 0], z[:, 2] = X.ravel(), Y.ravel()
    return z


def plane_grid(n_points: int, radius: float) -> np.ndarray:
    g = np.linspace(-radius, radius, n_points)
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], -1)


def harmonic_oscillator_field(z):
    """X_H for H = pi |y|^2: rotation at angular speed 2 pi."""
    return hamiltonian_field(2 * math.pi * np.asarray(z))


def flattened_radial(osc: float, radius: float):
    """Radial H = osc * P(|y|^2 / R^2), P from 1 to 0 with |P'| <= k close to 1; returns (H, grad, rate)."""
    beta = SlopeCutoff(0.0, 1.0, 0.05)
    k = beta.k

    def H(y):
        q = np.sum(np.asarray(y) ** 2, axis=-1) / radius ** 2
        return osc * beta(q)

    def grad(y):
        y = np.asarray(y)
        q = np.sum(y * y, axis=-1) / radius ** 2
        return (osc * beta.slope(q) * 2 / radius ** 2)[..., None] * y

    return H, grad, 2 * osc * k / radius ** 2


def hz_lower_bound(radius: float = 1.0, fractions: Sequence[float] = (0.5, 0.7, 0.85, 0.9, 0.95, 1.05),
                   grid: int = 16) -> Tuple[float, list]:
    """Largest oscillation among radial Hamiltonians supported in B(radius) passing the probe."""
    best = 0.0
    log = []
    k = SlopeCutoff(0.0, 1.0, 0.05).k
    for frac in fractions:
        osc = frac * math.pi * radius ** 2 / k
        H, grad, _ = flattened_radial(osc, radius)
        rep = hz_admissibility_probe(lambda z: hamiltonian_field(grad(z)), plane_grid(grid, radius),
                                     description=f"radial(osc={osc:.6g})")
        log.append((osc, rep))
        if rep.admissible_consistent:
            best = max(best, osc)
    return best, log


# ------------------------------------------------------------ displacement

@dataclass
class DisplacementWitness:
    isotopy: HamiltonianIsotopy
    energy: float
    radius: float
    margin: float
    min_gap: float


def _smooth_cut(u):
    return smooth_step(np.asarray(u, dtype=float))


def displacement_witness(radius: float, margin: float, samples: int = 720,
                         steps: int = 200) -> DisplacementWitness:
    """Shear F(y) = chi(y1) psi(y2) with psi' = 2 sqrt(a^2 - y2^2) on |y2| <= a.

    Inside the slab chi = 1 the flow moves each horizontal chord of B(radius) to
    the left by more than its length, so the ball is displaced; osc F = pi a^2.
    """
    if not margin > 0:
        raise CapacityError("margin must be positive")
    if radius < 0:
        raise CapacityError("radius must be nonnegative")
    a2 = radius ** 2 + margin / (2 * math.pi)
    a = math.sqrt(a2)
    top = math.pi * a2
    L = radius + 2 * a + 1.0
    fall = a + 1.0

    def dpsi(u):
        u = np.asarray(u, dtype=float)
        rise = 2 * np.sqrt(np.clip(a2 - u * u, 0.0, None))
        down_u = (u - fall) / 1.0
        down = -top * smooth_step_prime(np.clip(down_u, 0.0, 1.0)) * ((down_u > 0) & (down_u < 1))
        return np.where(np.abs(u) <= a, rise, 0.0) + down

    def psi(u):
        u = np.asarray(u, dtype=float)
        c = np.clip(u, -a, a)
        rise = c * np.sqrt(np.clip(a2 - c * c, 0.0, None)) + a2 * np.arcsin(c / a) + 0.5 * math.pi * a2
        return rise - top * _smooth_cut((u - fall) / 1.0)

    def chi(u):
        u = np.abs(np.asarray(u, dtype=float))
        return 1.0 - _smooth_cut(u - L)

    def dchi(u):
        u = np.asarray(u, dtype=float)
        v = np.abs(u) - L
        return -np.sign(u) * smooth_step_prime(np.clip(v, 0.0, 1.0)) * ((v > 0) & (v < 1))

    def F(t, y):
        return chi(y[..., 0]) * psi(y[..., 1])

    def grad(t, y):
        g = np.empty_like(np.asarray(y, dtype=float))
        g[..., 0] = dchi(y[..., 0]) * psi(y[..., 1])
        g[..., 1] = chi(y[..., 0]) * dpsi(y[..., 1])
        return g

    iso = HamiltonianIsotopy(F, n=1, grad=grad, support_radius=math.hypot(L + 1, fall + 1),
                             steps=steps, name="shear", autonomous=True)
    energy = integrate.quad(lambda u: float(dpsi(u)), -a, a, limit=200)[0]
    if radius == 0:
        return DisplacementWitness(iso, energy, radius, margin, math.inf)
    th = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    rings = np.linspace(0.0, 1.0, 9)[1:]
    pts = np.concatenate([np.stack([radius * q * np.cos(th), radius * q * np.sin(th)], -1) for q in rings]
                         + [np.zeros((1, 2))])
    img, _ = iso.evaluate(1.0, pts)
    gap = np.linalg.norm(img, axis=-1) - radius
    if np.min(gap) <= 0:
        i = int(np.argmin(gap))
        raise DisplacementError(f"displacement failed: {pts[i]} maps to {img[i]} inside B({radius})")
    # image of the closed ball must also miss the ball: chords move by more than their length
    return DisplacementWitness(iso, float(energy), radius, margin, float(np.min(gap)))
