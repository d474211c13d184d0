"""An explicit compactly supported Reeb flow on R^{2n} x S^1.

The contact Hamiltonian is h = f(s), s = |y|, where the profile f equals rho
near the origin, vanishes beyond r - epsilon, is monotone, and has slope
bounded by 2 pi s (strict family) or 4 pi s (relaxed family).  Its flow
rotates every complex coordinate by w(s) t with w = f'(s)/s and moves tau by
(f(s) - s f'(s)/2) t.

Profiles are built from f'(s) = c s m(s), where m is a window made of two
quintic smoothsteps of width delta.  Everything is piecewise polynomial, so
f, f' and w are exact up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from .contact_calculus import ClosedFormIsotopy, ContactHamiltonian, IntegratedIsotopy, PinTag
from .model_spaces import PolarPoint, from_polar, to_polar

GRID_CHECK = 10_000
FEASIBILITY_MARGIN = 1e-6
CARTESIAN_CUTOFF = 1e-8

_S5 = Polynomial([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


class ProfileError(ValueError):
    """Requested profile violates the feasibility bound or the collar geometry."""


class Family(str, Enum):
    STRICT = "strict"
    RELAXED = "relaxed"


# ------------------------------------------------------------ piecewise polynomials

@dataclass(frozen=True)
class PiecewisePoly:
    """Piecewise polynomial on [breaks[0], breaks[-1]], constant ``tail`` beyond.

    Piece k is stored in the local variable u = s - breaks[k], which keeps the
    narrow smoothstep pieces well conditioned.
    """

    breaks: Tuple[float, ...]
    polys: Tuple[Polynomial, ...]
    tail: float = 0.0

    def __call__(self, s):
        s = np.asarray(s)
        out = np.full(s.shape, self.tail, dtype=np.result_type(s, float))
        for k, p in enumerate(self.polys):
            lo, hi = self.breaks[k], self.breaks[k + 1]
            mask = (s >= lo) & (s < hi) if k < len(self.polys) - 1 else (s >= lo) & (s <= hi)
            if np.any(mask):
                out[mask] = _horner(p.coef, s[mask] - lo)
        return out

    def scaled(self, a: float) -> "PiecewisePoly":
        return PiecewisePoly(self.breaks, tuple(a * p for p in self.polys), a * self.tail)

    def refine(self, breaks: Sequence[float]) -> "PiecewisePoly":
        pts = sorted(set(self.breaks) | set(breaks))
        polys = []
        for lo, hi in zip(pts[:-1], pts[1:]):
            mid = 0.5 * (lo + hi)
            k = int(np.clip(np.searchsorted(self.breaks, mid) - 1, 0, len(self.polys) - 1))
            shift = lo - self.breaks[k]
            p = self.polys[k]
            polys.append(p(Polynomial([shift, 1.0])) if shift else p)
        return PiecewisePoly(tuple(pts), tuple(polys), self.tail)

    def __add__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        a = self.refine(other.breaks)
        b = other.refine(self.breaks)
        return PiecewisePoly(a.breaks, tuple(p + q for p, q in zip(a.polys, b.polys)),
                             a.tail + b.tail)

    def times_s(self) -> "PiecewisePoly":
        return PiecewisePoly(self.breaks, tuple(p * Polynomial([lo, 1.0])
                                                for p, lo in zip(self.polys, self.breaks)),
                             self.tail)

    def antiderivative(self, value_at_start: float) -> "PiecewisePoly":
        """Continuous antiderivative; the tail becomes the final value (tail slope must be 0)."""
        polys = []
        acc = value_at_start
        for k, p in enumerate(self.polys):
            q = p.integ(lbnd=0.0, k=acc)
            polys.append(q)
            acc = float(q(self.breaks[k + 1] - self.breaks[k]))
        return PiecewisePoly(self.breaks, tuple(polys), acc)

    def integral(self) -> float:
        return self.antiderivative(0.0).tail


def _horner(coef, x):
    out = np.zeros_like(x) + coef[-1]
    for c in coef[-2::-1]:
        out = out * x + c
    return out


def window(r: float, epsilon: float, delta: float) -> PiecewisePoly:
    """m(s): 0 on [0, eps], smoothstep up to 1 by eps + delta, 1, smoothstep down to 0 at r - eps."""
    a, b = epsilon, r - epsilon
    if not 0 < delta <= 0.5 * (b - a):
        raise ProfileError(f"window width {delta} does not fit in ({a}, {b})")
    up = _S5(Polynomial([0.0, 1.0 / delta]))
    down = _S5(Polynomial([1.0, -1.0 / delta]))
    if b - delta <= a + delta:
        breaks = [0.0, a, a + delta, b, r]
        polys = [Polynomial([0.0]), up, down, Polynomial([0.0])]
    else:
        breaks = [0.0, a, a + delta, b - delta, b, r]
        polys = [Polynomial([0.0]), up, Polynomial([1.0]), down, Polynomial([0.0])]
    return PiecewisePoly(tuple(breaks), tuple(polys), 0.0)


# ------------------------------------------------------------ profiles

@dataclass(frozen=True)
class ProfileFunction:
    """Profile f with f(s) = rho on [0, eps] and 0 on [r - eps, inf).

    ``w`` is the rotation rate f'(s)/s, stored as a piecewise polynomial.
    """

    rho: float
    r: float
    epsilon: float
    family: Family
    w: PiecewisePoly
    f_pp: PiecewisePoly
    delta: float = 0.0

    def f(self, s):
        s = np.asarray(s)
        return np.where(s >= self.r, 0.0, self.f_pp(np.minimum(s, self.r)))

    def fprime(self, s):
        s = np.asarray(s)
        return s * self.omega(s)

    def omega(self, s):
        """f'(s)/s, extended by 0 at s = 0."""
        s = np.asarray(s)
        return np.where(s >= self.r, 0.0, self.w(np.minimum(s, self.r)))

    def tau_speed(self, s):
        """f(s) - s f'(s)/2."""
        s = np.asarray(s)
        return self.f(s) - 0.5 * s * s * self.omega(s)

    @property
    def slope_bound(self) -> float:
        return 2 * math.pi if self.family is Family.STRICT else 4 * math.pi

    def max_rate(self, grid: int = GRID_CHECK) -> float:
        s = np.linspace(0.0, self.r, grid + 1)
        return float(np.max(np.abs(self.omega(s))))

    def verify(self, grid: int = GRID_CHECK) -> dict:
        """Grid check of the plateau, monotonicity and slope conditions."""
        s = np.linspace(0.0, self.r, grid + 1)
        f = self.f(s)
        fp = self.fprime(s)
        inner = s <= self.epsilon
        outer = s >= self.r - self.epsilon
        sign = -np.sign(self.rho)
        pos = s > 0
        report = {
            "plateau_inner": float(np.max(np.abs(f[inner] - self.rho))),
            "plateau_outer": float(np.max(np.abs(f[outer]))),
            "monotone": bool(np.all(sign * fp >= -1e-14)),
            "slope_margin": float(np.min(self.slope_bound * s[pos] - np.abs(fp[pos]))),
        }
        report["ok"] = (report["plateau_inner"] < 1e-12 and report["plateau_outer"] < 1e-12
                        and report["monotone"] and report["slope_margin"] > 0)
        return report

    def to_table(self, samples: int = 201) -> str:
        s = np.linspace(0.0, self.r, samples)
        rows = ["s\tf\tfprime"]
        rows += [f"{a:.12g}\t{b:.12g}\t{c:.12g}" for a, b, c in zip(s, self.f(s), self.fprime(s))]
        return "\n".join(rows) + "\n"


def _profile_from_rate(rho, r, epsilon, family, w: PiecewisePoly, delta) -> ProfileFunction:
    f_pp = w.times_s().antiderivative(rho)
    return ProfileFunction(float(rho), float(r), float(epsilon), Family(family), w, f_pp, delta)


def family_bound(r: float, family) -> float:
    return (1.0 if Family(family) is Family.STRICT else 2.0) * math.pi * r * r


def make_profile(rho: float, r: float = 1.0, epsilon: float = 0.1, family="strict",
                 delta: Optional[float] = None) -> ProfileFunction:
    """Monotone window profile realising plateau ``rho`` inside the family's slope bound."""
    family = Family(family)
    if not (epsilon > 0 and r > 0 and 2 * epsilon < r):
        raise ProfileError(f"need 0 < 2 eps < r, got eps={epsilon}, r={r}")
    bound = family_bound(r, family)
    if abs(rho) >= bound - FEASIBILITY_MARGIN:
        raise ProfileError(
            f"|rho|={abs(rho):.6g} violates the {family.value} feasibility bound "
            f"|rho| < {bound:.6g} (the slope bound integrates to this over [0, r])")
    if rho == 0:
        zero = PiecewisePoly((0.0, r), (Polynomial([0.0]),), 0.0)
        return _profile_from_rate(0.0, r, epsilon, family, zero, 0.0)
    reach = bound / (math.pi * r * r) * math.pi * ((r - epsilon) ** 2 - epsilon ** 2)
    if abs(rho) >= reach - FEASIBILITY_MARGIN:
        raise ProfileError(
            f"|rho|={abs(rho):.6g} is not realisable with collars eps={epsilon}: "
            f"the slope bound integrates to {reach:.6g} over (eps, r - eps)")
    ratio = bound / (math.pi * r * r)  # 1 or 2
    d = delta if delta is not None else 0.25 * (r - 2 * epsilon)
    while True:
        m = window(r, epsilon, d)
        I = m.times_s().integral()
        lam = abs(rho) / (2 * math.pi * I)
        if lam < ratio * (1 - 1e-9) or delta is not None:
            break
        d *= 0.5
        if d < 1e-9:
            raise ProfileError("could not fit a window profile under the slope bound")
    if lam >= ratio:
        raise ProfileError(f"window width {d} too wide for rho={rho}")
    w = m.scaled(-rho / I)
    prof = _profile_from_rate(rho, r, epsilon, family, w, d)
    check = prof.verify()
    if not check["ok"]:
        raise ProfileError(f"profile failed grid verification: {check}")
    return prof


# ------------------------------------------------------------ flows

def profile_hamiltonian(profile: ProfileFunction, n: int = 1) -> ContactHamiltonian:
    """h(y, tau) = f(|y|) with the analytic gradient w(s) y."""

    def h(t, x):
        s = np.sqrt(np.sum(x[..., :-1] ** 2, axis=-1))
        return profile.f(s)

    def grad(t, x):
        s = np.sqrt(np.sum(x[..., :-1] ** 2, axis=-1))
        g = np.zeros_like(x)
        g[..., :-1] = profile.omega(s)[..., None] * x[..., :-1]
        return g

    return ContactHamiltonian(h, n=n, grad=grad, support_radius=profile.r,
                              name=f"profile({profile.rho:g})", tau_independent=True)


def flow_cartesian(profile: ProfileFunction, t, x) -> np.ndarray:
    """Closed-form time-t map on point arrays (..., 2n+1)."""
    x = np.asarray(x)
    y = x[..., :-1]
    s = np.sqrt(np.sum(y ** 2, axis=-1))
    ang = profile.omega(s) * t
    c, sn = np.cos(ang)[..., None], np.sin(ang)[..., None]
    out = np.array(x)
    out[..., 0:-1:2] = c * y[..., 0::2] - sn * y[..., 1::2]
    out[..., 1:-1:2] = sn * y[..., 0::2] + c * y[..., 1::2]
    out[..., -1] = x[..., -1] + profile.tau_speed(s) * t
    return out


def closed_form_flow(profile: ProfileFunction, t: float, p: PolarPoint) -> PolarPoint:
    """Time-t map in polar form; near the origin the Cartesian form is used."""
    s = float(p.s[0]) if p.s.size == 1 else float(np.linalg.norm(p.s))
    if s < CARTESIAN_CUTOFF:
        q = from_polar(p)
        out = flow_cartesian(profile, t, q.as_array())
        return PolarPoint(p.s, p.phi, out[-1], out[-1])
    w = float(profile.omega(s))
    lift = p.tau_lift + float(profile.tau_speed(s)) * t
    return PolarPoint(p.s, p.phi + w * t, lift, lift)


class ProfileFlow(ClosedFormIsotopy):
    """The isotopy t -> theta_t for a profile, in closed form (exact: rho_t = 1)."""

    def __init__(self, profile: ProfileFunction, n: int = 1):
        self.profile = profile
        super().__init__(
            profile_hamiltonian(profile, n),
            lambda t, x: (flow_cartesian(profile, t, x), np.ones(x.shape[:-1])),
            lambda t, x: flow_cartesian(profile, -t, x),
            tag=PinTag("profile-flow", (profile.rho,)))


def integrated_profile_flow(profile: ProfileFunction, steps: int = 1000, n: int = 1,
                            dtype=float) -> IntegratedIsotopy:
    return IntegratedIsotopy(profile_hamiltonian(profile, n), steps=steps, dtype=dtype,
                             tag=PinTag("profile-flow", (profile.rho,)))


def flow_discrepancy(profile: ProfileFunction, steps: int = 1000, s_grid: int = 41,
                     t_grid: Sequence[float] = (0.25, 0.5, 1.0), dtype=float,
                     phases: int = 3) -> float:
    """sup over an (s, t) grid of |integrated - closed form| (tau by its lift)."""
    s = np.linspace(0.0, 1.1 * profile.r, s_grid)
    ang = 2 * np.pi * np.arange(phases) / phases
    S, A = np.meshgrid(s, ang, indexing="ij")
    x = np.stack([S * np.cos(A), S * np.sin(A), 0.3 * np.ones_like(S)], axis=-1).reshape(-1, 3)
    iso = integrated_profile_flow(profile, steps, dtype=dtype)
    worst = 0.0
    for t in t_grid:
        got, _ = iso.evaluate(t, x.astype(dtype))
        ref = flow_cartesian(profile, np.asarray(t, dtype=dtype), x.astype(dtype))
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return worst


# ------------------------------------------------------------ translated points in closed form

@dataclass(frozen=True)
class ClosedFormTP:
    s_lo: float
    s_hi: float
    shift: float
    winding: int


def enumerate_translated_points_closed_form(profile: ProfileFunction,
                                            grid: int = GRID_CHECK) -> List[ClosedFormTP]:
    """Radii with f'(s)/s in 2 pi Z, grouped into intervals, with their shifts.

    Each entry carries the rotation number k = f'(s)/(2 pi s); collars have k = 0.
    """
    if profile.rho == 0:
        return [ClosedFormTP(0.0, math.inf, 0.0, 0)]
    out = [ClosedFormTP(0.0, profile.epsilon, profile.rho, 0),
           ClosedFormTP(profile.r - profile.epsilon, math.inf, 0.0, 0)]
    s = np.linspace(profile.epsilon, profile.r - profile.epsilon, grid + 1)
    k_rate = profile.omega(s) / (2 * math.pi)
    kmax = int(math.floor(np.max(np.abs(k_rate)) + 1e-12))
    for k in range(-kmax, kmax + 1):
        if k == 0:
            continue
        g = lambda z, k=k: float(profile.omega(z)) / (2 * math.pi) - k
        vals = k_rate - k
        for i in range(grid):
            a, b = vals[i], vals[i + 1]
            if a == 0.0:
                root = float(s[i])
            elif a * b < 0:
                root = brentq(g, s[i], s[i + 1], xtol=1e-15, rtol=1e-15)
            else:
                continue
            out.append(ClosedFormTP(root, root, float(profile.f(root)) - math.pi * k * root * root, k))
    return out


def inner_tube_iterate(profile: ProfileFunction, nu: int, t: float, x) -> np.ndarray:
    """nu-fold composition of the time-t map."""
    y = np.asarray(x, dtype=float)
    for _ in range(nu):
        y = flow_cartesian(profile, t, y)
    return y


# ------------------------------------------------------------ the rho-family and g / l

@dataclass
class GLFamily:
    """rho -> f_rho with plateau -rho, blending a wide and a narrow window.

    f_rho' = rho ((1 - lam) s m_A / I_A + lam s m_B / I_B), lam = (rho - rho0)_+ / (3 pi/2 - rho0),
    where rho0 = 2 pi I_A is the largest rho at which the wide shape stays strictly
    under 2 pi s (it touches 2 pi s on its plateau).
    """

    epsilon: float = 0.05
    delta_wide: float = 0.2
    delta_narrow: float = 0.02
    rho_max: float = 1.5 * math.pi

    def __post_init__(self):
        r = 1.0
        self.m_a = window(r, self.epsilon, self.delta_wide)
        self.m_b = window(r, self.epsilon, self.delta_narrow)
        self.i_a = self.m_a.times_s().integral()
        self.i_b = self.m_b.times_s().integral()
        self.rho0 = 2 * math.pi * self.i_a
        if not self.rho_max * 1.0 / self.i_b < 4 * math.pi:
            raise ProfileError("narrow shape exceeds the relaxed slope bound at rho_max")

    def lam(self, rho: float) -> float:
        return min(1.0, max(0.0, (rho - self.rho0) / (self.rho_max - self.rho0)))

    def profile(self, rho: float) -> ProfileFunction:
        lam = self.lam(rho)
        w = self.m_a.scaled(rho * (1 - lam) / self.i_a) + self.m_b.scaled(rho * lam / self.i_b)
        fam = Family.STRICT if rho <= self.rho0 else Family.RELAXED
        return _profile_from_rate(-rho, 1.0, self.epsilon, fam, w, self.delta_wide)


TOUCH_TOL = 1e-12


def l_value(profile: ProfileFunction, grid: int = 4000) -> float:
    """sup{s in [0, 1] : f'(s) >= 2 pi s}, scanning from s = 1 downward."""
    s = np.linspace(0.0, 1.0, grid + 1)
    d = profile.omega(s) - 2 * math.pi * (1 - TOUCH_TOL)
    hits = np.nonzero(d[1:] >= 0)[0]
    if hits.size == 0:
        return 0.0
    i = hits[-1] + 1
    if i == grid:
        return 1.0
    g = lambda z: float(profile.omega(z)) - 2 * math.pi * (1 - TOUCH_TOL)
    return brentq(g, s[i], s[i + 1], xtol=1e-15, rtol=1e-14)


def g_value(profile: ProfileFunction, rho: float, l: Optional[float] = None) -> float:
    l = l_value(profile) if l is None else l
    return float(profile.f(l)) - math.pi * l * l + rho


@dataclass
class GLScan:
    rho: np.ndarray
    l: np.ndarray
    g: np.ndarray
    rho0: float
    rho1: float
    g_rho1: float
    jumps: List[Tuple[float, float, float]] = field(default_factory=list)
    semicontinuity_ok: bool = True


def g_and_l_scan(family: Optional[GLFamily] = None, grid: int = 1000,
                 tol: float = 1e-6) -> GLScan:
    """Tabulate l and g over [rho0, 3 pi/2], then bisect a sign change of g."""
    family = family or GLFamily()
    rhos = np.linspace(family.rho0, family.rho_max, grid + 1)
    ls = np.empty_like(rhos)
    gs = np.empty_like(rhos)
    for i, rho in enumerate(rhos):
        prof = family.profile(rho)
        ls[i] = l_value(prof)
        gs[i] = g_value(prof, rho, ls[i])
    idx = np.nonzero((gs[:-1] < 0) & (gs[1:] >= 0))[0]
    if idx.size == 0:
        raise ProfileError("g has no sign change on the scanned interval")
    i = int(idx[0])
    a, b = float(rhos[i]), float(rhos[i + 1])
    G = lambda rho: g_value(family.profile(rho), rho)
    ga = G(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        gm = G(mid)
        if abs(gm) < tol * 1e-3 or b - a < 1e-15:
            break
        if (gm < 0) == (ga < 0):
            a, ga = mid, gm
        else:
            b = mid
    rho1 = mid
    # jumps of l: compare one-sided limits of g at large l gaps
    jumps = []
    ok = True
    dl = np.abs(np.diff(ls))
    for j in np.nonzero(dl > 20 * np.median(dl) + 1e-3)[0]:
        lo, hi = float(rhos[j]), float(rhos[j + 1])
        for _ in range(60):
            m = 0.5 * (lo + hi)
            if abs(l_value(family.profile(m)) - ls[j]) < 0.5 * dl[j]:
                lo = m
            else:
                hi = m
        left, right = G(lo), G(hi)
        jumps.append((0.5 * (lo + hi), left, right))
        ok = ok and right <= left + 1e-9
    return GLScan(rhos, ls, gs, family.rho0, rho1, G(rho1), jumps, ok)
