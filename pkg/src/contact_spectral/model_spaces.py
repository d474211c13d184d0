"""The model contact manifold R^{2n} x S^1 with alpha = gamma + dtau.

Coordinates on R^{2n} are stored in interleaved pairs (x_1, y_1, ..., x_n, y_n),
so that gamma = 1/2 sum_j (x_j dy_j - y_j dx_j) and d(alpha) = sum_j dx_j ^ dy_j.
Arrays carrying points have shape (..., 2n + 1); the last entry is the real
lift of the circle coordinate.  The mod-1 representative is always derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

GEOMETRIC_TOL = 1e-10
CLOSURE_TOL = 1e-6


class ModelError(ValueError):
    """Raised for malformed geometric input."""


def _as_vector(y) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(y, dtype=float)).copy()
    if arr.ndim != 1 or arr.size % 2 or arr.size == 0:
        raise ModelError(f"y must be a nonempty vector of even length, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PrequantizationPoint:
    """A point (y, tau) of R^{2n} x S^1 with a continuous lift of tau."""

    y: np.ndarray
    tau: float
    tau_lift: float

    def __post_init__(self):
        object.__setattr__(self, "y", _as_vector(self.y))
        lift = float(self.tau_lift)
        tau = float(self.tau)
        if not 0.0 <= tau < 1.0:
            raise ModelError(f"tau must lie in [0, 1), got {tau}")
        gap = (lift - tau) - round(lift - tau)
        if abs(gap) > 1e-12:
            raise ModelError(f"tau={tau} is not the mod-1 class of tau_lift={lift}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "tau_lift", lift)

    @classmethod
    def from_lift(cls, y, tau_lift: float) -> "PrequantizationPoint":
        lift = float(tau_lift)
        return cls(y, _mod1(lift), lift)

    @classmethod
    def from_array(cls, arr) -> "PrequantizationPoint":
        arr = np.asarray(arr, dtype=float)
        return cls.from_lift(arr[:-1], arr[-1])

    @property
    def n(self) -> int:
        return self.y.size // 2

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.y, [self.tau_lift]])

    def __eq__(self, other):
        if not isinstance(other, PrequantizationPoint):
            return NotImplemented
        return (np.array_equal(self.y, other.y) and self.tau == other.tau
                and self.tau_lift == other.tau_lift)

    def __hash__(self):
        return hash((self.y.tobytes(), self.tau, self.tau_lift))


def _mod1(x: float) -> float:
    r = math.fmod(x, 1.0)
    if r < 0:
        r += 1.0
    if r >= 1.0:
        r = 0.0
    return r


@dataclass(frozen=True)
class PolarPoint:
    """Polar coordinates on R^{2n} x S^1.

    For n = 1 ``s`` is the radius and ``phi`` holds one angle.  For n > 1 the
    toolkit uses one radius per complex coordinate, so ``s`` and ``phi`` both
    have length n (the multi-radius generalisation of the planar case).
    """

    s: np.ndarray
    phi: np.ndarray
    tau: float
    tau_lift: float

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if s.shape != phi.shape:
            raise ModelError("s and phi must have matching length")
        if np.any(s < 0):
            raise ModelError("radial coordinates must be nonnegative")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "phi", np.mod(phi, 2 * np.pi))
        object.__setattr__(self, "tau_lift", float(self.tau_lift))
        object.__setattr__(self, "tau", _mod1(float(self.tau_lift)))


def to_polar(p: PrequantizationPoint) -> PolarPoint:
    pairs = p.y.reshape(-1, 2)
    s = np.hypot(pairs[:, 0], pairs[:, 1])
    phi = np.arctan2(pairs[:, 1], pairs[:, 0])
    return PolarPoint(s, phi, p.tau, p.tau_lift)


def from_polar(q: PolarPoint) -> PrequantizationPoint:
    y = np.empty(2 * q.s.size)
    y[0::2] = q.s * np.cos(q.phi)
    y[1::2] = q.s * np.sin(q.phi)
    return PrequantizationPoint.from_lift(y, q.tau_lift)


@dataclass(frozen=True)
class SymplectizationPoint:
    base: PrequantizationPoint
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ModelError(f"r must be positive, got {self.r}")


class DomainKind(str, Enum):
    BALL = "ball"
    CYLINDER = "cylinder"
    PRODUCT_WITH_CIRCLE = "product-with-circle"
    LIOUVILLE_SCALED = "liouville-scaled"


@dataclass(frozen=True)
class DomainSpec:
    """Simple domains: B(radius), its Liouville image, and products with S^1.

    ``cylinder`` is the symplectic cylinder B^2(radius) x R^{2n-2}.
    """

    kind: DomainKind
    radius: float
    scale: float = 1.0
    ambient_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if not self.radius > 0:
            raise ModelError("radius must be positive")
        if self.kind is DomainKind.LIOUVILLE_SCALED and not self.scale > 0:
            raise ModelError("Liouville scale must be positive")
        if self.ambient_dim < 2 or self.ambient_dim % 2:
            raise ModelError("ambient_dim must be a positive even integer")

    @property
    def effective_radius(self) -> float:
        if self.kind is DomainKind.LIOUVILLE_SCALED:
            return math.sqrt(self.scale) * self.radius
        return self.radius

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind is DomainKind.CYLINDER:
            return np.hypot(y[..., 0], y[..., 1]) < self.radius
        return np.linalg.norm(y, axis=-1) < self.effective_radius


# ---------------------------------------------------------------- forms

def gamma_form(y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """gamma_y(v) = 1/2 sum (x dy - y dx), vectorised over leading axes."""
    return 0.5 * (np.sum(y[..., 0::2] * v[..., 1::2], axis=-1)
                  - np.sum(y[..., 1::2] * v[..., 0::2], axis=-1))


def alpha_form(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """alpha_x(v) for point arrays x and tangent arrays v of shape (..., 2n+1)."""
    return gamma_form(x[..., :-1], v[..., :-1]) + v[..., -1]


def omega_form(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """d(gamma)(u, v) = sum dx ^ dy on R^{2n}."""
    return np.sum(u[..., 0::2] * v[..., 1::2] - u[..., 1::2] * v[..., 0::2], axis=-1)


def eval_contact_form(point: PrequantizationPoint, tangent: Sequence[float]) -> float:
    v = np.asarray(tangent, dtype=float)
    if v.shape != (point.y.size + 1,):
        raise ModelError(f"tangent must have dimension {point.y.size + 1}, got {v.shape}")
    return float(alpha_form(point.as_array(), v))


def standard_j(n: int) -> np.ndarray:
    """Matrix J with X_H = J grad H, i.e. omega(X_H, .) = -dH."""
    j = np.zeros((2 * n, 2 * n))
    for k in range(n):
        j[2 * k, 2 * k + 1] = -1.0
        j[2 * k + 1, 2 * k] = 1.0
    return j


# ---------------------------------------------------------------- flows

def reeb_flow(point: PrequantizationPoint, t: float) -> PrequantizationPoint:
    return PrequantizationPoint.from_lift(point.y, point.tau_lift + t)


def liouville_scale(obj, r: float):
    """Time-log(r) flow of Z = 1/2 (radial field): multiplies y by sqrt(r)."""
    if not r > 0:
        raise ModelError(f"Liouville parameter must be positive, got {r}")
    if isinstance(obj, DomainSpec):
        if obj.kind is DomainKind.LIOUVILLE_SCALED:
            return DomainSpec(obj.kind, obj.radius, obj.scale * r, obj.ambient_dim)
        if obj.kind is DomainKind.BALL:
            return DomainSpec(DomainKind.BALL, math.sqrt(r) * obj.radius, 1.0, obj.ambient_dim)
        return DomainSpec(obj.kind, math.sqrt(r) * obj.radius, obj.scale, obj.ambient_dim)
    if isinstance(obj, PrequantizationPoint):
        return PrequantizationPoint(math.sqrt(r) * obj.y, obj.tau, obj.tau_lift)
    return math.sqrt(r) * np.asarray(obj, dtype=float)


def winding_number(loop) -> int:
    """Net S^1 winding of a closed loop given with a continuous tau lift."""
    arr = _loop_array(loop)
    if arr.shape[0] < 2:
        return 0
    gap_y = float(np.max(np.abs(arr[-1, :-1] - arr[0, :-1])))
    dlift = arr[-1, -1] - arr[0, -1]
    k = round(dlift)
    gap_tau = abs(dlift - k)
    if gap_y > CLOSURE_TOL or gap_tau > CLOSURE_TOL:
        raise ModelError(f"loop does not close: |dy|={gap_y:.3e}, |dtau mod 1|={gap_tau:.3e}")
    return int(k)


def _loop_array(loop) -> np.ndarray:
    if isinstance(loop, np.ndarray):
        return np.atleast_2d(loop)
    return np.array([p.as_array() for p in loop])


def concatenated_translation_loop(path: np.ndarray, shift: float, samples: int = 32) -> np.ndarray:
    """Path {phi_t(x)} followed by the Reeb arc {theta^{-shift t}(phi_1(x))}."""
    end = path[-1]
    s = np.linspace(0.0, 1.0, samples + 1)[1:]
    arc = np.repeat(end[None, :], s.size, axis=0)
    arc[:, -1] = end[-1] - shift * s
    return np.vstack([path, arc])
