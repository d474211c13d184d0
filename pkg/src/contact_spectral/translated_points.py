"""Translated points, action spectra, Conley-Zehnder indices and the grading.

A translated point of phi = phi_1 is a point x with phi(x) = theta^eta(x) and
rho_1(x) = 1.  The solver works on the lifted residual

    R(x, eta) = (phi_1(x) - x - eta e_tau, log rho_1(x)),

where the tau entries are real lifts, so the shift it returns is the lift
difference.  Other shifts eta + k (k an integer) describe the same geometric
point; their concatenated loops wind k times around S^1 and are therefore
not contractible in the filling.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .contact_calculus import (
    ConjugatedIsotopy,
    ContactIsotopy,
    Contactomorphism,
    ProductIsotopy,
    RescaledIsotopy,
    iterate_isotopy,
)
from .model_spaces import (
    DomainKind,
    DomainSpec,
    PrequantizationPoint,
    concatenated_translation_loop,
    standard_j,
    winding_number,
)

log = logging.getLogger(__name__)

SOLVER_TOL = 1e-10
CHECK_TOL = 1e-8
DISTINCT = 1e-4
MAX_ITER = 50
FD_STEP = 1e-7


@dataclass(frozen=True)
class TranslatedPoint:
    x: PrequantizationPoint
    shift: float
    conformal_residual: float
    contractible: bool
    residual: float = 0.0
    winding: int = 0
    cz_index: Optional[int] = None

    @property
    def action(self) -> float:
        return -self.shift

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.x.y))


# ------------------------------------------------------------ solver

def _residual(phi: ContactIsotopy, z: np.ndarray) -> np.ndarray:
    x, eta = z[:, :-1], z[:, -1]
    y, rho = phi.evaluate(1.0, x)
    R = np.empty_like(z)
    R[:, :-2] = y[:, :-1] - x[:, :-1]
    R[:, -2] = y[:, -1] - x[:, -1] - eta
    R[:, -1] = np.log(rho)
    return R


def _jacobian(phi: ContactIsotopy, z: np.ndarray) -> np.ndarray:
    """FD Jacobian in one batched call; the eta column is exact."""
    m, d = z.shape
    dx = d - 1
    h = FD_STEP * np.maximum(1.0, np.abs(z[:, :-1]))
    stencil = np.repeat(z[None, :, :-1], 2 * dx, axis=0)
    for i in range(dx):
        stencil[2 * i, :, i] += h[:, i]
        stencil[2 * i + 1, :, i] -= h[:, i]
    y, rho = phi.evaluate(1.0, stencil.reshape(-1, dx))
    y = y.reshape(2 * dx, m, dx)
    lr = np.log(rho).reshape(2 * dx, m)
    J = np.zeros((m, d, d))
    for i in range(dx):
        J[:, :-1, i] = (y[2 * i] - y[2 * i + 1]) / (2 * h[:, i:i + 1])
        J[:, -1, i] = (lr[2 * i] - lr[2 * i + 1]) / (2 * h[:, i])
        J[:, i, i] -= 1.0
    J[:, -2, -1] = -1.0
    return J


def newton_solve(phi: ContactIsotopy, z0: np.ndarray, tol: float = SOLVER_TOL,
                 max_iter: int = MAX_ITER) -> Tuple[np.ndarray, np.ndarray]:
    """Damped Gauss-Newton (least-squares steps, backtracking) from every row of z0.

    Returns the final iterates and their residual norms.
    """
    z = np.array(z0, dtype=float)
    R = _residual(phi, z)
    norm = np.max(np.abs(R), axis=1)
    active = np.isfinite(norm) & (norm >= tol)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        J = _jacobian(phi, z[idx])
        bad = ~np.all(np.isfinite(J.reshape(idx.size, -1)), axis=1)
        if np.any(bad):
            log.info("skipping %d seeds with non-finite Jacobian", int(bad.sum()))
            active[idx[bad]] = False
            norm[idx[bad]] = np.inf
            idx, J = idx[~bad], J[~bad]
        step = np.stack([np.linalg.lstsq(J[k], -R[i], rcond=1e-12)[0] for k, i in enumerate(idx)])
        lam = np.ones(idx.size)
        improved = np.zeros(idx.size, dtype=bool)
        for _ in range(12):
            todo = ~improved
            if not np.any(todo):
                break
            cand = z[idx[todo]] + lam[todo, None] * step[todo]
            Rc = _residual(phi, cand)
            nc = np.max(np.abs(Rc), axis=1)
            ok = np.isfinite(nc) & (nc < norm[idx[todo]])
            sel = idx[todo][ok]
            z[sel], R[sel], norm[sel] = cand[ok], Rc[ok], nc[ok]
            tmp = improved[todo]
            tmp[ok] = True
            improved[todo] = tmp
            lam[todo] *= 0.5
        active[idx[~improved]] = False
        active &= norm >= tol
    return z, norm


def _seeds(box: DomainSpec, n: int, count: int, rng_seed: int) -> np.ndarray:
    """Uniform grid in the box (y) x [0,1) (tau), jittered by a scrambled Sobol sequence."""
    d = 2 * n + 1
    per = max(2, int(round(count ** (1.0 / d))))
    R = box.effective_radius
    axes = [np.linspace(-R, R, per)] * (2 * n) + [np.arange(per) / per]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    with warnings.catch_warnings():
        # balance properties are irrelevant for jitter
        warnings.simplefilter("ignore", UserWarning)
        sob = qmc.Sobol(d, scramble=True, seed=rng_seed).random(grid.shape[0])
    spacing = np.array([2 * R / (per - 1)] * (2 * n) + [1.0 / per])
    pts = grid + (sob - 0.5) * spacing
    return pts[box.contains(pts[:, :-1]) | (np.linalg.norm(pts[:, :-1], axis=1) < R)]


def _dedupe(z: np.ndarray, thr: float) -> np.ndarray:
    """Keep one representative per cluster (distance with tau taken mod 1); deterministic."""
    order = np.lexsort(z[:, ::-1].T)
    z = z[order]
    keep: List[int] = []
    kept = np.empty((0, z.shape[1]))
    for i in range(z.shape[0]):
        if kept.shape[0]:
            dy = np.max(np.abs(kept[:, :-2] - z[i, :-2]), axis=1)
            dt = np.abs(kept[:, -2] - z[i, -2])
            dt = np.minimum(dt % 1.0, 1.0 - dt % 1.0)
            de = np.abs(kept[:, -1] - z[i, -1])
            if np.any((dy < thr) & (dt < thr) & (de < thr)):
                continue
        keep.append(i)
        kept = np.vstack([kept, z[i]])
    return z[keep]


def _windings(phi: ContactIsotopy, pts: np.ndarray, shifts: np.ndarray,
              samples: int = 16) -> np.ndarray:
    times = np.linspace(0.0, 1.0, samples + 1)
    paths = phi.path(times, pts)  # (T, m, d)
    out = np.empty(pts.shape[0], dtype=int)
    for j in range(pts.shape[0]):
        loop = concatenated_translation_loop(paths[:, j, :], shifts[j], samples)
        out[j] = winding_number(loop)
    return out


def find_translated_points(phi: ContactIsotopy, search_box: DomainSpec,
                           shift_window: Tuple[float, float], seeds: int = 4096,
                           seed: int = 0, distinct: float = DISTINCT,
                           tol: float = SOLVER_TOL,
                           extra_seeds: Optional[np.ndarray] = None,
                           contractible_only: bool = False) -> List[TranslatedPoint]:
    """Grid-seeded damped Newton for translated points with shifts in ``shift_window``.

    Each converged solution is reported once per admissible shift eta + k in
    the window; only k = 0 (the lift difference itself) is contractible.
    ``contractible_only`` skips the other representatives, which keeps very
    wide windows cheap.
    """
    a, b = shift_window
    if not (math.isfinite(a) and math.isfinite(b) and a <= b):
        raise ValueError("shift_window must be a finite interval")
    n = phi.n
    X0 = _seeds(search_box, n, seeds, seed)
    if extra_seeds is not None:
        X0 = np.vstack([X0, np.atleast_2d(extra_seeds)])
    if X0.shape[0] == 0:
        return []
    y1, _ = phi.evaluate(1.0, X0)
    z0 = np.column_stack([X0, y1[:, -1] - X0[:, -1]])
    z, norm = newton_solve(phi, z0, tol)
    good = norm < tol
    if not np.any(good):
        return []
    z = z[good]
    z = z[np.linalg.norm(z[:, :-2], axis=1) <= search_box.effective_radius]
    if z.shape[0] == 0:
        return []
    z[:, -2] = np.mod(z[:, -2], 1.0)
    z = _dedupe(z, distinct)
    # independent re-check
    R = _residual(phi, z)
    res = np.max(np.abs(R[:, :-1]), axis=1)
    conf = np.abs(np.exp(R[:, -1]) - 1.0)
    ok = (res < CHECK_TOL) & (conf < CHECK_TOL)
    z, res, conf = z[ok], res[ok], conf[ok]
    if z.shape[0] == 0:
        return []
    wind = _windings(phi, z[:, :-1], z[:, -1])
    out: List[TranslatedPoint] = []
    for j in range(z.shape[0]):
        eta = float(z[j, -1])
        p = PrequantizationPoint.from_lift(z[j, :-2], z[j, -2])
        ks = range(math.ceil(a - eta - 1e-12), math.floor(b - eta + 1e-12) + 1)
        if contractible_only:
            ks = [k for k in (-int(wind[j]),) if k in ks]
        for k in ks:
            out.append(TranslatedPoint(p, eta + k, float(conf[j]), wind[j] + k == 0,
                                       float(res[j]), int(wind[j] + k)))
    out.sort(key=lambda tp: (tp.shift, tp.radius, tp.x.tau))
    return out


def iterated_translated_points(phi: ContactIsotopy, nu_max: int, box: DomainSpec,
                               window: Tuple[float, float], seeds: int = 1024,
                               seed: int = 0) -> Dict[int, List[TranslatedPoint]]:
    if nu_max < 1:
        raise ValueError("nu_max must be >= 1")
    return {nu: find_translated_points(iterate_isotopy(phi, nu), box, window, seeds, seed)
            for nu in range(1, nu_max + 1)}


def distinct_points(result: Dict[int, List[TranslatedPoint]], thr: float = DISTINCT) -> int:
    """Number of geometrically distinct points among all iterated translated points."""
    pts = [np.concatenate([tp.x.y, [tp.x.tau, 0.0]]) for tps in result.values() for tp in tps]
    if not pts:
        return 0
    return _dedupe(np.array(pts), thr).shape[0]


# ------------------------------------------------------------ spectrum

@dataclass(frozen=True)
class SpectrumEntry:
    action: float
    shift: float
    contractible: bool
    multiplicity: int
    s_min: float
    s_max: float
    representative: TranslatedPoint


@dataclass
class ActionSpectrum:
    entries: List[SpectrumEntry]
    window: Tuple[float, float]

    @property
    def values(self) -> List[float]:
        return [e.action for e in self.entries]

    @property
    def contractible_values(self) -> List[float]:
        return sorted({round(e.action, 12) for e in self.entries if e.contractible})

    def contractible(self) -> List[SpectrumEntry]:
        return [e for e in self.entries if e.contractible]

    @property
    def nonresonant(self) -> bool:
        """True when no contractible action value is an integer."""
        return all(abs(v - round(v)) > 1e-8 for v in self.contractible_values)


def cluster_spectrum(tps: Sequence[TranslatedPoint], window: Tuple[float, float],
                     tol: float = 1e-7) -> ActionSpectrum:
    entries: List[SpectrumEntry] = []
    for contractible in (True, False):
        group = sorted((tp for tp in tps if tp.contractible == contractible), key=lambda tp: tp.action)
        i = 0
        while i < len(group):
            j = i
            while j + 1 < len(group) and group[j + 1].action - group[i].action < tol:
                j += 1
            block = group[i:j + 1]
            radii = [tp.radius for tp in block]
            act = float(np.median([tp.action for tp in block]))
            entries.append(SpectrumEntry(act, -act, contractible, len(block),
                                         min(radii), max(radii), block[0]))
            i = j + 1
    entries.sort(key=lambda e: (e.action, not e.contractible))
    return ActionSpectrum(entries, tuple(window))


def action_spectrum(phi: ContactIsotopy, box: DomainSpec, window: Tuple[float, float],
                    seeds: int = 4096, seed: int = 0, contractible_only: bool = False) -> ActionSpectrum:
    """Actions -eta over translated points whose actions lie in ``window``."""
    a, b = window
    tps = find_translated_points(phi, box, (-b, -a), seeds, seed, contractible_only=contractible_only)
    return cluster_spectrum(tps, window)


def transport_error(phi: ContactIsotopy, psi: Contactomorphism, x: np.ndarray, shift: float) -> float:
    """How far psi(x) is from being a translated point of psi phi psi^{-1} with the same shift.

    The tau comparison is taken mod 1, so every integer shift of the same point is accepted.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = psi.apply(x)[0]
    out, rho = ConjugatedIsotopy(phi, psi).evaluate(1.0, y)
    dy = np.max(np.abs(out[..., :-1] - y[..., :-1]))
    dt = np.mod(out[..., -1] - y[..., -1] - shift + 0.5, 1.0) - 0.5
    return float(max(dy, np.max(np.abs(dt)), np.max(np.abs(rho - 1.0))))


def time_map_inverse(phi: ContactIsotopy, s: float) -> Contactomorphism:
    """phi_s^{-1} as a single contactomorphism."""

    def fwd(x):
        z = phi.inverse(s, x)
        return z, 1.0 / phi.evaluate(s, z)[1]

    return Contactomorphism(fwd, lambda x: phi(s, x), n=phi.n, name="time-map-inverse")


@dataclass(frozen=True)
class ContainmentReport:
    s: float
    spectrum: Tuple[float, ...]
    union: Tuple[float, ...]
    max_gap: float


def displacement_containment(phi: ContactIsotopy, psi: ContactIsotopy, s: float, box: DomainSpec,
                             window: Tuple[float, float], seeds: int = 512,
                             seed: int = 0) -> ContainmentReport:
    """Compare Spec of mu^s = psi_t phi_{st} with Spec of phi_s^{-1} psi phi_s together with Spec of psi."""
    mu = ProductIsotopy(psi, RescaledIsotopy(phi, s))
    conj = ConjugatedIsotopy(psi, time_map_inverse(phi, s))
    spec = action_spectrum(mu, box, window, seeds, seed).values
    union = sorted(set(action_spectrum(conj, box, window, seeds, seed).values)
                   | set(action_spectrum(psi, box, window, seeds, seed).values))
    gaps = [min((abs(v - u) for u in union), default=math.inf) for v in spec]
    return ContainmentReport(s, tuple(spec), tuple(union), max(gaps, default=0.0))


# ------------------------------------------------------------ Conley-Zehnder index

class DegeneratePathError(ValueError):
    pass


def _signature(M: np.ndarray, tol: float = 1e-9) -> int:
    if M.size == 0:
        return 0
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    scale = max(1.0, float(np.max(np.abs(ev))))
    return int(np.sum(ev > tol * scale) - np.sum(ev < -tol * scale))


def conley_zehnder_index(path: np.ndarray, times: Optional[np.ndarray] = None) -> int:
    """Robbin-Salamon crossing-form index of a sampled symplectic path from the identity.

    With Psi' = J S Psi (J as in ``standard_j``) the crossing form is S restricted to
    ker(Psi - 1).  The index is half the signature at t = 0 plus the signatures at
    interior crossings, located as local minima of the smallest singular value
    of Psi - 1.  Normalised so that Psi = exp(t J eps A) has index n - ind(A).
    """
    path = np.asarray(path, dtype=float)
    K, d, _ = path.shape
    if d % 2 or K < 3:
        raise ValueError("path must have shape (K >= 3, 2m, 2m)")
    m = d // 2
    times = np.linspace(0.0, 1.0, K) if times is None else np.asarray(times, dtype=float)
    if np.max(np.abs(path[0] - np.eye(d))) > 1e-8:
        raise ValueError("path must start at the identity")
    if abs(np.linalg.det(path[-1] - np.eye(d))) <= 1e-8:
        raise DegeneratePathError("degenerate path")
    J = standard_j(m)
    dPsi = np.gradient(path, times, axis=0, edge_order=2)
    S = np.einsum("ij,kjl,klm->kim", -J, dPsi, np.linalg.inv(path))
    S = 0.5 * (S + np.transpose(S, (0, 2, 1)))
    mu2 = _signature(S[0])  # twice the contribution of t = 0
    sv = np.array([np.linalg.svd(P - np.eye(d), compute_uv=False)[-1] for P in path])
    speed = np.array([np.linalg.norm(dp, 2) for dp in dPsi])
    dt = np.diff(times)
    for k in range(1, K - 1):
        if not (sv[k] <= sv[k - 1] and sv[k] < sv[k + 1]):
            continue
        thr = 2.0 * speed[k] * max(dt[k - 1], dt[k])
        if sv[k] > thr:
            continue
        _, s, Vt = np.linalg.svd(path[k] - np.eye(d))
        V = Vt[s < thr].T
        mu2 += 2 * _signature(V.T @ S[k] @ V)
    if mu2 % 2:
        raise DegeneratePathError("odd half-signature at the start; path is not generic")
    return mu2 // 2


def quadratic_path(A: np.ndarray, eps: float = 0.1, samples: int = 201) -> np.ndarray:
    """Psi(t) = exp(t J eps A), the linearised flow of eps y.A y / 2."""
    from scipy.linalg import expm

    A = np.asarray(A, dtype=float)
    J = standard_j(A.shape[0] // 2)
    return np.stack([expm(t * eps * J @ A) for t in np.linspace(0.0, 1.0, samples)])


def rotation_path(theta: float, samples: int = 201) -> np.ndarray:
    t = np.linspace(0.0, 1.0, samples)
    a = 2 * np.pi * theta * t
    return np.stack([np.array([[np.cos(x), -np.sin(x)], [np.sin(x), np.cos(x)]]) for x in a])


def rfh_grading(tp: Optional[TranslatedPoint], eta: float, local_dim: int, morse_index: int,
                mu_cz: Optional[int] = None, n: Optional[int] = None) -> int:
    """Grading of a critical point: three cases according to the sign of eta."""
    if local_dim < 0:
        raise ValueError("local_dim must be >= 0")
    if mu_cz is None and tp is not None:
        mu_cz = tp.cz_index
    if n is None:
        if tp is None:
            raise ValueError("n is required without a translated point")
        n = tp.x.n
    if eta == 0:
        return 1 - n + morse_index
    if mu_cz is None:
        raise ValueError("a Conley-Zehnder index is required for eta != 0")
    if local_dim % 2:
        raise ValueError("local_dim must be even when eta != 0 for an integer grading")
    base = mu_cz - local_dim // 2 + morse_index
    return base if eta > 0 else base + 1
