"""Command-line front end.

Every subcommand takes its parameters from a flat ``key = value`` config file
(``--config``) overridden by flags.  Reports are JSON by default, CSV for the
tabular results, with numbers rounded to 12 significant digits.  The wall time
is only recorded with ``--record-time`` so that reruns are byte-identical.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import os

_threads = os.environ.get("CONTACT_SPECTRAL_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from . import capacities as cap
from .contact_calculus import (
    ConjugatedIsotopy,
    IntegratedIsotopy,
    InverseIsotopy,
    ProductIsotopy,
    hamiltonian_algebra,
    reeb_path,
)
from .fixtures import RadialBump, circle_twist, random_twisted_rotation_bump
from .model_spaces import DomainKind, DomainSpec
from .profile_flows import (
    GLFamily,
    ProfileFlow,
    enumerate_translated_points_closed_form,
    flow_discrepancy,
    g_and_l_scan,
    make_profile,
)
from .rabinowitz_action import (
    DiscretizedLoop,
    construct_critical_pair,
    critical_residual,
    evaluate_rabinowitz_action,
)
from .translated_points import (
    action_spectrum,
    conley_zehnder_index,
    find_translated_points,
    quadratic_path,
    transport_error,
)

log = logging.getLogger("contact_spectral")

SIG = 12


class ValidationError(Exception):
    pass


class NumericalFailure(Exception):
    pass


# ------------------------------------------------------------ parameters

Param = Tuple[Callable, Any, str]

COMMON: Dict[str, Param] = {
    "seed": (int, 0, "seed for all randomised seeding"),
    "format": (str, "json", "json or csv"),
    "output": (str, "-", "report path, '-' for stdout"),
}

PARAMS: Dict[str, Dict[str, Param]] = {
    "flow": {
        "kind": (str, "profile", "profile (integrated vs closed form) or algebra"),
        "rho": (float, -0.4, "profile plateau value"),
        "r": (float, 1.0, "profile support radius"),
        "eps": (float, 0.1, "profile collar width"),
        "family": (str, "strict", "strict or relaxed slope bound"),
        "steps": (int, 1000, "RK4 steps per unit time"),
        "mode": (str, "product", "product, quotient or conjugate (algebra)"),
        "pairs": (int, 5, "random fixture pairs (algebra)"),
        "points": (int, 200, "sample points (algebra)"),
        "algebra_steps": (int, 100, "RK4 steps per unit time (algebra)"),
    },
    "translated-points": {
        "fixture": (str, "profile", "profile, reeb, lifted-bump or small-bump"),
        "rho": (float, -0.4, "profile plateau value"),
        "r": (float, 1.0, "profile support radius"),
        "eps": (float, 0.1, "profile collar width"),
        "T": (float, 0.5, "Reeb time"),
        "b": (float, 0.3, "bump maximum"),
        "box": (float, 1.05, "search ball radius"),
        "shift_lo": (float, -1.0, "shift window lower end"),
        "shift_hi": (float, 1.0, "shift window upper end"),
        "seeds": (int, 512, "solver seeds"),
    },
    "spectrum": {
        "fixture": (str, "profile", "profile, reeb, lifted-bump or small-bump"),
        "rho": (float, -0.4, "profile plateau value"),
        "r": (float, 1.0, "profile support radius"),
        "eps": (float, 0.1, "profile collar width"),
        "T": (float, 0.5, "Reeb time"),
        "b": (float, 0.3, "bump maximum"),
        "box": (float, 1.05, "search ball radius"),
        "lo": (float, -1.0, "action window lower end"),
        "hi": (float, 1.0, "action window upper end"),
        "seeds": (int, 512, "solver seeds"),
    },
    "action": {
        "fixture": (str, "reeb", "reeb, profile, lifted-bump or small-bump"),
        "rho": (float, -0.4, "profile plateau value"),
        "r": (float, 1.0, "profile support radius"),
        "eps": (float, 0.1, "profile collar width"),
        "T": (float, 0.5, "Reeb time"),
        "b": (float, 0.3, "bump maximum"),
        "x": (str, "0,0,0", "comma separated start point y..., tau"),
        "shift": (float, 0.5, "translated-point shift of the start point"),
        "N": (int, 256, "loop resolution"),
        "loop": (str, "", "optional .npy or whitespace table of loop samples"),
        "eta": (float, 0.0, "Lagrange multiplier for a supplied loop"),
    },
    "profile": {
        "rho": (float, -0.4, "plateau value"),
        "r": (float, 1.0, "support radius"),
        "eps": (float, 0.1, "collar width"),
        "family": (str, "strict", "strict or relaxed"),
        "steps": (int, 1000, "RK4 steps for the integrated comparison"),
        "scan": (int, 0, "grid size of the g/l scan, 0 to skip"),
    },
    "capacity": {
        "target": (str, "domain", "domain, reeb, profile, lifted-bump or small-bump"),
        "domain": (str, "ball", "ball, cylinder, product-with-circle or liouville-scaled"),
        "radius": (float, 1.0, "domain radius"),
        "scale": (float, 1.0, "Liouville scale"),
        "T": (float, 2.5, "Reeb time"),
        "rho": (float, -0.4, "profile plateau value"),
        "b": (float, 0.3, "bump maximum"),
    },
    "nonsqueeze": {
        "source_capacity": (float, None, "capacity of the source domain"),
        "target_capacity": (float, None, "capacity of the target domain"),
        "rigidity": (str, "", "c,eps,delta,lambda for the rigidity pair"),
    },
    "hz-probe": {
        "hamiltonian": (str, "oscillator", "oscillator, cutoff or lower-bound"),
        "grid": (int, 64, "initial conditions per axis"),
        "period_limit": (float, 1.0, "period threshold"),
        "amplitude": (float, 0.5, "radial bump amplitude (cutoff)"),
        "width": (float, 1.0, "radial bump width (cutoff)"),
        "r": (float, 2.0, "cutoff radius"),
        "eps": (float, 0.1, "cutoff epsilon"),
        "radius": (float, 1.0, "ball radius (lower-bound, witness)"),
        "margin": (float, 0.1, "displacement margin"),
    },
    "verify": {
        "quick": (int, 1, "1 for the reduced suite"),
    },
}


def parse_config(path: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}:{lineno}: expected key = value")
                k, v = line.split("=", 1)
                out[k.strip().replace("-", "_")] = v.strip()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return out


def resolve(command: str, flags: Dict[str, Any], config: Dict[str, str]) -> Dict[str, Any]:
    """defaults <- config file <- flags."""
    spec = {**COMMON, **PARAMS[command]}
    unknown = set(config) - set(spec) - {"command"}
    if unknown:
        raise ValidationError(f"unknown config keys for {command}: {sorted(unknown)}")
    if config.get("command", command) != command:
        raise ValidationError(f"config is for {config['command']!r}, not {command!r}")
    out: Dict[str, Any] = {}
    for key, (typ, default, _) in spec.items():
        value = flags.get(key)
        if value is None and key in config:
            try:
                value = typ(config[key])
            except ValueError as exc:
                raise ValidationError(f"bad value for {key}: {config[key]!r}") from exc
        out[key] = default if value is None else value
    if out["format"] not in ("json", "csv"):
        raise ValidationError("format must be json or csv")
    return out


# ------------------------------------------------------------ formatting

def _round(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return float(f"{v:.{SIG}g}")
    if isinstance(v, dict):
        return {str(k): _round(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_round(x) for x in v]
    return v


def _fmt(v: Any) -> str:
    v = _round(v)
    if isinstance(v, float):
        return f"{v:.{SIG}g}"
    return str(v)


def render_json(report: Dict[str, Any]) -> str:
    return json.dumps(_round(report), indent=2, sort_keys=True) + "\n"


def render_csv(report: Dict[str, Any]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    table = report.get("table")
    if table:
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow([_fmt(x) for x in row])
        for rec in table.get("records", []):
            w.writerow(["# " + ", ".join(f"{k}={_fmt(v)}" for k, v in rec.items())])
    else:
        w.writerow(["key", "value"])
        for res in report["results"]:
            for k, v in sorted(res.items()):
                if not isinstance(v, (dict, list)):
                    w.writerow([k, _fmt(v)])
    return buf.getvalue()


# ------------------------------------------------------------ fixtures

def _fixture(cfg: Dict[str, Any]):
    kind = cfg["fixture"]
    if kind == "profile":
        return ProfileFlow(make_profile(cfg["rho"], cfg["r"], cfg["eps"]))
    if kind == "reeb":
        return reeb_path(cfg["T"])
    if kind == "lifted-bump":
        return cap.lifted_bump(cfg["b"])
    if kind == "small-bump":
        return cap.small_bump(cfg["b"])
    raise ValidationError(f"unknown fixture {kind!r}")


def _tp_rows(tps) -> List[Dict[str, Any]]:
    return [{"y": tp.x.y.tolist(), "tau": tp.x.tau, "shift": tp.shift, "action": tp.action,
             "contractible": tp.contractible, "winding": tp.winding, "residual": tp.residual,
             "conformal_residual": tp.conformal_residual} for tp in tps]


# ------------------------------------------------------------ commands

def cmd_flow(cfg):
    tol = {"sup_error": 1e-6, "ratio": 14.0}
    if cfg["kind"] == "profile":
        prof = make_profile(cfg["rho"], cfg["r"], cfg["eps"], cfg["family"])
        e1 = flow_discrepancy(prof, cfg["steps"])
        e2 = flow_discrepancy(prof, 2 * cfg["steps"])
        return [{"kind": "profile", "method": "closed-form vs RK4", "sup_error": e1,
                 "sup_error_half_step": e2, "ratio": e1 / e2 if e2 > 0 else math.inf}], tol, None
    if cfg["kind"] == "algebra":
        rng = np.random.default_rng(cfg["seed"])
        x = np.column_stack([rng.uniform(-1.2, 1.2, (cfg["points"], 2)), rng.uniform(0, 1, cfg["points"])])
        worst = 0.0
        for _ in range(cfg["pairs"]):
            phi, psi = random_twisted_rotation_bump(rng), random_twisted_rotation_bump(rng)
            mode = cfg["mode"]
            if mode == "product":
                ref = ProductIsotopy(phi, psi)
                h = hamiltonian_algebra("product", phi, psi)
            elif mode == "quotient":
                ref = ProductIsotopy(phi, InverseIsotopy(psi))
                h = hamiltonian_algebra("quotient", phi, psi)
            elif mode == "conjugate":
                theta = circle_twist(float(np.exp(rng.uniform(-0.4, 0.4))), float(rng.uniform()))
                ref = ConjugatedIsotopy(phi, theta)
                h = hamiltonian_algebra("conjugate", phi, theta)
            else:
                raise ValidationError(f"unknown mode {mode!r}")
            got = IntegratedIsotopy(h, steps=cfg["algebra_steps"])(1.0, x)
            want = ref(1.0, x)
            worst = max(worst, float(np.max(np.abs(got - want))))
        return [{"kind": "algebra", "mode": cfg["mode"], "method": "integrated vs composed",
                 "max_error": worst}], {"max_error": 1e-5}, None
    raise ValidationError(f"unknown flow kind {cfg['kind']!r}")


def _box(cfg) -> DomainSpec:
    return DomainSpec(DomainKind.BALL, cfg["box"])


def cmd_translated_points(cfg):
    phi = _fixture(cfg)
    tps = find_translated_points(phi, _box(cfg), (cfg["shift_lo"], cfg["shift_hi"]),
                                 cfg["seeds"], cfg["seed"])
    rows = _tp_rows(tps)
    table = {"columns": ["y", "tau", "shift", "action", "contractible"],
             "rows": [[";".join(_fmt(v) for v in r["y"]), r["tau"], r["shift"], r["action"],
                       r["contractible"]] for r in rows]}
    return rows, {"solver": 1e-10, "check": 1e-8, "distinct": 1e-4}, table


def cmd_spectrum(cfg):
    phi = _fixture(cfg)
    spec = action_spectrum(phi, _box(cfg), (cfg["lo"], cfg["hi"]), cfg["seeds"], cfg["seed"])
    rows = [{"action": e.action, "shift": e.shift, "contractible": e.contractible,
             "multiplicity": e.multiplicity, "s_min": e.s_min, "s_max": e.s_max} for e in spec.entries]
    res = [{"entries": rows, "contractible_values": spec.contractible_values,
            "nonresonant": spec.nonresonant, "method": "solver"}]
    table = {"columns": ["action", "shift", "contractible", "s_cluster"],
             "rows": [[r["action"], r["shift"], r["contractible"],
                       f"{_fmt(r['s_min'])}..{_fmt(r['s_max'])}"] for r in rows]}
    return res, {"cluster": 1e-7, "check": 1e-8}, table


def _load_loop(path: str) -> np.ndarray:
    try:
        if path.endswith(".npy"):
            return np.load(path)
        return np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read loop {path}: {exc}") from exc


def cmd_action(cfg):
    phi = _fixture(cfg)
    if cfg["loop"]:
        loop = DiscretizedLoop(_load_loop(cfg["loop"]), cfg["eta"])
        method = "supplied loop"
    else:
        try:
            x = np.array([float(v) for v in cfg["x"].split(",")])
        except ValueError as exc:
            raise ValidationError(f"bad point {cfg['x']!r}") from exc
        if x.size != 2 * phi.n + 1:
            raise ValidationError(f"point needs {2 * phi.n + 1} coordinates")
        loop = construct_critical_pair(phi, x, cfg["shift"], cfg["N"])
        method = "constructed critical pair"
    val = evaluate_rabinowitz_action(loop, phi)
    return [{"method": method, "eta": loop.eta, "action": val.value, "N": loop.N,
             "residual": critical_residual(loop, phi), "winding": loop.winding()}], \
        {"action": 1e-6}, None


def cmd_profile(cfg):
    prof = make_profile(cfg["rho"], cfg["r"], cfg["eps"], cfg["family"])
    e1 = flow_discrepancy(prof, cfg["steps"])
    tps = enumerate_translated_points_closed_form(prof)
    contractible = sorted({round(-tp.shift, 12) + 0.0 for tp in tps if tp.winding == 0})
    res = [{"rho": prof.rho, "r": prof.r, "eps": prof.epsilon, "family": prof.family.value,
            "window_delta": prof.delta, "verify": prof.verify(),
            "contractible_spectrum": contractible, "spectrum_expected": sorted({0.0, -prof.rho}),
            "sup_error": e1, "method": "closed form"}]
    table = None
    tol = {"sup_error": 1e-6, "spectrum": 1e-8}
    if cfg["scan"]:
        scan = g_and_l_scan(GLFamily(), cfg["scan"])
        above = scan.g[scan.rho > math.pi]
        res.append({"scan": "g/l", "rho0": scan.rho0, "g_rho0": scan.g[0], "root": scan.rho1,
                    "g_root": scan.g_rho1, "min_g_above_pi": float(np.min(above)) if above.size else None,
                    "semicontinuity_ok": scan.semicontinuity_ok})
        table = {"columns": ["rho", "l", "g"],
                 "rows": [[a, b, c] for a, b, c in zip(scan.rho, scan.l, scan.g)],
                 "records": [{"root": scan.rho1, "g_root": scan.g_rho1}]}
        tol["root"] = 1e-6
    return res, tol, table


def cmd_capacity(cfg):
    target = cfg["target"]
    if target == "domain":
        dom = DomainSpec(cfg["domain"], cfg["radius"], cfg["scale"])
        c = cap.domain_capacity(dom)
        return [{"domain": dom.kind.value, "radius": dom.radius, "scale": dom.scale,
                 "capacity": c, "ceiling": cap._ceil(c), "method": "formula"}], {}, None
    fixture = {"reeb": lambda: reeb_path(cfg["T"]),
               "profile": lambda: ProfileFlow(make_profile(cfg["rho"])),
               "lifted-bump": lambda: cap.lifted_bump(cfg["b"]),
               "small-bump": lambda: cap.small_bump(cfg["b"])}.get(target)
    if fixture is None:
        raise ValidationError(f"unknown capacity target {target!r}")
    phi = fixture()
    sv = cap.spectral_number(phi)
    svi = cap.spectral_number(InverseIsotopy(phi))
    cbar, gam = cap.ceiling_and_gamma(sv, svi)
    return [{"target": target, "c": sv.c, "method": sv.method, "c_inverse": svi.c,
             "ceiling": cbar, "gamma": gam}], {"pin": cap.PIN_TOL}, None


def cmd_nonsqueeze(cfg):
    if cfg["rigidity"]:
        try:
            c, eps, delta, lam = (float(v) for v in cfg["rigidity"].split(","))
        except ValueError as exc:
            raise ValidationError("rigidity needs c,eps,delta,lambda") from exc
        src, tgt = cap.rigidity_pair(c, eps, delta, lam)
    else:
        src, tgt = cfg["source_capacity"], cfg["target_capacity"]
        if src is None or tgt is None:
            raise ValidationError("need --source-capacity and --target-capacity, or --rigidity")
    cert = cap.nonsqueeze_certificate(src, tgt)
    return [cert.as_dict()], {}, None


def cmd_hz_probe(cfg):
    kind = cfg["hamiltonian"]
    if kind == "oscillator":
        rep = cap.hz_admissibility_probe(cap.harmonic_oscillator_field, cap.plane_grid(cfg["grid"], 1.0),
                                         cfg["period_limit"], "H = pi |y|^2")
        return [rep.as_dict()], {"return": cap.RETURN_TOL}, None
    if kind == "cutoff":
        bump = RadialBump(cfg["amplitude"], (0.0, 0.0), cfg["width"])
        cut = cap.hz_cutoff(bump.value, bump.gradient, cfg["r"], cfg["eps"], max_H=cfg["amplitude"])
        grid = cap.slice_grid(cfg["grid"], 1.2 * bump.support_radius, cfg["r"] + 0.1)
        rep = cap.hz_admissibility_probe(cut.vector_field, grid, cfg["period_limit"], cut.description)
        out = rep.as_dict()
        out["period_guarantee"] = cut.period_guarantee
        return [out], {"return": cap.RETURN_TOL}, None
    if kind == "lower-bound":
        best, _ = cap.hz_lower_bound(cfg["radius"])
        wit = cap.displacement_witness(cfg["radius"], cfg["margin"])
        c = math.pi * cfg["radius"] ** 2
        return [{"hz_lower_bound": best, "capacity": c, "displacement_energy": wit.energy,
                 "min_gap": wit.min_gap, "sandwich": best <= c <= wit.energy + cfg["margin"]}], \
            {"margin": cfg["margin"]}, None
    raise ValidationError(f"unknown hamiltonian {kind!r}")


def _check(name: str, ok: bool, value: Any, tol: Any) -> Dict[str, Any]:
    return {"check": name, "passed": bool(ok), "value": value, "tolerance": tol}


def cmd_verify(cfg):
    checks: List[Dict[str, Any]] = []
    prof = make_profile(-0.4, 1.0, 0.1)
    e1 = flow_discrepancy(prof, 200, s_grid=21)
    e2 = flow_discrepancy(prof, 400, s_grid=21)
    checks.append(_check("profile flow fourth order", e1 / e2 >= 14, e1 / e2, 14))
    tps = enumerate_translated_points_closed_form(prof)
    spec = sorted({round(-tp.shift, 10) + 0.0 for tp in tps if tp.winding == 0})
    checks.append(_check("profile contractible spectrum", np.allclose(spec, [0.0, 0.4], atol=1e-8), spec, 1e-8))
    pf = ProfileFlow(prof)
    found = find_translated_points(pf, DomainSpec(DomainKind.BALL, 1.05), (-0.6, 0.2), 256, cfg["seed"])
    vals = sorted({round(tp.action, 8) for tp in found if tp.contractible})
    checks.append(_check("solver spectrum", np.allclose(vals, [0.0, 0.4], atol=1e-8), vals, 1e-8))
    for T in (0.5, 1.0, 2.5):
        phi = reeb_path(T)
        loop = construct_critical_pair(phi, np.zeros(3), T, 64)
        a = evaluate_rabinowitz_action(loop, phi).value
        checks.append(_check(f"reeb action T={T}", abs(a + T) < 1e-6, a, 1e-6))
        checks.append(_check(f"reeb pin T={T}", cap.spectral_number(phi).c == -T, -T, 0))
    for n in (1, 2):
        for k in range(2 * n + 1):
            A = np.diag([-1.0] * k + [1.0] * (2 * n - k))
            mu = conley_zehnder_index(quadratic_path(A, 0.1))
            checks.append(_check(f"CZ n={n} k={k}", mu == n - k, mu, 0))
    for nu in range(-3, 4):
        loop = reeb_path(float(nu))
        sv = cap.spectral_number(loop)
        checks.append(_check(f"ceiling reeb loop nu={nu}", sv.ceiling == -nu and cap.gamma(loop) == 2 * abs(nu),
                             sv.ceiling, 0))
    rng = np.random.default_rng(cfg["seed"])
    ab = rng.uniform(-10, 10, (10000, 2))
    bad = sum(not cap.ceiling_subadditive(a, b) for a, b in ab)
    checks.append(_check("ceiling subadditivity", bad == 0, bad, 0))
    cert = cap.nonsqueeze_certificate(math.pi * 1.1 ** 2, math.pi * 0.9 ** 2)
    checks.append(_check("ball certificate", cert.verdict == "obstruction", cert.verdict, None))
    rig = cap.nonsqueeze_certificate(*cap.rigidity_pair(3.0, 0.5, 0.5, 0.2))
    checks.append(_check("rigidity certificate",
                         (rig.source_capacity_ceiling, rig.target_capacity_ceiling) == (2, 1),
                         [rig.source_capacity_ceiling, rig.target_capacity_ceiling], None))
    grid = 16 if cfg["quick"] else 64
    rep = cap.hz_admissibility_probe(cap.harmonic_oscillator_field, cap.plane_grid(grid, 1.0))
    checks.append(_check("oscillator inadmissible", not rep.admissible_consistent, rep.min_detected_period, 1.0))
    wit = cap.displacement_witness(1.0, 0.1)
    checks.append(_check("displacement energy", wit.energy <= math.pi + 0.1, wit.energy, math.pi + 0.1))
    psi = circle_twist(1.3, 0.2)
    ints = [tp for tp in found if abs(tp.shift - round(tp.shift)) < 1e-9]
    err = max((transport_error(pf, psi, tp.x.as_array(), tp.shift) for tp in ints), default=0.0)
    checks.append(_check("conjugation transport", err < 1e-6, err, 1e-6))
    failed = [c["check"] for c in checks if not c["passed"]]
    if failed:
        raise NumericalFailure(f"verify failed: {failed}")
    return checks, {}, None


COMMANDS: Dict[str, Callable] = {
    "flow": cmd_flow,
    "translated-points": cmd_translated_points,
    "spectrum": cmd_spectrum,
    "action": cmd_action,
    "profile": cmd_profile,
    "capacity": cmd_capacity,
    "nonsqueeze": cmd_nonsqueeze,
    "hz-probe": cmd_hz_probe,
    "verify": cmd_verify,
}


# ------------------------------------------------------------ driver

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="contact-spectral", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, params in PARAMS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="flat key = value file")
        sp.add_argument("--record-time", action="store_true", help="record wall time in the report")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key, (typ, default, help_) in {**COMMON, **params}.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None,
                            help=f"{help_} (default {default})")
    return p


def run(argv: Optional[List[str]] = None) -> Tuple[int, Optional[str]]:
    """Returns (exit code, rendered report or None)."""
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1, None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    start = time.perf_counter()
    try:
        config = parse_config(args.config) if args.config else {}
        cfg = resolve(args.command, vars(args), config)
        results, tolerances, table = COMMANDS[args.command](cfg)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1, None
    except (NumericalFailure, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2, None
    report = {
        "command": args.command,
        "config_echo": {"command": args.command, **cfg},
        "results": results,
        "tolerances": tolerances,
        "wall_time": time.perf_counter() - start if args.record_time else None,
        "toolkit_version": __version__,
    }
    if cfg["format"] == "csv":
        report["table"] = table
        text = render_csv(report)
    else:
        text = render_json(report)
    if cfg["output"] == "-":
        sys.stdout.write(text)
    else:
        try:
            with open(cfg["output"], "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {cfg['output']}: {exc}", file=sys.stderr)
            return 1, text
    return 0, text


def write_config(cfg: Dict[str, Any]) -> str:
    """Flat key = value rendering of a resolved config (the echo round-trips through --config)."""
    return "".join(f"{k} = {v}\n" for k, v in cfg.items() if v is not None)


def main(argv: Optional[List[str]] = None) -> int:
    return run(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
