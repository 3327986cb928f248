"""Manifest-driven command line front-end.

A manifest is plain text::

    [run]
    command = schottky divisor-eq
    seed = 7

    [input]
    curve = genus2.curve

    [thresholds]
    max_residual = 1e-10

Threshold keys are ``max_<metric>`` or ``min_<metric>``.  The exit status is 0
when every threshold holds, 1 when one fails and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import numbers
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DomainError, ManifestError, SchottkyLabError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
RUN_KEYS = {"command", "seed", "out", "tol", "threads"}
DATA_DIR = Path(__file__).with_name("data")


# --------------------------------------------------------------------------
# value parsers


def _complex(s: str) -> complex:
    try:
        return complex(s.strip().replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ManifestError(f"not a complex number: {s!r}") from exc


def _vector(s: str) -> list:
    return [_complex(v) for v in s.split(",") if v.strip()]


def _real_vector(s: str) -> list:
    out = []
    for v in s.split(","):
        if v.strip():
            try:
                out.append(float(v))
            except ValueError as exc:
                raise ManifestError(f"not a real number: {v!r}") from exc
    return out


def _matrix(s: str) -> list:
    """Rows separated by ';', entries by ','."""
    return [_vector(row) for row in s.split(";") if row.strip()]


def _int(s: str) -> int:
    try:
        return int(s)
    except ValueError as exc:
        raise ManifestError(f"not an integer: {s!r}") from exc


def _float(s: str) -> float:
    try:
        return float(s)
    except ValueError as exc:
        raise ManifestError(f"not a number: {s!r}") from exc


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ManifestError(f"not a boolean: {s!r}")


def _str(s: str) -> str:
    return s.strip()


# --------------------------------------------------------------------------
# manifests


@dataclass
class RunManifest:
    command: str
    inputs: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None
    tol: float | None = None
    threads: int = 0
    base_dir: Path = Path(".")


def parse_manifest(text: str, base_dir: Path = Path(".")) -> RunManifest:
    sections: dict[str, dict] = {"run": {}, "input": {}, "thresholds": {}}
    current = "run"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in sections:
                raise ManifestError(f"line {lineno}: unknown section [{current}]")
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ManifestError(f"line {lineno}: expected key = value")
        key = key.strip()
        if key in sections[current]:
            raise ManifestError(f"line {lineno}: duplicate key {key!r}")
        sections[current][key] = value.strip()
    run = sections["run"]
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise ManifestError(f"unknown [run] keys: {sorted(unknown)}")
    if "command" not in run:
        raise ManifestError("manifest has no command")
    return RunManifest(
        command=" ".join(run["command"].split()),
        inputs=sections["input"],
        thresholds={k: _float(v) for k, v in sections["thresholds"].items()},
        seed=_int(run["seed"]) if "seed" in run else None,
        out=run.get("out"),
        tol=_float(run["tol"]) if "tol" in run else None,
        threads=_int(run.get("threads", "0")),
        base_dir=base_dir,
    )


# --------------------------------------------------------------------------
# command registry


@dataclass
class Outcome:
    metrics: dict
    report: dict
    files: dict = field(default_factory=dict)


@dataclass
class Command:
    handler: object
    inputs: dict  # key -> (parser, default); default REQUIRED means mandatory
    metrics: tuple
    stochastic: bool = False
    help: str = ""


REQUIRED = object()
COMMANDS: dict[str, Command] = {}


def command(name, inputs, metrics, stochastic=False, help=""):
    def deco(fn):
        COMMANDS[name] = Command(fn, inputs, tuple(metrics), stochastic, help)
        return fn
    return deco


@dataclass
class Context:
    seed: int | None
    trunc: object
    base_dir: Path


def _cjson(z):
    z = complex(z)
    return [z.real, z.imag]


def _cvec(v):
    return [_cjson(z) for z in v]


def _trunc(tol):
    from .theta_core import TruncationSpec
    return TruncationSpec(tol) if tol is not None else None


CURVE_INPUTS = {"curve": (_str, None), "branch_points": (_vector, None),
                "quad_order": (_int, None)}


def _load_curve(inp, ctx):
    from .curve_data import HyperellipticCurve, hyperelliptic_periods, read_curve_spec

    if inp.get("curve"):
        path = Path(inp["curve"])
        if not path.is_absolute():
            path = ctx.base_dir / path
        if not path.exists() and (DATA_DIR / inp["curve"]).exists():
            path = DATA_DIR / inp["curve"]
        try:
            curve, quad = read_curve_spec(path.read_text())
        except OSError as exc:
            raise ManifestError(f"cannot read curve spec {path}") from exc
    elif inp.get("branch_points"):
        curve, quad = HyperellipticCurve(tuple(inp["branch_points"])), 200
    else:
        raise ManifestError("give curve = PATH or branch_points = ...")
    if inp.get("quad_order"):
        quad = inp["quad_order"]
    return hyperelliptic_periods(curve, quad)


def _curve_vectors(inp, ctx):
    from .curve_data import kp_vectors

    pd = _load_curve(inp, ctx)
    punct = inp.get("puncture")
    return pd, kp_vectors(pd, puncture=punct, trunc=ctx.trunc)


# ---- theta ---------------------------------------------------------------


def _box_sum(z, B, radius):
    """Plain sum over the cube |m_i| <= radius; an independent cross-check."""
    import itertools

    import numpy as np

    B = np.asarray(B, complex)
    z = np.asarray(z, complex)
    total = 0j
    for m in itertools.product(range(-radius, radius + 1), repeat=len(z)):
        m = np.array(m, float)
        total += np.exp(1j * np.pi * m @ B @ m + 2j * np.pi * m @ z)
    return total


THETA_INPUTS = {"B": (_matrix, REQUIRED), "z": (_vector, None), "expected": (_complex, None),
                "brute_radius": (_int, 0)}


def _theta_common(inp, value, extra_report):
    import numpy as np

    metrics = {}
    report = {"value": _cjson(value), **extra_report}
    if inp.get("expected") is not None:
        metrics["error"] = abs(value - inp["expected"])
    if inp.get("brute_radius"):
        B = np.asarray(inp["B"])
        z = np.asarray(inp.get("z") or [0] * len(B))
        brute = _box_sum(z, B, inp["brute_radius"])
        report["brute_force"] = _cjson(brute)
        metrics["oracle_error"] = abs(value - brute) / max(1.0, abs(brute))
    return Outcome(metrics, report)


@command("theta eval", THETA_INPUTS, ("error", "oracle_error"), help="theta(z | B)")
def _theta_eval(inp, ctx):
    import numpy as np

    from .theta_core import theta
    B = np.asarray(inp["B"])
    z = np.asarray(inp.get("z") or [0] * len(B))
    return _theta_common(inp, theta(z, B, ctx.trunc), {})


@command("theta deriv", {**THETA_INPUTS, "directions": (_matrix, REQUIRED)},
         ("error",), help="directional derivatives of theta")
def _theta_deriv(inp, ctx):
    import numpy as np

    from .theta_core import theta_deriv
    B = np.asarray(inp["B"])
    z = np.asarray(inp.get("z") or [0] * len(B))
    spec = [np.asarray(d) for d in inp["directions"]]
    out = _theta_common({**inp, "brute_radius": 0}, theta_deriv(z, B, spec, ctx.trunc),
                        {"order": len(spec)})
    return out


@command("theta char", {**THETA_INPUTS, "eps": (_real_vector, REQUIRED),
                        "delta": (_real_vector, REQUIRED)},
         ("error",), help="theta with half-integer characteristic")
def _theta_char(inp, ctx):
    import numpy as np

    from .theta_core import Characteristic, theta_char
    B = np.asarray(inp["B"])
    z = np.asarray(inp.get("z") or [0] * len(B))
    ch = Characteristic(tuple(inp["eps"]), tuple(inp["delta"]))
    return _theta_common({**inp, "brute_radius": 0}, theta_char(z, B, ch, ctx.trunc),
                         {"eps": list(ch.eps), "delta": list(ch.delta)})


# ---- curve ---------------------------------------------------------------


@command("curve periods", CURVE_INPUTS, ("error_estimate", "asymmetry", "min_imag_eig"),
         help="period matrix of a hyperelliptic curve")
def _curve_periods(inp, ctx):
    import numpy as np

    from .curve_data import period_data_to_json
    pd = _load_curve(inp, ctx)
    B = pd.B.B
    metrics = {"error_estimate": pd.error_estimate,
               "asymmetry": float(np.abs(B - B.T).max()),
               "min_imag_eig": float(np.linalg.eigvalsh(B.imag).min())}
    report = {"genus": pd.genus, "B": [_cvec(r) for r in B], **metrics}
    return Outcome(metrics, report, {"periods.json": period_data_to_json(pd)})


@command("curve vectors", {**CURVE_INPUTS, "puncture": (_complex, None)},
         ("calibration_residual",), help="KP vectors U, V, W at a puncture")
def _curve_vectors_cmd(inp, ctx):
    from .curve_data import period_data_to_json
    pd, vecs = _curve_vectors(inp, ctx)
    cal = float(vecs.meta.get("calibration_residual", float("nan")))
    report = {"U": _cvec(vecs.U), "V": _cvec(vecs.V), "W": _cvec(vecs.W), "Z": _cvec(vecs.Z),
              "calibration_residual": cal}
    return Outcome({"calibration_residual": cal}, report,
                   {"vectors.json": period_data_to_json(pd, vecs)})


FLEX_INPUTS = {**CURVE_INPUTS, "point": (_complex, REQUIRED), "waypoints": (_vector, None)}


def _flex(inp, ctx):
    from .curve_data import CurvePoint, flex_data, kp_vectors
    from .schottky_detect import flex_residual
    pd = _load_curve(inp, ctx)
    vecs = kp_vectors(pd, trunc=ctx.trunc)
    P = CurvePoint(inp["point"], tuple(inp.get("waypoints") or ()))
    A, p, E = flex_data(pd, P, vecs)
    rep = flex_residual(pd.B, vecs.U, vecs.V, A, p, E, ctx.trunc)
    report = {"A": _cvec(A), "p": _cjson(p), "E": _cjson(E), "residual": rep.to_dict()}
    return Outcome({"residual": rep.max_residual}, report)


command("curve flex", FLEX_INPUTS, ("residual",), help="Abel image A, p and E of a point")(_flex)
command("schottky flex", FLEX_INPUTS, ("residual",), help="flex system residual")(_flex)


# ---- cm ------------------------------------------------------------------

CM_INPUTS = {"positions": (_vector, REQUIRED), "momenta": (_vector, REQUIRED),
             "kind": (_str, "rational"), "lattice": (_vector, None),
             "y_end": (_complex, 1.0), "tol": (_float, 1e-12), "rate_shift": (_vector, None)}


def _cm_state(inp):
    from .cm_dynamics import CMState
    lat = tuple(inp["lattice"]) if inp.get("lattice") else None
    return CMState(0.0, inp["positions"], inp["momenta"], inp["kind"], lat)


@command("cm simulate", CM_INPUTS, ("energy_drift",), help="integrate the particle system")
def _cm_simulate(inp, ctx):
    import numpy as np

    from .cm_dynamics import integrate
    traj = integrate(_cm_state(inp), inp["y_end"], tol=inp["tol"],
                     rate_shift=inp.get("rate_shift"))
    H = traj.hamiltonian()
    drift = float(np.abs(H - H[0]).max() / max(1.0, abs(H[0])))
    x_end = traj.positions[-1]
    report = {"steps": len(traj.ys), "energy_drift": drift, "H0": _cjson(H[0]),
              "final_positions": _cvec(x_end)}
    return Outcome({"energy_drift": drift}, report, {"trajectory.csv": traj.to_csv()})


TRACK_INPUTS = {**CURVE_INPUTS, "puncture": (_complex, None), "center": (_complex, 0j),
                "radius": (_float, 1.0), "y_end": (_complex, 0.5), "samples": (_int, 21)}


def _theta_tau(inp, ctx):
    from .cm_dynamics import ThetaTau
    pd, vecs = _curve_vectors(inp, ctx)
    return ThetaTau(pd.B, vecs.U, vecs.V, vecs.Z, ctx.trunc)


@command("cm track", TRACK_INPUTS, ("residue", "eq_motion", "zeros"),
         help="track theta zeros in y and check the pole conditions")
def _cm_track(inp, ctx):
    import numpy as np

    from .cm_dynamics import find_zeros, residue_condition, track_zeros
    tau = _theta_tau(inp, ctx)
    seeds = find_zeros(tau, 0.0, inp["center"], inp["radius"])
    if not len(seeds):
        raise ManifestError("no zeros in the requested disc; move center or enlarge radius")
    tr = track_zeros(tau, 0.0, inp["y_end"], seeds, n_samples=inp["samples"])
    worst_r = worst_m = 0.0
    per_sample = []
    for y, xs in zip(tr.ys, tr.positions):
        rep = residue_condition(tau, y, xs)
        r, m = float(np.abs(rep.residues).max()), float(np.abs(rep.eq_motion).max())
        worst_r, worst_m = max(worst_r, r), max(worst_m, m)
        per_sample.append({"y": _cjson(y), "residue": r, "eq_motion": m})
    lines = ["y_re,y_im," + ",".join(f"x{i}_re,x{i}_im" for i in range(len(seeds)))]
    for y, xs in zip(tr.ys, tr.positions):
        vals = [y.real, y.imag] + [c for x in xs for c in (x.real, x.imag)]
        lines.append(",".join(repr(float(v)) for v in vals))
    metrics = {"residue": worst_r, "eq_motion": worst_m, "zeros": len(seeds)}
    report = {"zeros": _cvec(seeds), "samples": per_sample, **metrics}
    return Outcome(metrics, report, {"zeros.csv": "\n".join(lines) + "\n"})


@command("cm residue", {**CM_INPUTS, "y": (_complex, 0.25)}, ("residue", "eq_motion"),
         help="pole conditions of a finite product tau along a trajectory")
def _cm_residue(inp, ctx):
    import numpy as np

    from .cm_dynamics import ProductTau, integrate, residue_condition
    from .cm_dynamics import CM_TIME_SCALE
    y = inp["y"]
    traj = integrate(_cm_state(inp), CM_TIME_SCALE * y, tol=inp["tol"],
                     rate_shift=inp.get("rate_shift"))
    tau = ProductTau(traj)
    zeros = tau.particles(y)[0]
    rep = residue_condition(tau, y, zeros)
    metrics = {"residue": float(np.abs(rep.residues).max()),
               "eq_motion": float(np.abs(rep.eq_motion).max())}
    return Outcome(metrics, {**rep.to_dict(), **metrics})


# ---- waves ---------------------------------------------------------------

WAVE_INPUTS = {"positions": (_vector, REQUIRED), "momenta": (_vector, REQUIRED),
               "steps": (_int, 6), "rate_shift": (_vector, None), "strict": (_bool, False)}


@command("waves recurse", WAVE_INPUTS, ("obstruction", "first_obstruction"),
         help="wave-series recursion with residue obstructions")
def _waves_recurse(inp, ctx):
    import numpy as np

    from .cm_dynamics import CMState
    from .formal_waves.waves import residue_scale, step_rhs, wave_series
    st = CMState(0.0, inp["positions"], inp["momenta"])
    ws = wave_series(st, inp["steps"], strict=inp["strict"], rate_shift=inp.get("rate_shift"))
    rel = []
    for s, r in enumerate(ws.residues):
        sc = residue_scale(step_rhs(ws.xi[s], ws.u))
        rel.append(float((np.abs(r[:, 0]) / sc).max(initial=0.0)))
    first = next((s for s, v in enumerate(rel) if v > 1e-12), -1)
    metrics = {"obstruction": max(rel, default=0.0), "first_obstruction": first}
    report = {"relative_obstructions": rel, **metrics}
    return Outcome(metrics, report, {"series.json": ws.dump()})


@command("waves psido-check", {**WAVE_INPUTS, "m_max": (_int, 4), "random_trials": (_int, 5)},
         ("phi_inverse", "pairing", "lax", "conjugation", "dickey", "associativity",
          "pole_order"), stochastic=True, help="pseudo-differential identities")
def _waves_psido(inp, ctx):
    import numpy as np

    from .cm_dynamics import CMState
    from .formal_waves.psido import PsiDO, max_coefficient_difference, random_psido
    from .formal_waves.waves import (conjugation_residual, dickey_sides, f_residues,
                                     lax_commutator_residual, lax_operator, pairing_residual,
                                     wave_operator, wave_series)
    st = CMState(0.0, inp["positions"], inp["momenta"])
    m_max = inp["m_max"]
    ws = wave_series(st, max(inp["steps"], m_max + 2), strict=False,
                     rate_shift=inp.get("rate_shift"))
    phi = wave_operator(ws)
    one = PsiDO.identity(phi.jet_length, phi.depth)
    L = lax_operator(phi)
    rng = np.random.default_rng(ctx.seed)
    dickey = assoc = 0.0
    for _ in range(inp["random_trials"]):
        D1, D2 = random_psido(rng, 1, 6, depth=8), random_psido(rng, 2, 6, depth=8)
        a, b = dickey_sides(D1, D2)
        dickey = max(dickey, (a - b).chop(0.0).max_abs() / max(1.0, b.max_abs()))
        A, B, C = (random_psido(rng, o, 3, depth=8) for o in (1, 0, -1))
        lhs = (A * B) * C
        assoc = max(assoc, max_coefficient_difference(lhs, A * (B * C)) / max(1.0, lhs.max_abs()))
    metrics = {
        "phi_inverse": (phi * phi.inverse() - one).max_abs(),
        "pairing": pairing_residual(ws, m_max),
        "lax": max(lax_commutator_residual(ws, m) for m in range(1, m_max + 1)),
        "conjugation": conjugation_residual(ws, 0.5 + 0.25j, m_max),
        "dickey": dickey,
        "associativity": assoc,
        "pole_order": max(F.pole_order() for F in f_residues(L, m_max)),
    }
    return Outcome(metrics, {"depth": phi.depth, **metrics}, {"lax.json": L.dump()})


# ---- schottky ------------------------------------------------------------

UV_INPUTS = {**CURVE_INPUTS, "puncture": (_complex, None), "B": (_matrix, None),
             "U": (_vector, None), "V": (_vector, None), "W": (_vector, None),
             "Z": (_vector, None)}


def _b_and_vectors(inp, ctx):
    import numpy as np

    from .curve_data import KPVectors
    if inp.get("B") is not None:
        if inp.get("U") is None:
            raise ManifestError("with B given directly, U (and V, W) are required")
        B = np.asarray(inp["B"])
        return B, KPVectors(inp["U"], inp.get("V"), inp.get("W"), inp.get("Z"))
    pd, vecs = _curve_vectors(inp, ctx)
    return pd.B, vecs


@command("schottky kp", {**UV_INPUTS, "grid": (_int, 4)}, ("residual", "skipped"),
         help="KP residual of theta along the vectors")
def _schottky_kp(inp, ctx):
    from .schottky_detect import default_grid, kp_residual
    B, vecs = _b_and_vectors(inp, ctx)
    rep = kp_residual(B, vecs, default_grid(inp["grid"]), ctx.trunc)
    return Outcome({"residual": rep.max_residual, "skipped": rep.skipped}, rep.to_dict(),
                   {"kp.csv": rep.to_csv()})


@command("schottky dubrovin", UV_INPUTS, ("residual",),
         help="level-two theta constant system")
def _schottky_dubrovin(inp, ctx):
    from .schottky_detect import dubrovin_residual
    B, vecs = _b_and_vectors(inp, ctx)
    c, rep = dubrovin_residual(B, vecs, ctx.trunc)
    return Outcome({"residual": rep.max_residual}, {**rep.to_dict(), "c": _cjson(c)})


@command("schottky divisor-eq", {**UV_INPUTS, "n_points": (_int, 100)},
         ("residual", "exclusion_rate"), stochastic=True,
         help="divisor equation on sampled theta-divisor points")
def _schottky_divisor(inp, ctx):
    from .schottky_detect import divisor_eq_residual, sample_divisor
    B, vecs = _b_and_vectors(inp, ctx)
    sample = sample_divisor(B, vecs.U, inp["n_points"], ctx.seed, ctx.trunc)
    rep = divisor_eq_residual(B, vecs.U, vecs.V, sample, ctx.trunc)
    metrics = {"residual": rep.max_residual, "exclusion_rate": rep.extra["exclusion_rate"]}
    return Outcome(metrics, rep.to_dict(), {"divisor_eq.csv": rep.to_csv()})


@command("schottky search", {**CURVE_INPUTS, "B": (_matrix, None), "multistarts": (_int, 8),
                             "maxiter": (_int, 3000), "n_points": (_int, 24),
                             "threshold": (_float, 1e-5)},
         ("residual", "recovery_error", "converged"), stochastic=True,
         help="search for (U, V) from B alone")
def _schottky_search(inp, ctx):
    import numpy as np

    from .curve_data import reference_uv
    from .schottky_detect import SearchOptions, search_uv
    pd = None
    if inp.get("B") is not None:
        B = np.asarray(inp["B"])
    else:
        pd = _load_curve(inp, ctx)
        B = pd.B
    opts = SearchOptions(inp["multistarts"], inp["maxiter"], inp["n_points"], ctx.seed,
                         inp["threshold"])
    res = search_uv(B, opts, ctx.trunc)
    metrics = {"residual": res.report.max_residual, "converged": int(res.converged)}
    report = {"U": _cvec(res.U), "V": _cvec(res.V), "report": res.report.to_dict()}
    if pd is not None and pd.genus == 2 and res.converged:
        Ur, Vr = reference_uv(pd, res.U)
        err = max(np.abs(res.U - Ur).max(),
                  min(np.abs(res.V - Vr).max(), np.abs(res.V + Vr).max()))
        metrics["recovery_error"] = float(err)
    report.update(metrics)
    return Outcome(metrics, report)


# --------------------------------------------------------------------------
# runner


def _parse_inputs(cmd: Command, raw: dict) -> dict:
    unknown = set(raw) - set(cmd.inputs)
    if unknown:
        raise ManifestError(f"unknown [input] keys: {sorted(unknown)}")
    out = {}
    for key, (parser, default) in cmd.inputs.items():
        if key in raw:
            out[key] = parser(raw[key])
        elif default is REQUIRED:
            raise ManifestError(f"missing required input {key!r}")
        else:
            out[key] = default
    return out


def _check_thresholds(cmd: Command, thresholds: dict, metrics: dict) -> list:
    failures = []
    for key, limit in sorted(thresholds.items()):
        kind, _, name = key.partition("_")
        if kind not in ("max", "min") or name not in cmd.metrics:
            raise ManifestError(f"unknown threshold {key!r}; metrics: {list(cmd.metrics)}")
        if name not in metrics:
            failures.append(f"{key}: metric not produced")
            continue
        v = metrics[name]
        ok = v <= limit if kind == "max" else v >= limit
        if not ok or v != v:
            failures.append(f"{key}: {v:.3e} vs {limit:.3e}")
    return failures


def _set_threads(n: int):
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def run(manifest: RunManifest, out_dir: Path | None = None, stream=None) -> int:
    """Execute a manifest; returns the exit status."""
    stream = stream or sys.stdout
    cmd = COMMANDS.get(manifest.command)
    if cmd is None:
        raise ManifestError(f"unknown command {manifest.command!r}")
    if cmd.stochastic and manifest.seed is None:
        raise ManifestError(f"{manifest.command} is stochastic and needs a seed")
    inputs = _parse_inputs(cmd, manifest.inputs)
    for key in manifest.thresholds:
        kind, _, name = key.partition("_")
        if kind not in ("max", "min") or name not in cmd.metrics:
            raise ManifestError(f"unknown threshold {key!r}; metrics: {list(cmd.metrics)}")
    ctx = Context(manifest.seed, _trunc(manifest.tol), manifest.base_dir)
    outcome = cmd.handler(inputs, ctx)
    outcome.metrics = {k: int(v) if isinstance(v, numbers.Integral) else float(v)
                       for k, v in outcome.metrics.items()}
    failures = _check_thresholds(cmd, manifest.thresholds, outcome.metrics)
    summary = {"command": manifest.command, "seed": manifest.seed, "metrics": outcome.metrics,
               "thresholds": manifest.thresholds, "passed": not failures,
               "failures": failures, "report": outcome.report}
    text = json.dumps(summary, indent=2, sort_keys=True, default=_json_default)
    out = out_dir or (Path(manifest.out) if manifest.out else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text + "\n")
        for name, body in outcome.files.items():
            (out / name).write_text(body)
    for name, value in outcome.metrics.items():
        print(f"{name} = {value!r}", file=stream)
    if "value" in outcome.report:
        print(f"value = {complex(*outcome.report['value'])!r}", file=stream)
    for f in failures:
        print(f"FAIL {manifest.command} {f}", file=stream)
    print("PASS" if not failures else "FAIL", file=stream)
    return EXIT_OK if not failures else EXIT_FAIL


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return repr(obj)


def build_parser() -> argparse.ArgumentParser:
    groups: dict[str, list] = {}
    for name in COMMANDS:
        g, sub = name.split()
        groups.setdefault(g, []).append(sub)
    p = argparse.ArgumentParser(prog="schottky-lab", description=__doc__.splitlines()[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog="commands:\n" + "\n".join(
                                    f"  {n:22s} {c.help}" for n, c in COMMANDS.items()))
    p.add_argument("group", nargs="?", choices=sorted(groups))
    p.add_argument("sub", nargs="?")
    p.add_argument("--manifest", type=Path, help="run manifest (key = value text)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, help="lattice truncation tolerance")
    p.add_argument("--out", type=Path, help="directory for report files")
    p.add_argument("--threads", type=int, default=None, help="0 = library default")
    p.add_argument("--list", action="store_true", help="list commands and bundled manifests")
    return p


def bundled_manifests() -> list:
    return sorted(DATA_DIR.glob("*.manifest"))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.list:
        for name, c in COMMANDS.items():
            print(f"{name:22s} {c.help}")
        for m in bundled_manifests():
            print(f"example: {m}")
        return EXIT_OK
    try:
        if args.manifest is None:
            raise ManifestError("--manifest is required")
        try:
            text = args.manifest.read_text()
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {args.manifest}") from exc
        if not text.strip():
            raise ManifestError("empty manifest")
        manifest = parse_manifest(text, args.manifest.parent)
        if args.group:
            named = f"{args.group} {args.sub or ''}".strip()
            if named != manifest.command:
                raise ManifestError(f"command line names {named!r}, manifest {manifest.command!r}")
        if args.seed is not None:
            manifest.seed = args.seed
        if args.tol is not None:
            manifest.tol = args.tol
        if args.threads is not None:
            manifest.threads = args.threads
        _set_threads(manifest.threads)
        return run(manifest, args.out)
    except (ManifestError, DomainError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchottkyLabError as exc:
        print(f"FAIL {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
