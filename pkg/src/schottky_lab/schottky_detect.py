"""Jacobian criteria as normalized residuals, plus the (U, V) search.

Every residual is pointwise |LHS| / (sum of |individual terms|), so the
numbers are scale free and comparable across period matrices.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import DegenerateSystemError, NearDivisorError, SamplingError
from .theta_core import (
    THETA_FLOOR,
    TruncationSpec,
    as_riemann_matrix,
    half_characteristics,
    lattice_moments,
    lattice_terms,
    level2_moments,
    u_partials,
)

SINGULAR_FLOOR = 1e-6


@dataclass
class ResidualReport:
    criterion: str
    max_residual: float
    mean_residual: float
    normalization: float
    count: int
    params_hash: str
    skipped: int = 0
    tol: float = 1e-12
    per_point: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_point"] = [float(r) for r in self.per_point]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def to_csv(self) -> str:
        """One row per evaluated point: index, normalized residual."""
        lines = ["index,residual"]
        lines += [f"{i},{float(r)!r}" for i, r in enumerate(self.per_point)]
        return "\n".join(lines) + "\n"


def _json_default(obj):
    if isinstance(obj, complex):
        return [repr(obj.real), repr(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [_json_default(complex(v)) for v in obj.ravel()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return repr(obj)


def params_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=complex)).tobytes())
    return h.hexdigest()[:16]


def _report(name, residuals, norms, hash_args, skipped=0, tol=1e-12, extra=None):
    residuals = np.asarray(residuals, dtype=float)
    return ResidualReport(
        criterion=name,
        max_residual=float(residuals.max()) if residuals.size else float("nan"),
        mean_residual=float(residuals.mean()) if residuals.size else float("nan"),
        normalization=float(np.max(norms)) if len(norms) else 0.0,
        count=int(residuals.size),
        params_hash=params_hash(*hash_args),
        skipped=skipped,
        tol=tol,
        per_point=list(residuals),
        extra=extra or {},
    )


def gauge_fix(U, V=None, W=None):
    """Normalize (U, V, W) by the weighted scaling so that ||U|| = 1 and the
    first nonvanishing entry of U is real positive."""
    U = np.asarray(U, dtype=complex)
    nrm = np.linalg.norm(U)
    if nrm < 1e-10:
        raise ValueError("U must be nonzero")
    lead = U[np.argmax(np.abs(U) > 1e-12 * nrm)]
    lam = np.conj(lead) / abs(lead) / nrm
    out = [U * lam]
    if V is not None:
        out.append(np.asarray(V, dtype=complex) * lam**2)
    if W is not None:
        out.append(np.asarray(W, dtype=complex) * lam**3)
    return tuple(out) if len(out) > 1 else out[0]


def project_out(V, U):
    """Remove the complex U-component of V (Galilean gauge V -> V + cU)."""
    U = np.asarray(U, dtype=complex)
    V = np.asarray(V, dtype=complex)
    return V - (np.vdot(U, V) / np.vdot(U, U)) * U


# --------------------------------------------------------------------------
# KP equation  3 u_yy = (4 u_t + 6 u u_x - u_xxx)_x


_KP_ORDERS = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (4, 0, 0), (0, 2, 0), (1, 0, 1), (1, 1, 0)]


def kp_terms(x, y, t, vecs, B, trunc=None):
    """The five KP terms (3u_yy, 4u_xt, 6u_x^2, 6u u_xx, u_xxxx) and u_xx, u_xy."""
    p = u_partials(x, y, t, vecs, B, _KP_ORDERS, trunc)
    terms = np.array([3 * p[(0, 2, 0)], 4 * p[(1, 0, 1)], 6 * p[(1, 0, 0)] ** 2,
                      6 * p[(0, 0, 0)] * p[(2, 0, 0)], p[(4, 0, 0)]])
    return terms, p[(2, 0, 0)], p[(1, 1, 0)]


_KP_SIGNS = np.array([1, -1, -1, -1, 1])


def default_grid(n=10, span=1.0, offset=0.37):
    ax = offset + span * np.linspace(0, 1, n)
    return {"x": ax, "y": 0.8 * ax, "t": 0.6 * ax}


def _grid_points(sample):
    if sample is None:
        sample = default_grid()
    if isinstance(sample, dict):
        xs, ys, ts = (np.asarray(sample[k]) for k in ("x", "y", "t"))
        return [(x, y, t) for x in xs for y in ys for t in ts]
    return list(sample)


def kp_residual(B, vecs, sample=None, trunc=None) -> "ResidualReport":
    """Normalized KP residual on a grid of (x, y, t)."""
    pts = _grid_points(sample)
    res, norms, skipped = [], [], 0
    for x, y, t in pts:
        try:
            terms, _, _ = kp_terms(x, y, t, vecs, B, trunc)
        except NearDivisorError:
            skipped += 1
            continue
        lhs = np.sum(_KP_SIGNS * terms)
        nrm = np.sum(np.abs(terms))
        res.append(abs(lhs) / nrm)
        norms.append(nrm)
    if skipped > 0.5 * len(pts):
        raise SamplingError(f"{skipped} of {len(pts)} KP sample points are near the divisor")
    rm = as_riemann_matrix(B)
    return _report("kp", res, norms, [rm.B, vecs.U, vecs.V, vecs.W, vecs.Z], skipped,
                   (trunc or TruncationSpec()).tol)


def fit_w_correction(B, vecs, sample, trunc=None):
    """Least-squares (beta, delta) so that W + beta U + delta V best satisfies KP."""
    rows, rhs = [], []
    for x, y, t in _grid_points(sample):
        try:
            terms, uxx, uxy = kp_terms(x, y, t, vecs, B, trunc)
        except NearDivisorError:
            continue
        nrm = np.sum(np.abs(terms))
        # the 4 u_xt term becomes 4(u_xt + beta u_xx + delta u_xy)
        rows.append([-4 * uxx / nrm, -4 * uxy / nrm])
        rhs.append(-np.sum(_KP_SIGNS * terms) / nrm)
    A = np.array(rows)
    b = np.array(rhs)
    if np.allclose(vecs.V, 0):
        sol = np.linalg.lstsq(A[:, :1], b, rcond=None)[0]
        return complex(sol[0]), 0j
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    return complex(sol[0]), complex(sol[1])


# --------------------------------------------------------------------------
# Level-two theta constant system (Dubrovin form of KP)

# coefficients (a, b, c) of  a d_U^4 - b d_U d_W + c d_V^2, matched to the
# KP normalization used by kp_residual
DUBROVIN_COEFFS = (1.0, 4.0, 3.0)


def dubrovin_residual(B, vecs, trunc=None, coeffs=DUBROVIN_COEFFS):
    """Solve for the constant c by least squares; report the normalized misfit.

    Returns (c, report).
    """
    rm = as_riemann_matrix(B)
    a, b, cc = coeffs
    U = np.asarray(vecs.U, dtype=complex)
    V = np.asarray(vecs.V, dtype=complex)
    W = np.asarray(vecs.W, dtype=complex)
    exps = [(0, 0, 0), (4, 0, 0), (1, 0, 1), (0, 2, 0)]
    rows = []
    for eps in half_characteristics(rm.g):
        th, u4, uw, v2 = level2_moments(eps, np.zeros(rm.g), rm, [U, V, W], exps, trunc)
        rows.append((th, a * u4, -b * uw, cc * v2))
    rows = np.array(rows)
    th = rows[:, 0]
    if np.abs(th).max() < 1e-14 * max(np.abs(rows).max(), 1e-300):
        raise DegenerateSystemError("all level-two theta constants vanish")
    r = rows[:, 1:].sum(axis=1)
    c = -np.vdot(th, r) / np.vdot(th, th)
    lhs = r + c * th
    norms = np.abs(rows[:, 1:]).sum(axis=1) + np.abs(c * th)
    res = np.abs(lhs) / norms
    rep = _report("dubrovin", res, norms, [rm.B, U, V, W], tol=(trunc or TruncationSpec()).tol,
                  extra={"c": c})
    return complex(c), rep


# --------------------------------------------------------------------------
# Flex (trisecant) system


def flex_terms(B, U, V, A, p, E, trunc=None):
    rm = as_riemann_matrix(B)
    U = np.asarray(U, dtype=complex)
    V = np.asarray(V, dtype=complex)
    A = np.asarray(A, dtype=complex)
    out = []
    exps = [(0, 0), (1, 0), (2, 0), (0, 1)]
    for eps in half_characteristics(rm.g):
        th, du, duu, dv = level2_moments(eps, A / 2, rm, [U, V], exps, trunc)
        out.append((dv, -duu, -2 * p * du, (E - p * p) * th))
    return np.array(out)


def flex_residual(B, U, V, A, p, E, trunc=None) -> "ResidualReport":
    """(d_V - d_U^2 - 2p d_U + E - p^2) Theta[eps,0](A/2) = 0 for every eps."""
    rm = as_riemann_matrix(B)
    terms = flex_terms(rm, U, V, A, p, E, trunc)
    lhs = terms.sum(axis=1)
    norms = np.abs(terms).sum(axis=1)
    res = np.abs(lhs) / norms
    A = np.asarray(A, dtype=complex)
    # A in the lattice makes the system collapse to the constant one
    frac = np.linalg.solve(rm.Y, A.imag)
    red = A - rm.B @ np.round(frac)
    degenerate = bool(np.abs(red.real - np.round(red.real)).max() < 1e-8
                      and np.abs(red.imag).max() < 1e-8)
    return _report("flex", res, norms, [rm.B, U, V, A, [p, E]],
                   tol=(trunc or TruncationSpec()).tol, extra={"degenerate_flex": degenerate})


# --------------------------------------------------------------------------
# Theta divisor sampling


@dataclass
class DivisorSample:
    points: np.ndarray  # (n, g)
    grad_u: np.ndarray  # |d_U theta| / scale at each point
    flagged: np.ndarray  # True where |d_U theta| < SINGULAR_FLOOR * scale
    seed: int
    skipped_lines: int = 0
    theta_rel: np.ndarray | None = None


def _line_values(rm, z0, d, s, trunc):
    res = lattice_moments(z0 + s * d, rm, [d], [(0,), (1,)], trunc=trunc)
    f, df = res.scaled_values
    return f, df, res.scaled_abs_sum


def _line_zero(rm, z0, d, rng_radius, trunc, contour_pts=64):
    """Zero of s -> theta(z0 + s d) nearest the origin, or None."""
    radius = rng_radius
    for _ in range(4):
        s_nodes = radius * np.exp(2j * np.pi * np.arange(contour_pts) / contour_pts)
        logd = []
        for s in s_nodes:
            f, df, _ = _line_values(rm, z0, d, s, trunc)
            logd.append(df / f)
        logd = np.array(logd)
        # (1/2 pi i) contour integral of s^k f'/f ds, trapezoid on the circle
        power = [np.mean(logd * s_nodes ** (k + 1)) for k in range(3)]
        count = int(round(power[0].real))
        if count >= 1:
            break
        radius *= 2
    else:
        return None
    if count == 1:
        s = power[1]
    else:
        # two lowest power sums give a usable starting point
        e1 = power[1]
        e2 = 0.5 * (e1 * e1 - power[2])
        roots = np.roots([1, -e1, e2]) if count == 2 else np.array([e1 / count])
        s = roots[np.argmin(np.abs(roots))]
    for _ in range(50):
        f, df, scale = _line_values(rm, z0, d, s, trunc)
        if abs(f) <= 1e-13 * scale:
            return s
        if df == 0:
            return None
        step = f / df
        s = s - step
        if abs(step) < 1e-15 * max(1.0, abs(s)):
            break
    f, _, scale = _line_values(rm, z0, d, s, trunc)
    return s if abs(f) <= 1e-12 * scale else None


def sample_divisor(B, U, n, seed, trunc=None) -> DivisorSample:
    """n points of the theta divisor on seeded random complex lines."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rm = as_riemann_matrix(B)
    U = np.asarray(U, dtype=complex)
    rng = np.random.default_rng(seed)
    pts, grads, rels = [], [], []
    skipped = 0
    for _ in range(n):
        a, b = rng.random(rm.g), rng.random(rm.g)
        z0 = b + rm.B @ a
        d = rng.normal(size=rm.g) + 1j * rng.normal(size=rm.g)
        d /= np.linalg.norm(d)
        s = _line_zero(rm, z0, d, 0.5, trunc)
        if s is None:
            skipped += 1
            continue
        z = z0 + s * d
        res = lattice_moments(z, rm, [U], [(0,), (1,)], trunc=trunc)
        pts.append(z)
        rels.append(abs(res.scaled_values[0]) / res.scaled_abs_sum)
        grads.append(abs(res.scaled_values[1]) / res.scaled_abs_sum)
    if not pts:
        raise SamplingError(f"no divisor point found on {n} lines")
    grads = np.array(grads)
    return DivisorSample(np.array(pts), grads, grads < SINGULAR_FLOOR, seed, skipped,
                         np.array(rels))


# --------------------------------------------------------------------------
# Divisor equation in d_1 = d_U, d_2 = d_V, valid on theta = 0

_DIV_EXPS = [(1, 0), (2, 0), (3, 0), (4, 0), (0, 1), (1, 1), (0, 2)]


def divisor_terms(B, U, V, z, trunc=None):
    """The six monomials of the divisor equation at z (sum vanishes on a Jacobian)."""
    res = lattice_moments(z, B, [U, V], _DIV_EXPS, trunc=trunc)
    t1, t11, t111, t1111, t2, t12, t22 = res.scaled_values
    return np.array([t2 * t2 * t11, -t11**3, 2 * t11 * t111 * t1, -2 * t2 * t12 * t1,
                     t22 * t1 * t1, -t1111 * t1 * t1])


def divisor_eq_residual(B, U, V, sample: DivisorSample, trunc=None) -> ResidualReport:
    """Normalized residual of the divisor equation over the sample points.

    Inputs are gauge fixed first (unit U, V with its U-component removed), so
    the report is invariant under (lam U, lam^2 V + c lam U).
    """
    rm = as_riemann_matrix(B)
    Ug, Vg = gauge_fix(U, V)
    Vg = project_out(Vg, Ug)
    res, norms, flagged = [], [], 0
    for z in sample.points:
        lm = lattice_moments(z, rm, [Ug], [(1,)], trunc=trunc)
        if abs(lm.scaled_values[0]) < SINGULAR_FLOOR * lm.scaled_abs_sum:
            flagged += 1
            continue
        terms = divisor_terms(rm, Ug, Vg, z, trunc)
        nrm = np.sum(np.abs(terms))
        res.append(abs(terms.sum()) / nrm)
        norms.append(nrm)
    if not res:
        raise SamplingError("every divisor point lies near the singular locus")
    return _report("divisor_eq", res, norms, [rm.B, Ug, Vg, sample.points], flagged,
                   (trunc or TruncationSpec()).tol,
                   extra={"exclusion_rate": flagged / len(sample.points),
                          "skipped_lines": sample.skipped_lines})


# --------------------------------------------------------------------------
# (U, V) search from B alone


@dataclass
class SearchOptions:
    multistarts: int = 8
    maxiter: int = 3000
    n_points: int = 24
    seed: int = 0
    threshold: float = 1e-5
    v_scale: float = 1.0


@dataclass
class SearchResult:
    U: np.ndarray
    V: np.ndarray
    report: ResidualReport
    converged: bool
    history: list = field(default_factory=list)


class _DivisorModel:
    """Precomputed lattice data on divisor points: residuals cost O(points * terms)."""

    def __init__(self, rm, sample, trunc=None, weight=64.0):
        self.rm = rm
        self.data = []
        for z in sample.points:
            terms, v = lattice_terms(z, rm, order=4, weight=weight, trunc=trunc)
            self.data.append((terms, 2j * np.pi * v))

    def unpack(self, x):
        g = self.rm.g
        U = np.concatenate([[x[0]], x[1:g] + 1j * x[g:2 * g - 1]])
        V = x[2 * g - 1:3 * g - 1] + 1j * x[3 * g - 1:4 * g - 1]
        U, V = gauge_fix(U, V)
        return U, project_out(V, U)

    def pack(self, U, V):
        U, V = gauge_fix(U, V)
        V = project_out(V, U)
        return np.concatenate([[U[0].real], U[1:].real, U[1:].imag, V.real, V.imag])

    def residuals(self, U, V):
        out = []
        for terms, w in self.data:
            a = w @ U
            b = w @ V
            d = {e: np.sum(terms * a ** e[0] * b ** e[1]) for e in _DIV_EXPS}
            t1, t11, t111, t1111 = d[(1, 0)], d[(2, 0)], d[(3, 0)], d[(4, 0)]
            t2, t12, t22 = d[(0, 1)], d[(1, 1)], d[(0, 2)]
            mono = np.array([t2 * t2 * t11, -t11**3, 2 * t11 * t111 * t1, -2 * t2 * t12 * t1,
                             t22 * t1 * t1, -t1111 * t1 * t1])
            out.append(mono.sum() / np.sum(np.abs(mono)))
        return np.array(out)

    def objective(self, x):
        r = self.residuals(*self.unpack(x))
        return float(np.mean(np.abs(r) ** 2))

    def lsq(self, x):
        r = self.residuals(*self.unpack(x))
        return np.concatenate([r.real, r.imag])


def search_uv(B, options: SearchOptions | None = None, trunc=None) -> SearchResult:
    """Minimize the divisor-equation residual over gauge-fixed (U, V).

    Nelder-Mead from seeded random starts, then a least-squares polish of the
    best start.  Failure to converge is reported, never read as a proof that
    B is not a Jacobian.
    """
    opts = options or SearchOptions()
    rm = as_riemann_matrix(B)
    g = rm.g
    if g > 4:
        raise ValueError("search_uv supports g <= 4")
    rng = np.random.default_rng(opts.seed)
    sample = sample_divisor(rm, np.eye(g)[0], opts.n_points, int(rng.integers(2**31)), trunc)
    model = _DivisorModel(rm, sample, trunc)
    history = []
    best = None
    for _ in range(opts.multistarts):
        U0 = rng.normal(size=g) + 1j * rng.normal(size=g)
        V0 = opts.v_scale * (rng.normal(size=g) + 1j * rng.normal(size=g))
        x0 = model.pack(U0, V0)
        res = optimize.minimize(model.objective, x0, method="Nelder-Mead",
                                options={"maxiter": opts.maxiter, "maxfev": 2 * opts.maxiter,
                                         "xatol": 1e-10, "fatol": 1e-30, "adaptive": True})
        history.append(float(res.fun))
        if best is None or res.fun < best.fun:
            best = res
    polished = optimize.least_squares(model.lsq, best.x, method="lm", xtol=1e-15, ftol=1e-15,
                                      gtol=1e-15, max_nfev=200 * len(best.x))
    x = polished.x if model.objective(polished.x) <= best.fun else best.x
    U, V = model.unpack(x)
    r = np.abs(model.residuals(U, V))
    report = _report("search_uv", r, [1.0] * len(r), [rm.B, U, V, sample.points],
                     tol=(trunc or TruncationSpec()).tol,
                     extra={"multistart_objectives": history, "sample_seed": sample.seed})
    converged = report.max_residual < opts.threshold
    report.extra["converged"] = converged
    return SearchResult(U, V, report, converged, history)
