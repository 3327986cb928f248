"""Riemann theta functions with certified lattice truncation.

All sums run over the (shifted) lattice ``m + eps`` inside an ellipsoid
centred at the Gaussian peak ``c = -Im(B)^{-1} Im(z)``.  Errors are absolute
*after recentering*, i.e. relative to ``exp(pi c.Y.c)``, the size of the
largest term.  Derivatives are taken term by term.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import (
    DomainError,
    NearDivisorError,
    PoleError,
    TruncationInfeasibleError,
    UnsupportedOrderError,
)

DEFAULT_TOL = 1e-12
MAX_ORDER = 8
MAX_GENUS = 6
RADIUS_CAP = 40.0  # in units of lattice steps along the softest direction
THETA_FLOOR = 1e-10


class RiemannMatrix:
    """Symmetric g x g complex matrix with positive definite imaginary part."""

    def __init__(self, entries):
        B = np.atleast_2d(np.asarray(entries, dtype=complex))
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DomainError(f"Riemann matrix must be square, got shape {B.shape}")
        g = B.shape[0]
        if g > MAX_GENUS:
            raise DomainError(f"genus {g} > {MAX_GENUS} is not supported")
        scale = max(np.abs(B).max(), 1e-300)
        if np.abs(B - B.T).max() > 1e-12 * scale:
            raise DomainError("Riemann matrix is not symmetric")
        B = 0.5 * (B + B.T)
        Y = B.imag.copy()
        try:
            chol = np.linalg.cholesky(Y)
        except np.linalg.LinAlgError:
            raise DomainError("Im(B) is not positive definite") from None
        if np.any(np.diag(chol) <= 0):
            raise DomainError("Im(B) is not positive definite")
        self.B = B
        self.g = g
        self.Y = Y
        # q(x) = x.Y.x = |T x|^2 with T upper triangular
        self.T = chol.T
        self.Yinv = np.linalg.inv(Y)
        self.lam_min = float(np.linalg.eigvalsh(Y)[0])

    def __repr__(self):
        return f"RiemannMatrix({self.B.tolist()!r})"

    def scaled(self, factor: float) -> "RiemannMatrix":
        return RiemannMatrix(self.B * factor)


def as_riemann_matrix(B) -> RiemannMatrix:
    return B if isinstance(B, RiemannMatrix) else RiemannMatrix(B)


@dataclass(frozen=True)
class Characteristic:
    eps: tuple
    delta: tuple

    def __post_init__(self):
        for v in (*self.eps, *self.delta):
            if v not in (0, 0.5):
                raise DomainError(f"characteristic entries must be 0 or 1/2, got {v}")
        if len(self.eps) != len(self.delta):
            raise DomainError("eps and delta lengths differ")

    @classmethod
    def zero(cls, g: int) -> "Characteristic":
        return cls((0,) * g, (0,) * g)


def half_characteristics(g: int) -> list[tuple]:
    """All eps in {0, 1/2}^g, in binary order."""
    out = []
    for bits in range(2**g):
        out.append(tuple(0.5 if (bits >> (g - 1 - k)) & 1 else 0 for k in range(g)))
    return out


@dataclass(frozen=True)
class TruncationSpec:
    tol: float = DEFAULT_TOL
    radius_cap: float = RADIUS_CAP

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("truncation tol must be positive")


@dataclass
class ThetaResult:
    """Values plus the truncation metadata that produced them.

    The sums are stored divided by exp(log_scale); ratios and floor tests
    should use the ``scaled_*`` fields, which never overflow.
    """

    scaled_values: np.ndarray
    radius: float
    npoints: int
    tol: float
    log_scale: float = 0.0
    scaled_abs_sum: float = field(default=0.0)

    @property
    def values(self) -> np.ndarray:
        return self.scaled_values * np.exp(self.log_scale)

    @property
    def abs_sum(self) -> float:
        return float(self.scaled_abs_sum * np.exp(self.log_scale))


# --------------------------------------------------------------------------
# truncation radius


def _tail_bound(R, g, lam, order, weight, cnorm):
    """Upper bound for the sum of |term| over points with Y-norm > R.

    Terms are exp(-pi r^2) times the polynomial derivative weight
    weight * (r/sqrt(lam) + cnorm)^order; the number of shifted lattice
    points in the Y-ball of radius r is at most (2 r/sqrt(lam) + 1)^g.
    """
    s = math.sqrt(lam)

    def integrand(r):
        return ((2 * r / s + 1) ** g * 2 * math.pi * r * weight
                * (r / s + cnorm) ** order * math.exp(-math.pi * r * r))

    val, _ = integrate.quad(integrand, R, np.inf, limit=200)
    return val


@functools.lru_cache(maxsize=4096)
def _radius_cached(g, lam, order, weight, cnorm, tol, cap):
    s = math.sqrt(lam)
    # the bound needs the weighted Gaussian to be decreasing beyond R
    r_lo = 0.5
    if order:
        r_lo = max(r_lo, math.sqrt(order / (2 * math.pi)) + 1.0)
    if _tail_bound(r_lo, g, lam, order, weight, cnorm) <= tol:
        return r_lo
    r_hi = r_lo
    while _tail_bound(r_hi, g, lam, order, weight, cnorm) > tol:
        r_hi *= 1.5
        if r_hi / s > cap:
            raise TruncationInfeasibleError(
                f"tol {tol:g} needs radius > cap {cap} (lambda_min={lam:g})")
    for _ in range(40):
        mid = 0.5 * (r_lo + r_hi)
        if _tail_bound(mid, g, lam, order, weight, cnorm) > tol:
            r_lo = mid
        else:
            r_hi = mid
        if r_hi - r_lo < 1e-3:
            break
    return r_hi


def truncation_radius(rm: RiemannMatrix, tol: float, order: int = 0,
                      weight: float = 1.0, cnorm: float = 0.0,
                      cap: float = RADIUS_CAP) -> float:
    """Ellipsoid radius (in the Im(B) metric) certifying the tail bound <= tol."""
    # round parameters conservatively so the cache stays small
    lam = float(np.format_float_positional(rm.lam_min * (1 - 1e-9), 6, trim="-"))
    lam = min(lam, rm.lam_min)
    w = 1.0 if order == 0 else float(2.0 ** math.ceil(math.log2(max(weight, 1e-300))))
    cn = math.ceil(cnorm * 2) / 2
    return _radius_cached(rm.g, lam, order, w, cn, float(tol), float(cap))


# --------------------------------------------------------------------------
# lattice enumeration


@functools.lru_cache(maxsize=256)
def _box_offsets(widths: tuple) -> np.ndarray:
    """Integer offsets k in the box with first nonzero entry positive."""
    axes = [np.arange(-w, w + 1) for w in widths]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(widths))
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    lead = grid[np.arange(len(grid)), first]
    keep = nz.any(axis=1) & (lead > 0)
    return grid[keep].astype(float)


def _enumerate(rm: RiemannMatrix, center: np.ndarray, eps: np.ndarray, R: float):
    """Return (v0, v_plus, v_minus): the symmetric point set around n + eps.

    Pairs v_plus[i], v_minus[i] = n + eps +- k.  Membership is symmetric in
    k so that negating z reproduces the same pairs.
    """
    n = np.round(center - eps)
    base = n + eps
    widths = tuple(int(math.ceil(R * math.sqrt(rm.Yinv[i, i]) + 0.5)) for i in range(rm.g))
    K = _box_offsets(widths)
    d0 = base - center
    qp = np.sum(((d0 + K) @ rm.T.T) ** 2, axis=1)
    qm = np.sum(((d0 - K) @ rm.T.T) ** 2, axis=1)
    K = K[np.minimum(qp, qm) <= R * R]
    return base, base + K, base - K


def _terms(rm, zt, v, shift=0.0):
    """exp(pi i v.B.v + 2 pi i zt.v - shift) for rows v."""
    q = np.einsum("ij,jk,ik->i", v, rm.B, v) if v.ndim == 2 else v @ rm.B @ v
    zv = v @ zt
    return np.exp(1j * np.pi * (q + 2 * zv) - shift)


def lattice_moments(z, B, directions: Sequence = (), exponents: Sequence[Sequence[int]] = ((),),
                    char: Characteristic | None = None,
                    trunc: TruncationSpec | None = None, recenter: bool = False) -> ThetaResult:
    """Sum of theta terms weighted by prod_j (2 pi i d_j . v)^e_j for each exponent tuple.

    With ``recenter`` the weights use v - c (c the lattice centre) instead,
    which is theta times exp(linear in z): all log-derivatives of order >= 2
    are unchanged and the moments no longer cancel for large Im z.

    This is the common engine behind ``theta``, ``theta_deriv`` and the
    directional-moment computations in the detectors.
    """
    rm = as_riemann_matrix(B)
    trunc = trunc or TruncationSpec()
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.shape[0] != rm.g:
        raise DomainError(f"argument has length {z.shape[0]}, genus is {rm.g}")
    dirs = [np.asarray(d, dtype=complex).reshape(-1) for d in directions]
    exps = [tuple(e) + (0,) * (len(dirs) - len(e)) for e in exponents]
    order = max((sum(e) for e in exps), default=0)
    if order > MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order {order} > {MAX_ORDER}")
    if char is None:
        eps = np.zeros(rm.g)
        delta = np.zeros(rm.g)
    else:
        eps = np.asarray(char.eps, dtype=float)
        delta = np.asarray(char.delta, dtype=float)
    zt = z + delta
    center = -rm.Yinv @ z.imag
    weight = 1.0
    if order:
        norms = [np.linalg.norm(d) for d in dirs]
        weight = max(math.prod(2 * math.pi * nrm ** k for nrm, k in zip(norms, e)) for e in exps)
    cnorm = float(np.linalg.norm(center)) + 0.5 * math.sqrt(rm.g)
    R = truncation_radius(rm, trunc.tol, order, weight, cnorm, trunc.radius_cap)
    v0, vp, vm = _enumerate(rm, center, eps, R)
    log_scale = math.pi * float(center @ rm.Y @ center)

    # terms are kept relative to exp(log_scale) so large Im z cannot overflow
    t0 = _terms(rm, zt, v0, log_scale)
    tp = _terms(rm, zt, vp, log_scale)
    tm = _terms(rm, zt, vm, log_scale)
    out = np.empty(len(exps), dtype=complex)
    if dirs:
        origin = center if recenter else np.zeros(rm.g)
        f0 = [2j * np.pi * ((v0 - origin) @ d) for d in dirs]
        fp = [2j * np.pi * ((vp - origin) @ d) for d in dirs]
        fm = [2j * np.pi * ((vm - origin) @ d) for d in dirs]
    for idx, e in enumerate(exps):
        w0, wp, wm = t0, tp, tm
        for j, k in enumerate(e):
            if k:
                w0 = w0 * f0[j] ** k
                wp = wp * fp[j] ** k
                wm = wm * fm[j] ** k
        out[idx] = w0 + np.sum(wp + wm)
    abs_sum = float(abs(t0) + np.sum(np.abs(tp) + np.abs(tm)))
    return ThetaResult(out, R, 1 + 2 * len(vp), trunc.tol, log_scale, abs_sum)



def lattice_terms(z, B, order: int = 0, weight: float = 1.0,
                  trunc: TruncationSpec | None = None):
    """Scaled theta terms and lattice vectors at z, truncated for derivatives
    of the given order along directions of total norm product ``weight``.

    Returns (terms, vectors); any directional derivative is then
    sum(terms * prod_j (2 pi i vectors @ d_j)) times exp(log_scale).
    """
    rm = as_riemann_matrix(B)
    trunc = trunc or TruncationSpec()
    z = np.asarray(z, dtype=complex).reshape(-1)
    center = -rm.Yinv @ z.imag
    cnorm = float(np.linalg.norm(center)) + 0.5 * math.sqrt(rm.g)
    R = truncation_radius(rm, trunc.tol, order, weight, cnorm, trunc.radius_cap)
    v0, vp, vm = _enumerate(rm, center, np.zeros(rm.g), R)
    v = np.vstack([v0[None, :], vp, vm])
    log_scale = math.pi * float(center @ rm.Y @ center)
    return _terms(rm, z, v, log_scale), v


# --------------------------------------------------------------------------
# public operations


def theta(z, B, trunc: TruncationSpec | None = None) -> complex:
    """Riemann theta function theta(z | B)."""
    return complex(lattice_moments(z, B, trunc=trunc).values[0])


def theta_scale(z, B, trunc: TruncationSpec | None = None) -> float:
    """Sum of |terms| of the theta series at z (natural magnitude scale)."""
    return lattice_moments(z, B, trunc=trunc).abs_sum


def _spec_to_moment(spec):
    dirs = [np.asarray(d, dtype=complex) for d in spec]
    if len(dirs) > MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order {len(dirs)} > {MAX_ORDER}")
    return dirs, [(1,) * len(dirs)]


def theta_deriv(z, B, spec: Sequence = (), trunc: TruncationSpec | None = None,
                char: Characteristic | None = None) -> complex:
    """Directional derivative d_{d1} ... d_{dn} theta(z|B), term by term."""
    dirs, exps = _spec_to_moment(spec)
    return complex(lattice_moments(z, B, dirs, exps, char=char, trunc=trunc).values[0])


def theta_char(z, B, char: Characteristic, trunc: TruncationSpec | None = None) -> complex:
    """theta[eps, delta](z|B) = sum_m exp(pi i B(m+eps).(m+eps) + 2 pi i (z+delta).(m+eps))."""
    return complex(lattice_moments(z, B, char=char, trunc=trunc).values[0])


def level2_theta(eps, z, B, spec: Sequence = (), trunc: TruncationSpec | None = None) -> complex:
    """Theta[eps,0](z) = theta[eps,0](2z | 2B), optionally differentiated.

    Each derivative order contributes the chain-rule factor 2.
    """
    rm = as_riemann_matrix(B)
    z = np.asarray(z, dtype=complex).reshape(-1)
    char = Characteristic(tuple(eps), (0,) * rm.g)
    val = theta_deriv(2 * z, rm.scaled(2.0), spec, trunc=trunc, char=char)
    return (2.0 ** len(spec)) * val


def level2_moments(eps, z, B, directions, exponents, trunc=None) -> np.ndarray:
    """Several derivatives of Theta[eps,0] at z from one lattice pass."""
    rm = as_riemann_matrix(B)
    z = np.asarray(z, dtype=complex).reshape(-1)
    char = Characteristic(tuple(eps), (0,) * rm.g)
    res = lattice_moments(2 * z, rm.scaled(2.0), directions, exponents, char=char, trunc=trunc)
    factors = np.array([2.0 ** sum(e) for e in exponents])
    return res.values * factors


# --------------------------------------------------------------------------
# Weierstrass functions by lattice row sums


def _check_lattice(omega1, omega2):
    omega1 = complex(omega1)
    omega2 = complex(omega2)
    if not (omega2 / omega1).imag > 0:
        raise DomainError("need Im(omega2/omega1) > 0")
    return omega1, omega2


def _row_count(omega1, omega2, tol=1e-17):
    # row m contributes ~ |q|^m with q = exp(i pi tau)
    tau = omega2 / omega1
    decay = math.pi * tau.imag
    return int(math.ceil(-math.log(tol) / (2 * decay))) + 3


def weierstrass_p(w, lattice) -> tuple[complex, complex]:
    """Weierstrass p and p' for the lattice with periods (2 omega1, 2 omega2).

    Uses the absolutely convergent Eisenstein-ordered sum: inner sums over
    2 omega1 Z in closed form (csc^2), outer rows summed to machine precision.
    """
    two_w1, two_w2 = lattice
    omega1, omega2 = _check_lattice(complex(two_w1) / 2, complex(two_w2) / 2)
    w = complex(w)
    tau = omega2 / omega1
    # reduce w into the fundamental parallelogram (periodicity is exact)
    s = w / (2 * omega1)
    b = round(s.imag / tau.imag)
    s -= b * tau
    s -= round(s.real)
    nearest = min(abs(s - a - bb * tau) for a in (-1, 0, 1) for bb in (-1, 0, 1))
    if nearest * abs(2 * omega1) < 1e-12:
        raise PoleError(f"w={w} is within 1e-12 of a lattice point")
    a = math.pi  # work in units of 2 omega1: lattice Z + tau Z
    M = _row_count(omega1, omega2)
    p = a**2 * (1 / np.sin(a * s) ** 2 - 1.0 / 3.0)
    dp = -2 * a**3 * np.cos(a * s) / np.sin(a * s) ** 3
    for m in range(1, M + 1):
        for sign in (1, -1):
            shift = sign * m * tau
            sn = np.sin(a * (s - shift))
            p += a**2 * (1 / sn**2 - 1 / np.sin(a * shift) ** 2)
            dp += -2 * a**3 * np.cos(a * (s - shift)) / sn**3
    scale = 2 * omega1
    return complex(p / scale**2), complex(dp / scale**3)


def eisenstein_invariants(lattice) -> tuple[complex, complex]:
    """g2, g3 from q-expansions of the Eisenstein series E4, E6."""
    two_w1, two_w2 = lattice
    omega1, omega2 = _check_lattice(complex(two_w1) / 2, complex(two_w2) / 2)
    tau = omega2 / omega1
    q = np.exp(2j * np.pi * tau)
    e4 = 1.0 + 0j
    e6 = 1.0 + 0j
    n = 1
    while True:
        qn = q**n
        s3 = sum(d**3 for d in range(1, n + 1) if n % d == 0)
        s5 = sum(d**5 for d in range(1, n + 1) if n % d == 0)
        e4 += 240 * s3 * qn
        e6 -= 504 * s5 * qn
        if abs(qn) * s5 < 1e-18 or n > 2000:
            break
        n += 1
    L = 2 * omega1
    g2 = (4 * math.pi**4 / 3) * e4 / L**4
    g3 = (8 * math.pi**6 / 27) * e6 / L**6
    return complex(g2), complex(g3)


# --------------------------------------------------------------------------
# KP potential u = -2 d_x^2 log theta(Ux + Vy + Wt + Z)


def _multi_indices(top):
    a, b, c = top
    return [(i, j, k) for i in range(a + 1) for j in range(b + 1) for k in range(c + 1)]


def log_derivatives(moments: dict, wanted) -> dict:
    """Mixed partials of log f from normalized moments M_alpha = d^alpha f / f.

    Recursion on multi-indices: pick an index i with alpha_i > 0, then
    M_alpha = sum_{beta <= alpha - e_i} prod_j C(alpha_j - delta_ij, beta_j) K_{beta+e_i} M_{alpha-e_i-beta}.
    """
    K: dict = {}

    def cum(alpha):
        if alpha in K:
            return K[alpha]
        i = next(j for j, a in enumerate(alpha) if a > 0)
        red = tuple(a - (1 if j == i else 0) for j, a in enumerate(alpha))
        total = moments[alpha]
        for beta in _multi_indices(red):
            if beta == red:
                continue
            coef = 1
            for j in range(len(alpha)):
                coef *= math.comb(red[j], beta[j])
            b1 = tuple(bb + (1 if j == i else 0) for j, bb in enumerate(beta))
            rest = tuple(r - bb for r, bb in zip(red, beta))
            total -= coef * cum(b1) * moments[rest]
        K[alpha] = total
        return total

    return {w: cum(w) for w in wanted}


def _kp_args(vecs):
    U = np.asarray(vecs.U, dtype=complex)
    V = np.asarray(vecs.V if vecs.V is not None else np.zeros_like(U), dtype=complex)
    W = np.asarray(vecs.W if vecs.W is not None else np.zeros_like(U), dtype=complex)
    Z = np.asarray(vecs.Z if vecs.Z is not None else np.zeros_like(U), dtype=complex)
    return U, V, W, Z


def u_partials(x, y, t, vecs, B, orders_list, trunc=None, floor=THETA_FLOOR) -> dict:
    """Several (x,y,t)-partials of u at one point from a single lattice pass.

    ``orders_list`` holds tuples (a, b, c) meaning d_x^a d_y^b d_t^c u.
    """
    U, V, W, Z = _kp_args(vecs)
    arg = U * x + V * y + W * t + Z
    wanted = [(a + 2, b, c) for a, b, c in orders_list]
    top = tuple(max(w[k] for w in wanted) for k in range(3))
    if max(sum(w) for w in wanted) > MAX_ORDER:
        raise UnsupportedOrderError("u partials need theta derivatives above order 8")
    idx = [m for m in _multi_indices(top) if any(all(m[k] <= w[k] for k in range(3)) for w in wanted)]
    res = lattice_moments(arg, B, [U, V, W], idx, trunc=trunc, recenter=True)
    vals = dict(zip(idx, res.scaled_values))
    th = vals[(0, 0, 0)]
    if abs(th) < floor * res.scaled_abs_sum:
        raise NearDivisorError(f"|theta| below floor at x={x}, y={y}, t={t}", point=arg)
    moments = {m: v / th for m, v in vals.items()}
    logd = log_derivatives(moments, wanted)
    return {o: -2 * logd[(o[0] + 2, o[1], o[2])] for o in orders_list}


def u_field(x, y, t, vecs, B, trunc=None, orders=(0, 0, 0), floor=THETA_FLOOR) -> complex:
    """u = -2 d_x^2 log theta(Ux+Vy+Wt+Z), or its mixed partial d_x^a d_y^b d_t^c u."""
    orders = tuple(orders)
    if sum(orders) > 4:
        raise UnsupportedOrderError("u partials limited to total order 4")
    return complex(u_partials(x, y, t, vecs, B, [orders], trunc, floor)[orders])
