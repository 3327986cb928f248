"""Complex Calogero-Moser dynamics, zero tracking and Laurent data of u = -2 (ln tau)_xx.

Two flow parameters appear.  The particle system is integrated in its own
time s with the kernel normalization

    rational        x_i'' = -4 sum 1/(x_i - x_j)^3
    trigonometric   x_i'' = -4 sum cos(x_i - x_j)/sin^3(x_i - x_j)
    elliptic        x_i'' =  2 sum p'(x_i - x_j)

while the zeros of tau(x, y) obey x_i'' = 2 w_i in the KP variable y.  The
two agree for s = CM_TIME_SCALE * y, which is how trajectories are turned
into tau functions (``ProductTau``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import CollisionError, DomainError, NotCMPoleError, SingularLocusError
from .theta_core import as_riemann_matrix, lattice_moments, weierstrass_p

COLLISION_FLOOR = 1e-7
CM_TIME_SCALE = math.sqrt(2.0)
KINDS = ("rational", "trigonometric", "elliptic")


@dataclass
class CMState:
    y: complex
    positions: np.ndarray
    momenta: np.ndarray
    kind: str = "rational"
    lattice: tuple | None = None  # (2 omega1, 2 omega2) for the elliptic kernel

    def __post_init__(self):
        self.positions = np.atleast_1d(np.asarray(self.positions, dtype=complex))
        self.momenta = np.atleast_1d(np.asarray(self.momenta, dtype=complex))
        if self.positions.shape != self.momenta.shape or self.positions.size < 1:
            raise DomainError("need N >= 1 positions and as many momenta")
        if self.kind not in KINDS:
            raise DomainError(f"unknown kind {self.kind!r}")
        if self.kind == "elliptic" and self.lattice is None:
            raise DomainError("elliptic kernel needs a lattice")

    def replace(self, y, positions, momenta) -> "CMState":
        return CMState(y, positions, momenta, self.kind, self.lattice)


def _check_collisions(x, y, floor):
    d = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(d, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    if d[i, j] < floor:
        raise CollisionError(f"particles {min(i, j)} and {max(i, j)} collide at y={y}",
                             (min(i, j), max(i, j)), y)


def _pair_forces(x, kind, lattice):
    """Matrix F[i, j] of the force on i from j (zero diagonal)."""
    d = x[:, None] - x[None, :]
    n = len(x)
    off = ~np.eye(n, dtype=bool)
    F = np.zeros((n, n), dtype=complex)
    if kind == "rational":
        F[off] = -4 / d[off] ** 3
    elif kind == "trigonometric":
        F[off] = -4 * np.cos(d[off]) / np.sin(d[off]) ** 3
    else:
        F[off] = [2 * weierstrass_p(w, lattice)[1] for w in d[off]]
    return F


def _pair_potential(x, kind, lattice):
    d = x[:, None] - x[None, :]
    iu = np.triu_indices(len(x), 1)
    w = d[iu]
    if kind == "rational":
        k = 2 / w**2
    elif kind == "trigonometric":
        k = 2 / np.sin(w) ** 2
    else:
        k = np.array([2 * weierstrass_p(v, lattice)[0] for v in w])
    return complex(np.sum(k))


def cm_rhs(state: CMState, floor: float = COLLISION_FLOOR) -> np.ndarray:
    """Accelerations of the Calogero-Moser system."""
    x = state.positions
    if len(x) == 1:
        return np.zeros(1, dtype=complex)
    _check_collisions(x, state.y, floor)
    return _pair_forces(x, state.kind, state.lattice).sum(axis=1)


def cm_hamiltonian(state: CMState, floor: float = COLLISION_FLOOR) -> complex:
    """H = 1/2 sum p^2 - sum_{i<j} kernel(x_i - x_j)."""
    x = state.positions
    kin = 0.5 * complex(np.sum(state.momenta**2))
    if len(x) == 1:
        return kin
    _check_collisions(x, state.y, floor)
    return kin - _pair_potential(x, state.kind, state.lattice)


# --------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    """Accepted RK steps along the segment y0 -> y_end, parametrized by s in [0, 1]."""

    params: np.ndarray
    ys: np.ndarray
    positions: np.ndarray  # (n, N)
    momenta: np.ndarray
    kind: str
    lattice: tuple | None
    rate_shift: np.ndarray  # constant added to the momentum rates (zero for true CM)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y0, y1 = self.ys[0], self.ys[-1]
        self._h = y1 - y0
        acc = np.array([self._accel(x) for x in self.positions])
        self._xs = CubicHermiteSpline(self.params, self.positions, self._h * self.momenta)
        self._ps = CubicHermiteSpline(self.params, self.momenta, self._h * acc)

    def _accel(self, x):
        st = CMState(0, x, np.zeros_like(x), self.kind, self.lattice)
        return cm_rhs(st, floor=0.0) + self.rate_shift

    def _param(self, y):
        if self._h == 0:
            return 0.0
        return float(((complex(y) - self.ys[0]) / self._h).real)

    def at(self, y) -> CMState:
        """Cubic Hermite dense output."""
        s = self._param(y)
        return CMState(y, self._xs(s), self._ps(s), self.kind, self.lattice)

    def acceleration(self, y) -> np.ndarray:
        return self._accel(self.at(y).positions)

    def hamiltonian(self) -> np.ndarray:
        return np.array([cm_hamiltonian(CMState(y, x, p, self.kind, self.lattice), floor=0.0)
                         for y, x, p in zip(self.ys, self.positions, self.momenta)])

    def to_csv(self) -> str:
        n = self.positions.shape[1]
        cols = ["y_re", "y_im"]
        for i in range(n):
            cols += [f"x{i}_re", f"x{i}_im"]
        for i in range(n):
            cols += [f"xdot{i}_re", f"xdot{i}_im"]
        cols += ["H_re", "H_im"]
        lines = [",".join(cols)]
        for y, x, p, H in zip(self.ys, self.positions, self.momenta, self.hamiltonian()):
            row = [y.real, y.imag]
            for v in x:
                row += [v.real, v.imag]
            for v in p:
                row += [v.real, v.imag]
            row += [H.real, H.imag]
            lines.append(",".join(repr(float(r)) for r in row))
        return "\n".join(lines) + "\n"


def integrate(state0: CMState, y_end, tol: float = 1e-12, rate_shift=None,
              floor: float = COLLISION_FLOOR, max_step: float = np.inf) -> Trajectory:
    """DOP853 along the straight segment from state0.y to y_end.

    ``rate_shift`` adds constants to the momentum rates (p_i' = F_i + delta_i);
    it produces controlled non-CM trajectories for negative tests.
    ``max_step`` is a fraction of the segment; smaller steps make the cubic
    Hermite dense output more accurate between accepted steps.
    """
    if not 1e-13 <= tol <= 1e-6:
        raise DomainError("tol must lie in [1e-13, 1e-6]")
    n = len(state0.positions)
    shift = np.zeros(n, complex) if rate_shift is None else np.asarray(rate_shift, dtype=complex)
    y0 = complex(state0.y)
    h = complex(y_end) - y0

    def rhs(s, u):
        x, p = u[:n], u[n:]
        st = CMState(y0 + s * h, x, p, state0.kind, state0.lattice)
        return np.concatenate([h * p, h * (cm_rhs(st, floor) + shift)])

    def near_collision(s, u):
        x = u[:n]
        if n == 1:
            return 1.0
        d = np.abs(x[:, None] - x[None, :]) + np.diag(np.full(n, np.inf))
        return float(d.min() - 10 * floor)

    near_collision.terminal = True
    u0 = np.concatenate([state0.positions, state0.momenta])
    try:
        sol = solve_ivp(rhs, (0.0, 1.0), u0, method="DOP853", rtol=tol, atol=tol,
                        events=near_collision, max_step=max_step)
    except CollisionError as exc:
        raise CollisionError(str(exc), exc.pair, exc.y) from None
    if sol.status == 1 or sol.status == -1:
        y_hit = y0 + sol.t[-1] * h
        x = sol.y[:n, -1]
        d = np.abs(x[:, None] - x[None, :]) + np.diag(np.full(n, np.inf))
        i, j = np.unravel_index(np.argmin(d), d.shape)
        raise CollisionError(f"integration stopped near a collision at y={y_hit}",
                             (min(i, j), max(i, j)), y_hit)
    ys = y0 + sol.t * h
    return Trajectory(sol.t, ys, sol.y[:n].T, sol.y[n:].T, state0.kind, state0.lattice, shift,
                      meta={"method": "DOP853", "tol": tol, "steps": len(sol.t) - 1})


def two_body_relative(r0, rdot0, y):
    """Closed form of the rational two-body relative coordinate r = x1 - x2.

    r'' = -8/r^3 gives (r^2)'' = 4E with E = r'^2/2 - 4/r^2, hence
    r^2 = r0^2 + 2 r0 r0' y + 2E y^2 (branch followed continuously from r0).
    """
    E = 0.5 * rdot0**2 - 4 / r0**2
    ys = np.atleast_1d(np.asarray(y, dtype=complex))
    sq = r0**2 + 2 * r0 * rdot0 * ys + 2 * E * ys**2
    out = np.sqrt(sq)
    prev = r0
    for k in range(len(out)):
        if abs(out[k] - prev) > abs(out[k] + prev):
            out[k] = -out[k]
        prev = out[k]
    return out


# --------------------------------------------------------------------------
# tau functions


class Tau:
    """tau(x, y) with its jet (tau, tau_x, tau_y, tau_xx, tau_xy, tau_yy)."""

    tau_y_method = "analytic"

    def jet(self, x, y):
        raise NotImplementedError

    def scale(self, x, y) -> float:
        return 1.0

    def log_second(self, x, y):
        """(d_x^2 ln tau, d_y^2 ln tau)."""
        t, tx, ty, txx, txy, tyy = self.jet(x, y)
        return txx / t - (tx / t) ** 2, tyy / t - (ty / t) ** 2


class ThetaTau(Tau):
    """tau = theta(Ux + Vy + Z | B); values are scaled, which leaves ratios exact."""

    _EXPS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]

    def __init__(self, B, U, V, Z, trunc=None):
        self.rm = as_riemann_matrix(B)
        self.U = np.asarray(U, dtype=complex)
        self.V = np.asarray(V, dtype=complex)
        self.Z = np.asarray(Z, dtype=complex)
        self.trunc = trunc

    def _moments(self, x, y, recenter):
        z = self.U * x + self.V * y + self.Z
        return lattice_moments(z, self.rm, [self.U, self.V], self._EXPS, trunc=self.trunc,
                               recenter=recenter)

    def jet(self, x, y):
        return tuple(self._moments(x, y, False).scaled_values)

    def log_second(self, x, y):
        # recentred moments differ from theta by exp(linear), invisible here
        t, tx, ty, txx, txy, tyy = self._moments(x, y, True).scaled_values
        return txx / t - (tx / t) ** 2, tyy / t - (ty / t) ** 2

    def scale(self, x, y):
        res = lattice_moments(self.U * x + self.V * y + self.Z, self.rm, trunc=self.trunc)
        return res.scaled_abs_sum


class ProductTau(Tau):
    """tau = prod (x - x_i(y)) along a CM trajectory, y the KP variable.

    Particle time is s = CM_TIME_SCALE * y, so x_i' and x_i'' carry the
    factors CM_TIME_SCALE and CM_TIME_SCALE^2.
    """

    def __init__(self, trajectory: Trajectory, y_origin=0.0):
        self.traj = trajectory
        self.y_origin = complex(y_origin)

    def particles(self, y):
        s = self.traj.ys[0] + CM_TIME_SCALE * (complex(y) - self.y_origin)
        st = self.traj.at(s)
        xd = CM_TIME_SCALE * st.momenta
        xdd = CM_TIME_SCALE**2 * self.traj._accel(st.positions)
        return st.positions, xd, xdd

    def jet(self, x, y):
        xi, xd, xdd = self.particles(y)
        d = x - xi
        n = len(xi)
        t = np.prod(d)
        one = np.array([np.prod(np.delete(d, i)) for i in range(n)])
        two = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for k in range(n):
                if i != k:
                    two[i, k] = np.prod(np.delete(d, [i, k]))
        tx = one.sum()
        ty = -np.sum(xd * one)
        txx = two.sum()
        txy = -np.sum(two * xd[None, :])
        tyy = np.sum(two * np.outer(xd, xd)) - np.sum(xdd * one)
        return t, tx, ty, txx, txy, tyy

    def log_second(self, x, y):
        xi, xd, xdd = self.particles(y)
        d = x - xi
        return -np.sum(1 / d**2), np.sum(-xdd / d - xd**2 / d**2)


class CallableTau(Tau):
    """User-supplied tau(x, y); derivatives by central differences with Richardson."""

    tau_y_method = "central-difference"

    def __init__(self, f, step: float = 1e-5):
        self.f = f
        self.step = step

    def _d1(self, g, h):
        return (4 * (g(h / 2) - g(-h / 2)) / h - (g(h) - g(-h)) / (2 * h)) / 3

    def _d2(self, g, h):
        c = g(0)
        a = (g(h / 2) - 2 * c + g(-h / 2)) / (h / 2) ** 2
        b = (g(h) - 2 * c + g(-h)) / h**2
        return (4 * a - b) / 3

    def jet(self, x, y):
        f, h = self.f, self.step
        t = f(x, y)
        tx = self._d1(lambda e: f(x + e, y), h)
        ty = self._d1(lambda e: f(x, y + e), h)
        txx = self._d2(lambda e: f(x + e, y), 10 * h)
        tyy = self._d2(lambda e: f(x, y + e), 10 * h)
        txy = self._d1(lambda e: self._d1(lambda k: f(x + k, y + e), 10 * h), 10 * h)
        return t, tx, ty, txx, txy, tyy


# --------------------------------------------------------------------------
# zero tracking


@dataclass
class ZeroTrajectory:
    ys: np.ndarray
    positions: np.ndarray  # (n, N)
    velocities: np.ndarray
    meta: dict = field(default_factory=dict)


def newton_zero(tau: Tau, x, y, tol: float = 1e-12, maxit: int = 40, floor: float = 1e-8):
    """Polish a simple zero of tau(., y) near x."""
    for _ in range(maxit):
        t, tx = tau.jet(x, y)[:2]
        sc = tau.scale(x, y)
        if abs(tx) < floor * sc:
            raise SingularLocusError(f"|tau_x| below floor at y={y}", y)
        step = t / tx
        x = x - step
        if abs(step) < 1e-15 * max(1.0, abs(x)):
            break
    t = tau.jet(x, y)[0]
    if abs(t) > tol * tau.scale(x, y):
        raise SingularLocusError(f"Newton did not reach |tau| <= {tol:g} at y={y}", y)
    return x


def track_zeros(tau: Tau, y0, y_end, seeds, n_samples: int = 21, floor: float = 1e-8,
                rtol: float = 1e-11) -> ZeroTrajectory:
    """Continue zeros along x' = -tau_y/tau_x with Newton polishing at each sample."""
    y0, y_end = complex(y0), complex(y_end)
    h = y_end - y0
    xs = np.array([newton_zero(tau, complex(s), y0, floor=floor) for s in seeds])
    params = np.linspace(0.0, 1.0, n_samples)
    ys = y0 + params * h

    def velocity(x, y):
        _, tx, ty = tau.jet(x, y)[:3]
        if abs(tx) < floor * tau.scale(x, y):
            raise SingularLocusError(f"|tau_x| below floor at y={y}", y)
        return -ty / tx

    out = [xs.copy()]
    vel = [np.array([velocity(x, y0) for x in xs])]
    for k in range(1, n_samples):
        a, b = params[k - 1], params[k]

        def rhs(s, u):
            return np.array([h * velocity(x, y0 + s * h) for x in u])

        sol = solve_ivp(rhs, (a, b), xs, method="DOP853", rtol=rtol, atol=rtol)
        if sol.status != 0:
            raise SingularLocusError(f"tracking failed near y={y0 + sol.t[-1] * h}",
                                     y0 + sol.t[-1] * h)
        xs = np.array([newton_zero(tau, x, ys[k], floor=floor) for x in sol.y[:, -1]])
        out.append(xs.copy())
        vel.append(np.array([velocity(x, ys[k]) for x in xs]))
    return ZeroTrajectory(ys, np.array(out), np.array(vel),
                          {"tau_y": tau.tau_y_method, "integrator": "DOP853", "rtol": rtol})


def _zero_count(tau, y, center, radius, n_nodes):
    """Argument-principle count, refined until it is an integer to 1e-4.

    Zeros close to the circle slow the trapezoid rule down, so the node count
    is doubled and then the radius nudged; returns (count, logd, nodes - center).
    """
    for factor in (1.0, 0.92, 1.08, 0.96, 1.04):
        r = radius * factor
        for n in (n_nodes, 2 * n_nodes, 4 * n_nodes):
            w = np.exp(2j * np.pi * np.arange(n) / n)
            logd = []
            for x in center + r * w:
                t, tx = tau.jet(x, y)[:2]
                logd.append(tx / t)
            logd = np.array(logd) * r * w
            m = np.mean(logd)
            if abs(m - round(m.real)) < 1e-4:
                return int(round(m.real)), logd, r * w
    raise SingularLocusError(f"zero count near x={center} does not converge at y={y}", y)


def _zeros_from_moments(tau, y, center, radius, count, logd, d):
    power = [np.mean(logd * d**k) for k in range(1, count + 1)]
    # Newton identities: power sums -> monic polynomial in (x - center)
    e = [1.0 + 0j]
    for k in range(1, count + 1):
        e.append(sum((-1) ** (i - 1) * e[k - i] * power[i - 1] for i in range(1, k + 1)) / k)
    roots = center + np.roots([(-1) ** k * e[k] for k in range(count + 1)])
    if np.any(np.abs(roots - center) > 1.05 * radius):
        return None
    found = []
    for r in roots:
        try:
            z = newton_zero(tau, r, y)
        except SingularLocusError:
            return None
        if abs(z - center) < 1.05 * radius and all(abs(z - f) > 1e-8 for f in found):
            found.append(z)
    return found if len(found) == count else None


def find_zeros(tau: Tau, y, center, radius, n_nodes: int = 256, max_cluster: int = 4,
               _depth: int = 0):
    """Zeros of tau(., y) in a disc: argument principle, moment seeds, Newton.

    Discs holding more than ``max_cluster`` zeros, or whose moment seeds do
    not polish to distinct zeros, are split into smaller overlapping discs.
    """
    center = complex(center)
    count, logd, d = _zero_count(tau, y, center, radius, n_nodes)
    radius = float(abs(d[0]))
    if count == 0:
        return np.zeros(0, dtype=complex)
    found = None
    if count <= max_cluster:
        found = _zeros_from_moments(tau, y, center, radius, count, logd, d)
    if found is None:
        if _depth >= 6:
            raise SingularLocusError(f"cannot separate {count} zeros near x={center} at y={y}", y)
        found = []
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                sub = center + 0.5 * radius * (a + 1j * b)
                for z in find_zeros(tau, y, sub, 0.8 * radius, n_nodes, max_cluster, _depth + 1):
                    if abs(z - center) < radius and all(abs(z - f) > 1e-8 for f in found):
                        found.append(z)
        if len(found) != count:
            raise SingularLocusError(f"found {len(found)} distinct zeros, argument principle "
                                     f"says {count} near y={y}", y)
    return np.array(sorted(found, key=lambda z: (z.real, z.imag)))


# --------------------------------------------------------------------------
# Laurent data and the residue condition


@dataclass
class LaurentData:
    x: complex
    v: complex
    w: complex
    leading: complex
    simple: complex  # coefficient of (x - x_i)^-1, zero for a CM pole
    radius: float


def _contour(x0, radius, n):
    w = np.exp(2j * np.pi * np.arange(n) / n)
    return x0 + radius * w, radius * w


def laurent_coeffs(u, x_i, radius, n: int = 128) -> LaurentData:
    """v_i, w_i in u = 2/(x - x_i)^2 + v_i + w_i (x - x_i) + ... by trapezoidal contours."""
    pts, d = _contour(complex(x_i), radius, n)
    vals = np.array([u(p) for p in pts])
    coef = {k: np.mean(vals * d ** (-k)) for k in (-2, -1, 0, 1)}
    if abs(coef[-2] - 2) > 1e-6:
        raise NotCMPoleError(f"leading coefficient {coef[-2]} != 2 at x={x_i}")
    return LaurentData(complex(x_i), complex(coef[0]), complex(coef[1]), complex(coef[-2]),
                       complex(coef[-1]), radius)


def default_radius(zeros, i, cap=0.1):
    others = np.delete(np.asarray(zeros), i)
    if len(others) == 0:
        return cap
    return min(cap, 0.5 * float(np.min(np.abs(others - zeros[i]))))


@dataclass
class ResidueReport:
    y: complex
    zeros: np.ndarray
    residues: np.ndarray
    xddot: np.ndarray
    w: np.ndarray
    v: np.ndarray

    @property
    def eq_motion(self) -> np.ndarray:
        return self.xddot - 2 * self.w

    def to_dict(self) -> dict:
        def c(z):
            return [float(np.real(z)), float(np.imag(z))]

        return {"y": c(self.y), "zeros": {
            str(i): {"x": c(self.zeros[i]), "residue": c(self.residues[i]),
                     "xddot": c(self.xddot[i]), "w": c(self.w[i]), "v": c(self.v[i]),
                     "xddot_minus_2w": c(self.eq_motion[i])}
            for i in range(len(self.zeros))}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def residue_condition(tau: Tau, y, zeros, radius=None, n: int = 128,
                      floor: float = 1e-8) -> ResidueReport:
    """Residues of d_y^2 ln tau + 2 (d_x^2 ln tau)^2 at the zeros, and x_i'' - 2 w_i."""
    zeros = np.asarray(zeros, dtype=complex)
    y = complex(y)
    res, xdd, ws, vs = [], [], [], []
    for i, x in enumerate(zeros):
        t, tx, ty, txx, txy, tyy = tau.jet(x, y)
        if abs(tx) < floor * tau.scale(x, y):
            raise SingularLocusError(f"zero {i} is not simple at y={y}", y)
        xd = -ty / tx
        xdd.append(-(tyy + 2 * txy * xd + txx * xd * xd) / tx)
        r = default_radius(zeros, i) if radius is None else radius
        pts, d = _contour(x, r, n)
        lx, ly = np.array([tau.log_second(p, y) for p in pts]).T
        res.append(np.mean((ly + 2 * lx * lx) * d))
        lau = laurent_coeffs(lambda p: -2 * tau.log_second(p, y)[0], x, r, n)
        ws.append(lau.w)
        vs.append(lau.v)
    return ResidueReport(y, zeros, np.array(res), np.array(xdd), np.array(ws), np.array(vs))
