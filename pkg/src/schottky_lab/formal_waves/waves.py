"""Wave-series recursion for rational Calogero-Moser potentials and the Lax-side checks.

Positions are carried as y-jets generated by the particle flow, so every
d/dy in the recursion is exact Taylor-mode differentiation.  The flow is
written in the KP time y: dx/dy = sqrt(2) p and d2x/dy2 = 2 (cm_rhs + shift).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..cm_dynamics import CM_TIME_SCALE, CMState, _check_collisions
from ..errors import DomainError, ObstructionError, TruncationError
from . import jets
from .psido import PsiDO
from .rational import RESIDUE_TOL, RationalFunction

DOUBLE_POLE_TOL = 1e-10


# --------------------------------------------------------------------------
# particle jets and the potential


def cm_jets(state: CMState, jet_length: int, rate_shift=None) -> np.ndarray:
    """Taylor coefficients of x_i(y0 + t) up to t^(jet_length - 1), shape (N, J)."""
    if state.kind != "rational":
        raise DomainError("the rational wave recursion needs the rational kernel")
    _check_collisions(state.positions, state.y, 1e-12)
    N, J = len(state.positions), int(jet_length)
    shift = np.zeros(N, complex) if rate_shift is None else np.asarray(rate_shift, complex)
    x = np.zeros((N, J), complex)
    x[:, 0] = state.positions
    if J > 1:
        x[:, 1] = CM_TIME_SCALE * state.momenta
    # x'' = 2 (sum_j -4 (x_i - x_j)^-3 + shift), solved order by order
    for k in range(J - 2):
        n = k + 1
        acc = np.zeros((N, n), complex)
        for i in range(N):
            for j in range(N):
                if i != j:
                    acc[i] += -4 * jets.power(x[i, :n] - x[j, :n], -3)
        acc[:, 0] += shift
        x[:, k + 2] = 2 * acc[:, k] / ((k + 2) * (k + 1))
    return x


def cm_u(state: CMState, jet_length: int = 1, rate_shift=None) -> RationalFunction:
    """u = sum_i 2 / (x - x_i)^2 with poles moving along the flow."""
    xj = cm_jets(state, jet_length, rate_shift)
    return _u_from_jets(xj)


def _u_from_jets(xj) -> RationalFunction:
    N, J = xj.shape
    parts = np.zeros((N, 2, J), complex)
    parts[:, 1, 0] = 2.0
    return RationalFunction(np.zeros((0, J), complex), xj, parts)


def local_vw(state: CMState):
    """(v_i, w_i): the constant and linear Laurent coefficients of u at x_i."""
    u = cm_u(state)
    v = np.empty(len(state.positions), complex)
    w = np.empty_like(v)
    for i, p in enumerate(u.poles):
        lau = u.laurent_at(p, 1)
        v[i] = lau.get(0, np.zeros(1))[0]
        w[i] = lau.get(1, np.zeros(1))[0]
    return v, w


# --------------------------------------------------------------------------
# the recursion


def _chop_double_poles(f: RationalFunction, step) -> RationalFunction:
    if f.max_order <= 1:
        return f
    extra = np.abs(f.parts[:, 1:]).max()
    scale = max(1.0, np.abs(f.parts[:, :1]).max(initial=0.0))
    if extra > DOUBLE_POLE_TOL * scale:
        raise ObstructionError(f"higher-order pole of size {extra:.3e} at step {step}", {}, step)
    return RationalFunction(f.poly, f.poles, f.parts[:, :1])


def step_rhs(xi: RationalFunction, u: RationalFunction) -> RationalFunction:
    """d_y xi + u xi - xi''."""
    J = xi.jet_length - 1
    return xi.dy() + (u * xi).with_jet_length(J) - xi.diff().diff().with_jet_length(J)


def wave_step(xi: RationalFunction, u: RationalFunction, strict: bool = True, step=None,
              tol: float = RESIDUE_TOL):
    """One recursion step; returns (xi_next, residues of the right-hand side)."""
    rhs = step_rhs(xi, u)
    F, res = rhs.antiderivative(strict=False)
    if strict:
        scale = residue_scale(rhs)
        bad = {i: res[i] for i in range(len(res)) if abs(res[i, 0]) > tol * scale[i]}
        if bad:
            mags = ", ".join(f"{abs(r[0]):.3e}" for r in bad.values())
            raise ObstructionError(f"nonzero residues ({mags}) at step {step}", bad, step)
    return _chop_double_poles(F.scale(0.5), step), res


def residue_scale(rhs: RationalFunction) -> np.ndarray:
    """Per-pole size of the principal part, floored at 1; residues are judged against it."""
    if not rhs.max_order:
        return np.ones(len(rhs.poles))
    return np.maximum(1.0, np.abs(rhs.parts[:, :, 0]).max(axis=1))


def obstruction_from_laurent(xi: RationalFunction, u: RationalFunction, i: int) -> np.ndarray:
    """r_dot + v r + 2 r_1 at pole i, from local expansions of xi and u (a jet)."""
    a = u.poles[i]
    lx = xi.laurent_at(a, 1)
    lu = u.laurent_at(a, 0)
    J = min(xi.jet_length, u.jet_length) - 1
    zero = np.zeros(J + 1, complex)
    r = lx.get(-1, zero)
    r1 = lx.get(1, zero)
    v = lu.get(0, zero)
    return jets.dy(r)[:J] + jets.mul(v, r)[:J] + 2 * r1[:J]


@dataclass
class WaveSeries:
    """xi[0] = 1, xi[1], ...; ``residues[s]`` is the obstruction of the step fed by xi[s]."""
    xi: list
    state: CMState
    u: RationalFunction
    rate_shift: np.ndarray | None = None
    residues: list = field(default_factory=list)
    b_shift: complex = 0.0

    @property
    def steps(self) -> int:
        return len(self.xi) - 1

    def max_obstruction(self) -> float:
        return max((float(np.abs(r[:, 0]).max(initial=0.0)) for r in self.residues), default=0.0)

    def to_dict(self) -> dict:
        return {"positions": [[z.real, z.imag] for z in self.state.positions],
                "momenta": [[z.real, z.imag] for z in self.state.momenta],
                "b_shift": [self.b_shift.real, self.b_shift.imag],
                "obstructions": [float(np.abs(r[:, 0]).max(initial=0.0)) for r in self.residues],
                "xi": [f.to_dict() for f in self.xi]}

    def dump(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def wave_series(state: CMState, steps: int, strict: bool = True, rate_shift=None,
                extra_jets: int = 4, tol: float = RESIDUE_TOL) -> WaveSeries:
    """Run the recursion from xi_0 = 1 for ``steps`` steps.

    Each step costs one y-derivative, so positions carry ``steps + extra_jets``
    Taylor coefficients; the extra ones feed later d/dy of the Lax operator.
    """
    J = steps + extra_jets
    xj = cm_jets(state, J, rate_shift)
    u = _u_from_jets(xj)
    xi = [RationalFunction.constant(1.0, J)]
    residues = []
    for s in range(steps):
        nxt, res = wave_step(xi[-1], u, strict=strict, step=s, tol=tol)
        xi.append(nxt)
        residues.append(res)
    shift = None if rate_shift is None else np.asarray(rate_shift, complex)
    return WaveSeries(xi, state, u, shift, residues)


# --------------------------------------------------------------------------
# operator side


def wave_operator(ws: WaveSeries) -> PsiDO:
    """Phi = 1 + sum_s xi_s d^-s, retained down to d^-S."""
    S = ws.steps
    J = ws.xi[-1].jet_length
    coeffs = {-s: f.with_jet_length(J) for s, f in enumerate(ws.xi)}
    return PsiDO(coeffs, 0, S, J)


def lax_operator(phi: PsiDO) -> PsiDO:
    return phi * PsiDO.d(1, phi.jet_length, phi.depth) * phi.inverse()


def f_residues(L: PsiDO, m_max: int) -> list:
    """[res L^1, ..., res L^m_max]."""
    if L.depth < m_max + 1:
        raise TruncationError(f"need depth {m_max + 1} for res L^{m_max}", m_max + 1)
    out, P = [], PsiDO.identity(L.jet_length, L.depth)
    for _ in range(m_max):
        P = P * L
        out.append(P.res())
    return out


def u_from_lax(L: PsiDO) -> RationalFunction:
    """-(coefficient of d^0 in L^2)."""
    return -(L * L).coeff(0)


def dual_pairing(ws: WaveSeries, s_max: int | None = None) -> list:
    """Coefficients J_0, J_1, ... of psi^+ psi as a series in 1/k."""
    phi = wave_operator(ws)
    S = ws.steps if s_max is None else s_max
    if S > phi.depth:
        raise TruncationError(f"need {S} wave steps for J_{S}", S)
    e = phi.inverse().adjoint()
    J = phi.jet_length
    out = []
    for s in range(S + 1):
        acc = RationalFunction.zero(J)
        for t in range(s + 1):
            if -t in e.coeffs:
                term = e.coeffs[-t] * ws.xi[s - t].with_jet_length(J)
                acc = acc + term.scale((-1) ** t)
        out.append(acc)
    return out


def pairing_residual(ws: WaveSeries, n_max: int) -> float:
    """max_n |J_{n+1} - res L^n| in coefficient norm."""
    Js = dual_pairing(ws, n_max + 1)
    Fs = f_residues(lax_operator(wave_operator(ws)), n_max)
    return max((Js[n + 1] - Fs[n - 1]).chop(0.0).max_abs() for n in range(1, n_max + 1))


def dickey_sides(D1: PsiDO, D2: PsiDO):
    """(res_k of (D1^* e^{-kx})(D2 e^{kx}), res_d of D2 D1)."""
    b = D1.adjoint().coeffs
    lhs = RationalFunction.zero(min(D1.jet_length, D2.jet_length))
    for j, a in D2.coeffs.items():
        l = -1 - j
        if l in b:
            lhs = lhs + (a * b[l]).scale((-1.0) ** l)
    return lhs, (D2 * D1).res()


def lax_commutator_residual(ws: WaveSeries, m: int) -> float:
    """max coefficient of [d_y - d^2 + u, L^m_+] - 2 d_x F_m."""
    if m > ws.steps - 1:
        raise TruncationError(f"need {m + 1} wave steps", m + 1)
    L = lax_operator(wave_operator(ws))
    Lm = L.power(m)
    F = Lm.res()
    P = Lm.plus_part()
    J = P.jet_length
    width = m + 4
    P = PsiDO(P.coeffs, m, width, J)
    u = ws.u.with_jet_length(J)
    A = PsiDO({2: RationalFunction.constant(-1.0, J), 0: u}, 2, width, J)
    comm = P.dy() + (A * P - P * A)
    target = PsiDO({0: F.diff().scale(2.0)}, 0, 0, J)
    diff = comm - PsiDO(target.coeffs, comm.order, comm.depth, J)
    return max((c.chop(0.0).max_abs() for c in diff.coeffs.values()), default=0.0)


def conjugation_residual(ws: WaveSeries, c: complex, m_max: int) -> float:
    """F_m from Phi and from Phi o (1 + c d^-1) agree; returns the largest difference."""
    phi = wave_operator(ws)
    J = phi.jet_length
    g = PsiDO({0: RationalFunction.constant(1.0, J), -1: RationalFunction.constant(c, J)},
              0, phi.depth, J)
    F1 = f_residues(lax_operator(phi), m_max)
    F2 = f_residues(lax_operator(phi * g), m_max)
    return max((a - b).chop(0.0).max_abs() for a, b in zip(F1, F2))
