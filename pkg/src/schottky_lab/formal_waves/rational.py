"""Rational functions of x in partial-fraction form with y-jet coefficients.

f(x) = sum_n poly[n] x^n + sum_i sum_k parts[i, k-1] (x - poles[i])^(-k)

Every coefficient and every pole position is a jet in y (see ``jets``), so
d/dy acts exactly through the chain rule.
"""

from __future__ import annotations

import json
from math import comb

import numpy as np

from ..errors import DegeneracyError, ObstructionError
from . import jets

SAME_POLE = 1e-12
POLE_SEPARATION = 1e-10
RESIDUE_TOL = 1e-12


def _gbinom(n: int, m: int) -> float:
    """Binomial coefficient for integer n of either sign."""
    out = 1.0
    for j in range(m):
        out *= (n - j) / (j + 1)
    return out


class RationalFunction:
    __slots__ = ("poly", "poles", "parts")

    def __init__(self, poly=None, poles=None, parts=None, jet_length: int | None = None):
        arrays = [a for a in (poly, poles, parts) if a is not None and np.ndim(a) >= 2]
        if jet_length is None:
            jet_length = min((np.shape(a)[-1] for a in arrays), default=1)
        J = jet_length
        self.poly = np.zeros((0, J), complex) if poly is None else np.asarray(poly, complex)[..., :J]
        self.poles = np.zeros((0, J), complex) if poles is None else np.asarray(poles, complex)[..., :J]
        if parts is None:
            parts = np.zeros((len(self.poles), 0, J), complex)
        self.parts = np.asarray(parts, complex)[..., :J]
        if self.poly.ndim != 2 or self.poles.ndim != 2 or self.parts.ndim != 3:
            raise ValueError("bad shapes for RationalFunction")
        if self.parts.shape[0] != self.poles.shape[0]:
            raise ValueError("one principal part per pole required")

    # ------------------------------------------------------------------
    # construction helpers

    @classmethod
    def constant(cls, c, jet_length: int) -> "RationalFunction":
        c = np.asarray(c, complex)
        poly = c[None, :] if c.ndim == 1 else jets.const(c, jet_length)[None, :]
        return cls(poly=poly, jet_length=jet_length)

    @classmethod
    def zero(cls, jet_length: int) -> "RationalFunction":
        return cls(jet_length=jet_length)

    @classmethod
    def pole_term(cls, pole, coeff, order: int, jet_length: int) -> "RationalFunction":
        """coeff * (x - pole)^(-order)."""
        pole = np.asarray(pole, complex)
        pole = pole if pole.ndim == 1 else jets.const(pole, jet_length)
        coeff = np.asarray(coeff, complex)
        coeff = coeff if coeff.ndim == 1 else jets.const(coeff, jet_length)
        parts = np.zeros((1, order, jet_length), complex)
        parts[0, order - 1] = coeff[:jet_length]
        return cls(poles=pole[None, :jet_length], parts=parts, jet_length=jet_length)

    @property
    def jet_length(self) -> int:
        return self.poly.shape[-1]

    @property
    def max_order(self) -> int:
        return self.parts.shape[1]

    def copy(self) -> "RationalFunction":
        return RationalFunction(self.poly.copy(), self.poles.copy(), self.parts.copy())

    def with_jet_length(self, J: int) -> "RationalFunction":
        if J > self.jet_length:
            raise ValueError("cannot lengthen jets")
        return RationalFunction(self.poly, self.poles, self.parts, jet_length=J)

    # ------------------------------------------------------------------
    # pole bookkeeping

    def _find_pole(self, a) -> int | None:
        if not len(self.poles):
            return None
        d = np.abs(self.poles[:, 0] - a[0])
        i = int(np.argmin(d))
        if d[i] < SAME_POLE:
            return i
        if d[i] < POLE_SEPARATION:
            raise DegeneracyError(f"poles {self.poles[i, 0]} and {a[0]} nearly coincide")
        return None

    def _union_poles(self, other):
        J = min(self.jet_length, other.jet_length)
        poles = [p[:J] for p in self.poles]
        tmp = RationalFunction(poles=np.array(poles).reshape(-1, J) if poles else None,
                               jet_length=J)
        for b in other.poles:
            if tmp._find_pole(b[:J]) is None:
                poles.append(b[:J])
                tmp = RationalFunction(poles=np.array(poles), jet_length=J)
        return np.array(poles).reshape(-1, J), J

    # ------------------------------------------------------------------
    # local expansions

    def laurent_at(self, a, m_max: int) -> dict:
        """Laurent coefficients {power: jet} at x = a (a jet) for powers <= m_max."""
        J = min(self.jet_length, np.shape(a)[-1])
        a = np.asarray(a, complex)[:J]
        out = {}

        def add(m, v):
            out[m] = out.get(m, 0) + v[:J]

        i = self._find_pole(a)
        for idx in range(len(self.poles)):
            c = self.parts[idx, :, :J]
            if idx == i:
                for k in range(1, self.max_order + 1):
                    if np.any(c[k - 1]):
                        add(-k, c[k - 1])
                continue
            d = a - self.poles[idx, :J]
            for k in range(1, self.max_order + 1):
                if not np.any(c[k - 1]):
                    continue
                dk = jets.power(d, -k)
                dinv = jets.inv(d)
                term = jets.mul(c[k - 1], dk)
                for m in range(0, m_max + 1):
                    add(m, _gbinom(-k, m) * term)
                    term = jets.mul(term, dinv)
        for n in range(len(self.poly)):
            q = self.poly[n, :J]
            if not np.any(q):
                continue
            for m in range(0, min(n, m_max) + 1):
                add(m, comb(n, m) * jets.mul(q, jets.power(a, n - m)))
        return out

    # ------------------------------------------------------------------
    # arithmetic

    def _aligned(self, poles, J):
        """Parts re-indexed onto the pole list (padded orders)."""
        K = self.max_order
        parts = np.zeros((len(poles), K, J), complex)
        for idx, p in enumerate(self.poles):
            j = RationalFunction(poles=poles, jet_length=J)._find_pole(p[:J])
            parts[j] += self.parts[idx, :, :J]
        return parts

    def __add__(self, other):
        if not isinstance(other, RationalFunction):
            other = RationalFunction.constant(other, self.jet_length)
        poles, J = self._union_poles(other)
        K = max(self.max_order, other.max_order)
        parts = np.zeros((len(poles), K, J), complex)
        a = self._aligned(poles, J)
        b = other._aligned(poles, J)
        parts[:, :a.shape[1]] += a
        parts[:, :b.shape[1]] += b
        D = max(len(self.poly), len(other.poly))
        poly = np.zeros((D, J), complex)
        poly[:len(self.poly)] += self.poly[:, :J]
        poly[:len(other.poly)] += other.poly[:, :J]
        return RationalFunction(poly, poles, parts)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.poly, self.poles, -self.parts)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "RationalFunction":
        """Multiply by a y-dependent constant (jet) or a number."""
        c = np.asarray(c, complex)
        if c.ndim == 0:
            return RationalFunction(c * self.poly, self.poles, c * self.parts)
        J = min(len(c), self.jet_length)
        return RationalFunction(jets.mul(self.poly[:, :J], c[:J]), self.poles[:, :J],
                                jets.mul(self.parts[..., :J], c[:J]))

    def __mul__(self, other):
        if not isinstance(other, RationalFunction):
            return self.scale(other)
        poles, J = self._union_poles(other)
        Kf, Kg = self.max_order, other.max_order
        K = Kf + Kg
        parts = np.zeros((len(poles), K, J), complex)
        for idx, c in enumerate(poles):
            lf = self.laurent_at(c, Kg)
            lg = other.laurent_at(c, Kf)
            for pf, vf in lf.items():
                for pg, vg in lg.items():
                    p = pf + pg
                    if p < 0:
                        parts[idx, -p - 1] += jets.mul(vf, vg)
        # polynomial part: poly*poly plus the regular part of poly * principal parts
        D = len(self.poly) + len(other.poly)
        poly = np.zeros((max(D - 1, 0), J), complex)
        for n, qa in enumerate(self.poly):
            for m, qb in enumerate(other.poly):
                poly[n + m] += jets.mul(qa[:J], qb[:J])
        for f, g in ((self, other), (other, self)):
            if not len(f.poly):
                continue
            for idx, c in enumerate(g.poles):
                c = c[:J]
                shifted = RationalFunction(poly=f.poly[:, :J]).laurent_at(c, len(f.poly))
                for k in range(1, g.max_order + 1):
                    ck = g.parts[idx, k - 1, :J]
                    if not np.any(ck):
                        continue
                    for m, qm in shifted.items():
                        n = m - k
                        if n < 0:
                            continue
                        coeff = jets.mul(qm, ck)
                        # (x - c)^n in powers of x
                        for j in range(n + 1):
                            term = comb(n, j) * jets.mul(coeff, jets.power(-c, n - j))
                            if j >= len(poly):
                                poly = np.vstack([poly, np.zeros((j - len(poly) + 1, J), complex)])
                            poly[j] += term
        return RationalFunction(poly, poles, parts)

    __rmul__ = __mul__

    def diff(self) -> "RationalFunction":
        """d/dx."""
        J = self.jet_length
        poly = (self.poly[1:] * np.arange(1, len(self.poly))[:, None]
                if len(self.poly) > 1 else np.zeros((0, J), complex))
        K = self.max_order
        parts = np.zeros((len(self.poles), K + 1, J), complex)
        for k in range(1, K + 1):
            parts[:, k] = -k * self.parts[:, k - 1]
        return RationalFunction(poly, self.poles, parts)

    def dy(self) -> "RationalFunction":
        """d/dy through the coefficient jets and the moving poles."""
        J = self.jet_length - 1
        if J < 1:
            raise ValueError("jets exhausted: cannot take another y-derivative")
        poly = jets.dy(self.poly) if len(self.poly) else np.zeros((0, J), complex)
        K = self.max_order
        parts = np.zeros((len(self.poles), K + 1, J), complex)
        if len(self.poles):
            vel = jets.dy(self.poles)
            for k in range(1, K + 1):
                c = self.parts[:, k - 1]
                parts[:, k - 1] += jets.dy(c)
                parts[:, k] += k * jets.mul(c[:, :J], vel)
        return RationalFunction(poly, self.poles[:, :J], parts)

    def residues(self) -> np.ndarray:
        """Jets of the (x - x_i)^-1 coefficients, one row per pole."""
        if self.max_order == 0:
            return np.zeros((len(self.poles), self.jet_length), complex)
        return self.parts[:, 0].copy()

    def antiderivative(self, strict: bool = True, tol: float = RESIDUE_TOL, step=None):
        """Rational antiderivative with zero constant term.

        Simple-pole residues (their y0 values) must be below ``tol``; otherwise an
        ObstructionError carries them.  With ``strict=False`` the residues are
        dropped and returned alongside the result.
        """
        res = self.residues()
        bad = {i: res[i] for i in range(len(res)) if abs(res[i, 0]) > tol}
        if bad and strict:
            mags = ", ".join(f"{abs(r[0]):.3e}" for r in bad.values())
            raise ObstructionError(f"nonzero residues ({mags})", bad, step)
        J = self.jet_length
        n = len(self.poly)
        poly = np.zeros((n + 1, J), complex)
        if n:
            poly[1:] = self.poly / np.arange(1, n + 1)[:, None]
        K = self.max_order
        parts = np.zeros((len(self.poles), max(K - 1, 0), J), complex)
        for k in range(2, K + 1):
            parts[:, k - 2] = self.parts[:, k - 1] / (1 - k)
        out = RationalFunction(poly, self.poles, parts)
        return (out, res) if not strict else out

    # ------------------------------------------------------------------
    # inspection

    def evaluate(self, x, y_shift: complex = 0.0) -> complex:
        """Value at x and y = y0 + y_shift (jets summed as Taylor polynomials)."""
        def at(j):
            return np.polyval(j[::-1], y_shift)

        x = complex(x)
        total = 0j
        for n, q in enumerate(self.poly):
            total += at(q) * x**n
        for idx, p in enumerate(self.poles):
            d = x - at(p)
            for k in range(1, self.max_order + 1):
                total += at(self.parts[idx, k - 1]) / d**k
        return complex(total)

    def scale_size(self) -> float:
        vals = [np.abs(self.poly[:, 0]).max(initial=0.0), np.abs(self.parts[..., 0]).max(initial=0.0)]
        return float(max(vals))

    def pole_order(self, tol: float = 1e-10) -> int:
        """Highest pole order with a coefficient above tol * size (at y0)."""
        size = max(self.scale_size(), 1e-300)
        for k in range(self.max_order, 0, -1):
            if np.abs(self.parts[:, k - 1, 0]).max(initial=0.0) > tol * size:
                return k
        return 0

    def chop(self, tol: float = 1e-13) -> "RationalFunction":
        """Drop coefficients (whole jets) below tol * size, trailing orders and degrees."""
        size = max(self.scale_size(), 1e-300)
        poly = self.poly.copy()
        parts = self.parts.copy()
        poly[np.abs(poly).max(axis=-1) < tol * size] = 0
        parts[np.abs(parts).max(axis=-1) < tol * size] = 0
        while len(poly) and not np.any(poly[-1]):
            poly = poly[:-1]
        K = parts.shape[1]
        while K and not np.any(parts[:, K - 1]):
            K -= 1
        keep = [i for i in range(len(self.poles)) if np.any(parts[i, :K])]
        return RationalFunction(poly, self.poles[keep], parts[keep, :K], jet_length=self.jet_length)

    def max_abs(self) -> float:
        """Largest y0 coefficient magnitude (polynomial and principal parts)."""
        return self.scale_size()

    def to_dict(self) -> dict:
        def cl(a):
            return [[repr(float(v.real)), repr(float(v.imag))] for v in np.ravel(a)]

        return {"jet_length": self.jet_length,
                "poly": [cl(q) for q in self.poly],
                "poles": [{"x": cl(p), "parts": [cl(c) for c in self.parts[i]]}
                          for i, p in enumerate(self.poles)]}

    def dump(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d) -> "RationalFunction":
        def arr(rows):
            return np.array([complex(float(a), float(b)) for a, b in rows], complex)

        J = d["jet_length"]
        poly = np.array([arr(q) for q in d["poly"]]).reshape(-1, J)
        poles = np.array([arr(p["x"]) for p in d["poles"]]).reshape(-1, J)
        K = max((len(p["parts"]) for p in d["poles"]), default=0)
        parts = np.zeros((len(poles), K, J), complex)
        for i, p in enumerate(d["poles"]):
            for k, c in enumerate(p["parts"]):
                parts[i, k] = arr(c)
        return cls(poly, poles, parts, jet_length=J)

    def __repr__(self) -> str:
        return (f"RationalFunction(deg={len(self.poly) - 1}, poles={len(self.poles)}, "
                f"max_order={self.max_order}, jets={self.jet_length})")
