"""Truncated pseudo-differential operators sum_j a_j(x) d^j with rational a_j."""

from __future__ import annotations

import json

from ..errors import TruncationError
from .rational import RationalFunction, _gbinom

DEFAULT_DEPTH = 12


class PsiDO:
    """Operator of order ``order`` keeping exponents order .. order - depth."""

    def __init__(self, coeffs: dict, order: int, depth: int = DEFAULT_DEPTH, jet_length=None):
        self.order = int(order)
        self.depth = int(depth)
        self.coeffs = {int(j): c for j, c in coeffs.items() if self.low <= j <= self.order}
        if jet_length is None:
            jet_length = min((c.jet_length for c in self.coeffs.values()), default=1)
        self.jet_length = jet_length

    @property
    def low(self) -> int:
        return self.order - self.depth

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def identity(cls, jet_length: int, depth: int = DEFAULT_DEPTH) -> "PsiDO":
        return cls({0: RationalFunction.constant(1.0, jet_length)}, 0, depth)

    @classmethod
    def d(cls, power: int, jet_length: int, depth: int = DEFAULT_DEPTH) -> "PsiDO":
        """The operator d^power."""
        return cls({power: RationalFunction.constant(1.0, jet_length)}, power, depth)

    @classmethod
    def multiplication(cls, f: RationalFunction, depth: int = DEFAULT_DEPTH) -> "PsiDO":
        return cls({0: f}, 0, depth)

    def coeff(self, j: int) -> RationalFunction:
        return self.coeffs.get(j, RationalFunction.zero(self.jet_length))

    # ------------------------------------------------------------------
    # algebra

    def __add__(self, other: "PsiDO") -> "PsiDO":
        order = max(self.order, other.order)
        low = max(self.low, other.low)
        depth = order - low
        keys = set(self.coeffs) | set(other.coeffs)
        out = {}
        for j in keys:
            if j < low:
                continue
            if j in self.coeffs and j in other.coeffs:
                out[j] = self.coeffs[j] + other.coeffs[j]
            else:
                out[j] = self.coeffs.get(j, other.coeffs.get(j))
        return PsiDO(out, order, depth, min(self.jet_length, other.jet_length))

    def __neg__(self) -> "PsiDO":
        return PsiDO({j: -c for j, c in self.coeffs.items()}, self.order, self.depth,
                     self.jet_length)

    def __sub__(self, other: "PsiDO") -> "PsiDO":
        return self + (-other)

    def scale(self, c) -> "PsiDO":
        return PsiDO({j: v.scale(c) for j, v in self.coeffs.items()}, self.order, self.depth,
                     self.jet_length)

    def __mul__(self, other: "PsiDO") -> "PsiDO":
        """Composition; d^i b = sum_k binom(i, k) b^(k) d^(i-k), cut at the depth window."""
        if not isinstance(other, PsiDO):
            return self.scale(other)
        order = self.order + other.order
        depth = min(self.depth, other.depth)
        low = order - depth
        out: dict[int, RationalFunction] = {}
        derivs: dict[int, list] = {}
        for j, b in other.coeffs.items():
            derivs[j] = [b]
        for i, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                k = 0
                while i + j - k >= low:
                    if k > 0 and i >= 0 and k > i:
                        break
                    c = _gbinom(i, k)
                    if c != 0:
                        ders = derivs[j]
                        while len(ders) <= k:
                            ders.append(ders[-1].diff())
                        term = (a * ders[k]).scale(c)
                        e = i + j - k
                        out[e] = out[e] + term if e in out else term
                    k += 1
        return PsiDO(out, order, depth, min(self.jet_length, other.jet_length))

    def plus_part(self) -> "PsiDO":
        """Keep exponents >= 0 (a differential operator)."""
        if self.low > 0:
            raise TruncationError("depth too small to know the full differential part",
                                  self.order)
        return PsiDO({j: c for j, c in self.coeffs.items() if j >= 0}, self.order,
                     self.order, self.jet_length) if self.order >= 0 else \
            PsiDO({}, 0, 0, self.jet_length)

    def minus_part(self) -> "PsiDO":
        return PsiDO({j: c for j, c in self.coeffs.items() if j < 0}, self.order, self.depth,
                     self.jet_length)

    def res(self) -> RationalFunction:
        """Coefficient of d^-1."""
        if self.low > -1:
            raise TruncationError("the d^-1 coefficient lies below the retained window",
                                  self.order + 1)
        return self.coeff(-1)

    def adjoint(self) -> "PsiDO":
        """sum a_j d^j  ->  sum (-d)^j o a_j."""
        out = None
        for j, a in self.coeffs.items():
            term = PsiDO.d(j, self.jet_length, self.depth).scale((-1.0) ** j) * \
                PsiDO.multiplication(a, self.depth)
            term = PsiDO(term.coeffs, self.order, self.depth, self.jet_length)
            out = term if out is None else out + term
        return out if out is not None else PsiDO({}, self.order, self.depth, self.jet_length)

    def inverse(self) -> "PsiDO":
        """Inverse of 1 + X (X of negative order) by the Neumann series."""
        if self.order != 0:
            raise ValueError("inverse implemented for order-0 operators with leading 1")
        lead = self.coeff(0)
        one = RationalFunction.constant(1.0, self.jet_length)
        if (lead - one).max_abs() > 1e-14 or lead.poles.size:
            raise ValueError("inverse needs leading coefficient 1")
        X = self - PsiDO.identity(self.jet_length, self.depth)
        X = PsiDO({j: c for j, c in X.coeffs.items() if j < 0}, 0, self.depth, self.jet_length)
        negX = -X
        out = PsiDO.identity(self.jet_length, self.depth)
        term = PsiDO.identity(self.jet_length, self.depth)
        for _ in range(self.depth):
            term = term * negX
            if not term.coeffs:
                break
            out = out + term
        return out

    def power(self, m: int) -> "PsiDO":
        if m < 0:
            raise ValueError("use inverse() for negative powers")
        out = PsiDO.identity(self.jet_length, self.depth)
        for _ in range(m):
            out = out * self
        return out

    def dy(self) -> "PsiDO":
        """d/dy applied to every coefficient."""
        return PsiDO({j: c.dy() for j, c in self.coeffs.items()}, self.order, self.depth,
                     self.jet_length - 1)

    def chop(self, tol: float = 1e-13) -> "PsiDO":
        return PsiDO({j: c.chop(tol) for j, c in self.coeffs.items()}, self.order, self.depth,
                     self.jet_length)

    def max_abs(self) -> float:
        return max((c.max_abs() for c in self.coeffs.values()), default=0.0)

    def to_dict(self) -> dict:
        return {"order": self.order, "depth": self.depth,
                "coeffs": {str(j): c.to_dict() for j, c in sorted(self.coeffs.items())}}

    def dump(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def __repr__(self) -> str:
        return f"PsiDO(order={self.order}, depth={self.depth}, terms={sorted(self.coeffs)})"


def random_psido(rng, order: int, span: int, jet_length: int = 1, n_poles: int = 2,
                 depth: int = DEFAULT_DEPTH) -> PsiDO:
    """Operator with random rational coefficients at exponents order .. order - span."""
    poles = rng.normal(size=(n_poles, jet_length)) + 1j * rng.normal(size=(n_poles, jet_length))
    coeffs = {}
    for j in range(order - span, order + 1):
        parts = rng.normal(size=(n_poles, 2, jet_length)) + 1j * rng.normal(size=(n_poles, 2, jet_length))
        poly = rng.normal(size=(2, jet_length)) + 1j * rng.normal(size=(2, jet_length))
        coeffs[j] = RationalFunction(poly, poles, parts)
    return PsiDO(coeffs, order, depth, jet_length)


def max_coefficient_difference(A: PsiDO, B: PsiDO) -> float:
    diff = A - B
    return diff.max_abs()
