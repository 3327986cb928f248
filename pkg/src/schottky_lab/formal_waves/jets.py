"""Truncated Taylor series in y ("jets"): the last axis holds f^(n)(y0)/n!."""

from __future__ import annotations

import numpy as np


def const(c, length: int) -> np.ndarray:
    out = np.zeros(length, dtype=complex)
    out[0] = c
    return out


def trim(a, b):
    n = min(a.shape[-1], b.shape[-1])
    return a[..., :n], b[..., :n]


def mul(a, b) -> np.ndarray:
    a, b = trim(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    n = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    for k in range(n):
        out[..., k:] += a[..., k:k + 1] * b[..., :n - k]
    return out


def inv(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    out = np.zeros_like(a)
    out[..., 0] = 1 / a[..., 0]
    for k in range(1, n):
        s = np.zeros(a.shape[:-1], dtype=complex)
        for j in range(1, k + 1):
            s = s + a[..., j] * out[..., k - j]
        out[..., k] = -s * out[..., 0]
    return out


def power(a, m: int) -> np.ndarray:
    """Integer power, negative allowed."""
    a = np.asarray(a, dtype=complex)
    if m < 0:
        return power(inv(a), -m)
    out = const(1.0, a.shape[-1]) * np.ones(a.shape[:-1] + (1,))
    base = a
    while m:
        if m & 1:
            out = mul(out, base)
        base = mul(base, base)
        m >>= 1
    return out


def dy(a) -> np.ndarray:
    """d/dy; the result is one entry shorter."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if n <= 1:
        raise ValueError("jet too short to differentiate")
    return a[..., 1:] * np.arange(1, n)


def value(a):
    return np.asarray(a)[..., 0]
