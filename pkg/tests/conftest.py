import itertools

import numpy as np
import pytest

from schottky_lab.curve_data import HyperellipticCurve, hyperelliptic_periods, kp_vectors

REFERENCE_BRANCH_POINTS = (-2.0, -1.0, 0.0, 1.0, 2.0)


def random_riemann_matrix(rng, g, floor=0.8):
    X = rng.uniform(-0.5, 0.5, (g, g))
    M = rng.normal(size=(g, g))
    Y = M @ M.T / g + floor * np.eye(g)
    return (X + X.T) / 2 + 1j * Y


def brute_theta(z, B, radius=None, spec=()):
    """Direct box sum with derivative factors (2 pi i m.d); independent of the library."""
    B = np.asarray(B, complex)
    z = np.asarray(z, complex)
    g = len(z)
    if radius is None:
        lam = np.linalg.eigvalsh(B.imag).min()
        radius = int(np.ceil(np.sqrt(40.0 / (np.pi * lam)) + np.abs(z.imag).max() + 1))
    ms = np.array(list(itertools.product(range(-radius, radius + 1), repeat=g)), float)
    expo = 1j * np.pi * np.einsum("ki,ij,kj->k", ms, B, ms) + 2j * np.pi * ms @ z
    w = np.exp(expo)
    for d in spec:
        w = w * (2j * np.pi * ms @ np.asarray(d, complex))
    return w.sum()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture(scope="session")
def g2_periods():
    return hyperelliptic_periods(HyperellipticCurve(REFERENCE_BRANCH_POINTS), 200)


@pytest.fixture(scope="session")
def g2_vectors(g2_periods):
    return kp_vectors(g2_periods)


ACCEPTANCE_LINES: list = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
