import numpy as np
import pytest

from conftest import random_riemann_matrix
from schottky_lab.curve_data import KPVectors, genus1_data, reference_uv
from schottky_lab.schottky_detect import (SearchOptions, divisor_eq_residual, dubrovin_residual,
                                          gauge_fix, kp_residual, project_out, sample_divisor,
                                          search_uv)
from schottky_lab.theta_core import theta


@pytest.fixture(scope="module")
def g2_sample(g2_periods, g2_vectors):
    return sample_divisor(g2_periods.B, g2_vectors.U, 30, seed=5)


def test_gauge_fix_normalizes():
    U, V = gauge_fix(np.array([1j, 2j]), np.array([1.0, 0.5]))
    assert abs(np.linalg.norm(U) - 1) < 1e-15
    assert abs(U[0].imag) < 1e-15 and U[0].real > 0
    assert abs(np.vdot(U, project_out(V, U))) < 1e-15


def test_divisor_points_are_zeros(g2_periods, g2_sample):
    for z in g2_sample.points:
        assert abs(theta(z, g2_periods.B)) < 1e-10
    assert np.all(g2_sample.theta_rel < 1e-12)


def test_divisor_sampling_is_seeded(g2_periods, g2_vectors):
    a = sample_divisor(g2_periods.B, g2_vectors.U, 4, seed=9)
    b = sample_divisor(g2_periods.B, g2_vectors.U, 4, seed=9)
    assert np.array_equal(a.points, b.points)


def test_genus_one_divisor_is_half_period():
    rm, vecs = genus1_data(0.3 + 1.05j)
    sample = sample_divisor(rm, vecs.U, 5, seed=1)
    tau = rm.B[0, 0]
    for z in sample.points[:, 0]:
        w = z - (1 + tau) / 2
        k = round(w.imag / tau.imag)
        w -= k * tau
        assert abs(w - round(w.real)) < 1e-12


def test_divisor_equation_on_jacobian(g2_periods, g2_vectors, g2_sample):
    rep = divisor_eq_residual(g2_periods.B, g2_vectors.U, g2_vectors.V, g2_sample)
    assert rep.max_residual < 1e-10
    assert rep.count + rep.skipped == len(g2_sample.points)


def test_divisor_equation_is_gauge_invariant(g2_periods, g2_vectors, g2_sample):
    base = divisor_eq_residual(g2_periods.B, g2_vectors.U, g2_vectors.V, g2_sample)
    lam, c = 0.7 - 0.4j, 1.3 + 0.2j
    U2 = lam * g2_vectors.U
    V2 = lam**2 * g2_vectors.V + c * U2
    moved = divisor_eq_residual(g2_periods.B, U2, V2, g2_sample)
    assert np.allclose(base.per_point, moved.per_point, atol=1e-12)


def test_random_directions_fail(g2_periods, g2_sample, rng):
    U = rng.normal(size=2) + 1j * rng.normal(size=2)
    V = rng.normal(size=2) + 1j * rng.normal(size=2)
    assert divisor_eq_residual(g2_periods.B, U, V, g2_sample).max_residual > 1e-2


def test_dubrovin_on_jacobian_and_off(g2_periods, g2_vectors, rng):
    _, rep = dubrovin_residual(g2_periods.B, g2_vectors)
    assert rep.max_residual < 1e-10
    bad = KPVectors(*(rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(3)),
                    g2_vectors.Z)
    assert dubrovin_residual(g2_periods.B, bad)[1].max_residual > 1e-2


def test_kp_report_fields_and_csv(g2_periods, g2_vectors):
    rep = kp_residual(g2_periods.B, g2_vectors, {"x": [0.1, 0.2], "y": [0.3], "t": [0.0]})
    assert rep.count == 2 and rep.criterion == "kp"
    assert rep.to_csv().splitlines()[0] == "index,residual"
    assert len(rep.params_hash) == 16


def test_sample_divisor_rejects_empty_request(g2_periods, g2_vectors):
    with pytest.raises(ValueError):
        sample_divisor(g2_periods.B, g2_vectors.U, 0, seed=1)


def test_search_genus_one():
    rm, _ = genus1_data(0.25 + 1.2j)
    res = search_uv(rm, SearchOptions(multistarts=2, maxiter=400, n_points=6, seed=2))
    assert res.converged and res.report.max_residual < 1e-8


def test_search_reports_non_convergence_on_generic_matrix(rng):
    B = random_riemann_matrix(np.random.default_rng(4), 4)
    res = search_uv(B, SearchOptions(multistarts=1, maxiter=150, n_points=12, seed=1))
    assert not res.converged
    assert res.report.extra["converged"] is False


def test_reference_uv_matches_vectors(g2_periods):
    from schottky_lab.curve_data import kp_vectors
    vecs = kp_vectors(g2_periods, puncture=0.6 - 0.2j)
    U, V = gauge_fix(vecs.U, vecs.V)
    Ur, Vr = reference_uv(g2_periods, U)
    assert np.abs(U - Ur).max() < 1e-10
    assert min(np.abs(project_out(V, U) - Vr).max(), np.abs(project_out(V, U) + Vr).max()) < 1e-10
