import numpy as np
import pytest

from schottky_lab.cm_dynamics import (CM_TIME_SCALE, CallableTau, CMState, ProductTau, ThetaTau,
                                      cm_hamiltonian, cm_rhs, find_zeros, integrate,
                                      laurent_coeffs, newton_zero, residue_condition,
                                      track_zeros, two_body_relative)
from schottky_lab.errors import CollisionError, DomainError, NotCMPoleError
from schottky_lab.theta_core import eisenstein_invariants, weierstrass_p

STATE4 = CMState(0.0, [0.0, 1.5, 0.7 + 1.1j, -0.9 + 0.6j], [0.3, -0.2, 0.1j, 0.05])


def test_two_particle_force():
    acc = cm_rhs(CMState(0.0, [0.0, 1.0], [0.0, 0.0]))
    assert np.allclose(acc, [4.0, -4.0])


def test_state_validation():
    with pytest.raises(DomainError):
        CMState(0.0, [0.0, 1.0], [0.0])
    with pytest.raises(DomainError):
        CMState(0.0, [0.0], [0.0], kind="elliptic")
    with pytest.raises(CollisionError):
        cm_rhs(CMState(0.0, [0.0, 1e-9], [0.0, 0.0]))


def test_energy_conservation_rational():
    traj = integrate(STATE4, 1.0)
    H = traj.hamiltonian()
    assert np.abs(H - H[0]).max() < 1e-9 * max(1.0, abs(H[0]))


def test_time_reversal():
    fwd = integrate(STATE4, 0.6)
    end = fwd.at(0.6)
    back = integrate(CMState(0.0, end.positions, -end.momenta), 0.6)
    assert np.abs(back.positions[-1] - STATE4.positions).max() < 1e-10


def test_two_body_closed_form():
    # particle time s; the relative coordinate obeys r'' = -8/r^3
    st = CMState(0.0, [0.0, 1.2 + 0.3j], [0.4, -0.1j])
    traj = integrate(st, 0.9)
    r0 = st.positions[0] - st.positions[1]
    rd0 = st.momenta[0] - st.momenta[1]
    exact = two_body_relative(r0, rd0, traj.ys)
    numeric = traj.positions[:, 0] - traj.positions[:, 1]
    assert np.abs(exact - numeric).max() < 1e-10


def test_trigonometric_and_elliptic_energy():
    trig = CMState(0.0, [0.3, 1.4, 2.2 + 0.3j], [0.1, -0.2, 0.05], kind="trigonometric")
    H = integrate(trig, 0.5).hamiltonian()
    assert np.abs(H - H[0]).max() < 1e-9 * max(1.0, abs(H[0]))
    ell = CMState(0.0, [0.1, 0.45 + 0.2j], [0.1, -0.1], kind="elliptic", lattice=(1.0, 1.3j))
    H = integrate(ell, 0.3).hamiltonian()
    assert np.abs(H - H[0]).max() < 1e-9 * max(1.0, abs(H[0]))


def test_elliptic_kernel_rows_against_invariants():
    lattice = (1.0, 0.2 + 1.1j)
    g2, _ = eisenstein_invariants(lattice)
    # p'' = 6 p^2 - g2/2 checked by a central difference of p'
    w, h = 0.31 + 0.17j, 1e-4
    d2 = (weierstrass_p(w + h, lattice)[1] - weierstrass_p(w - h, lattice)[1]) / (2 * h)
    p = weierstrass_p(w, lattice)[0]
    assert abs(d2 - (6 * p * p - g2 / 2)) < 1e-6 * abs(d2)


def test_collision_is_reported():
    st = CMState(0.0, [-1.0, 1.0], [0.0, 0.0])
    with pytest.raises(CollisionError) as info:
        integrate(st, 2.0)
    assert info.value.pair == (0, 1)


def test_product_tau_residues_vanish():
    traj = integrate(STATE4, CM_TIME_SCALE * 0.5)
    tau = ProductTau(traj)
    for y in (0.0, 0.2, 0.45):
        zeros = tau.particles(y)[0]
        rep = residue_condition(tau, y, zeros)
        assert np.abs(rep.residues).max() < 1e-8
        assert np.abs(rep.eq_motion).max() < 1e-6


def test_rate_perturbation_breaks_residues():
    shift = np.array([1e-2, 0, 0, 0])
    traj = integrate(STATE4, CM_TIME_SCALE * 0.3, rate_shift=shift)
    tau = ProductTau(traj)
    rep = residue_condition(tau, 0.2, tau.particles(0.2)[0])
    assert np.abs(rep.residues).max() > 1e-4


def test_laurent_extraction_rejects_non_cm_pole():
    with pytest.raises(NotCMPoleError):
        laurent_coeffs(lambda x: 3 / x**2, 0.0, 0.1)
    lau = laurent_coeffs(lambda x: 2 / x**2 + 1.5 + 0.25 * x, 0.0, 0.1)
    assert abs(lau.v - 1.5) < 1e-12 and abs(lau.w - 0.25) < 1e-11


def test_callable_tau_derivatives():
    fd = CallableTau(lambda x, y: np.exp(0.3 * x * y) * (x - 0.2 - y * y))
    x, y = 0.4 + 0.3j, 0.1 - 0.05j
    e = np.exp(0.3 * x * y)
    f = x - 0.2 - y * y
    exact = np.array([
        e * f,
        e * (0.3 * y * f + 1),
        e * (0.3 * x * f - 2 * y),
        e * (0.09 * y * y * f + 0.6 * y),
        e * (0.3 * f + 0.09 * x * y * f + 0.3 * x * 1 - 0.6 * y * y),
        e * (0.09 * x * x * f - 1.2 * x * y - 2),
    ])
    assert np.abs(np.array(fd.jet(x, y)) - exact).max() < 1e-7


def test_find_and_track_theta_zeros(g2_periods):
    from schottky_lab.curve_data import kp_vectors
    vecs = kp_vectors(g2_periods, puncture=0.5 + 0.3j)
    tau = ThetaTau(g2_periods.B, vecs.U, vecs.V, vecs.Z)
    zeros = find_zeros(tau, 0.0, 0.0, 1.0)
    assert len(zeros) == 3
    tr = track_zeros(tau, 0.0, 0.01, zeros, n_samples=3)
    for y, xs in zip(tr.ys, tr.positions):
        for x in xs:
            assert abs(newton_zero(tau, x, y) - x) < 1e-10
    # velocity matches a finite difference of the tracked positions
    fd = (tr.positions[-1] - tr.positions[0]) / (tr.ys[-1] - tr.ys[0])
    assert np.abs(fd - tr.velocities[1]).max() < 1e-3 * max(1.0, np.abs(fd).max())


def test_hamiltonian_value():
    st = CMState(0.0, [0.0, 1.0], [1.0, -1.0])
    assert abs(cm_hamiltonian(st) - (1.0 - 2.0)) < 1e-15
