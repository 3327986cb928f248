import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schottky_lab.cm_dynamics import CMState, cm_rhs
from schottky_lab.errors import DegeneracyError, ObstructionError, TruncationError
from schottky_lab.formal_waves import jets
from schottky_lab.formal_waves.psido import PsiDO, max_coefficient_difference, random_psido
from schottky_lab.formal_waves.rational import RationalFunction
from schottky_lab.formal_waves.waves import (cm_jets, cm_u, conjugation_residual, dickey_sides,
                                             dual_pairing, f_residues, lax_commutator_residual,
                                             lax_operator, local_vw, obstruction_from_laurent,
                                             pairing_residual, u_from_lax, wave_operator,
                                             wave_series)

TWO = CMState(0.0, [0.0, 1.0], [1.0, -1.0])
THREE = CMState(0.0, [0.0, 1.2, 0.3 + 1j], [0.5, -1.0, 0.2j])


def pole(a, c=1.0, order=1, J=1):
    return RationalFunction.pole_term(a, c, order, J)


def random_rational(rng, J=1):
    poles = rng.normal(size=(2, J)) + 1j * rng.normal(size=(2, J))
    parts = rng.normal(size=(2, 2, J)) + 1j * rng.normal(size=(2, 2, J))
    poly = rng.normal(size=(2, J)) + 1j * rng.normal(size=(2, J))
    return RationalFunction(poly, poles, parts)


# ---- jets ----------------------------------------------------------------

def test_jet_inverse_and_power():
    a = np.array([2.0, 0.5, -0.3, 0.1], complex)
    assert np.allclose(jets.mul(a, jets.inv(a)), jets.const(1.0, 4))
    assert np.allclose(jets.power(a, -2), jets.mul(jets.inv(a), jets.inv(a)))
    assert np.allclose(jets.dy(a), [0.5, -0.6, 0.3])


# ---- rational functions ---------------------------------------------------

def test_reciprocal_times_x_is_one():
    x = RationalFunction(poly=np.array([[0.0], [1.0]]))
    f = pole(0.0) * x
    assert f.max_order == 0 or np.abs(f.parts).max() == 0
    assert abs(f.evaluate(2.7) - 1) < 1e-15


def test_derivative_and_antiderivative():
    f = pole(1.0, 2.0)
    df = f.diff()
    assert abs(df.evaluate(3.0) - (-2 / 4)) < 1e-15
    F = pole(1.0, -2.0, order=2).antiderivative()
    assert abs(F.evaluate(0.3 + 0.2j) - 2 / (0.3 + 0.2j - 1)) < 1e-14


def test_log_obstruction():
    with pytest.raises(ObstructionError) as info:
        pole(0.0).antiderivative()
    assert abs(info.value.magnitude - 1) < 1e-15


def test_nearly_coincident_poles_rejected():
    with pytest.raises(DegeneracyError):
        pole(0.0) + pole(1e-11)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_evaluation_is_a_homomorphism(seed):
    rng = np.random.default_rng(seed)
    f, g = random_rational(rng), random_rational(rng)
    z = 3 + 2j
    prod = (f * g).evaluate(z)
    assert abs(prod - f.evaluate(z) * g.evaluate(z)) < 1e-12 * max(1.0, abs(prod))
    assert abs((f + g).evaluate(z) - f.evaluate(z) - g.evaluate(z)) < 1e-12 * max(1.0, abs(prod))


def test_dy_matches_taylor_shift():
    J = 5
    a = np.array([0.5, 0.3, -0.2, 0.1, 0.05], complex)
    c = np.array([1.0, -0.4, 0.2, 0.0, 0.1], complex)
    f = RationalFunction.pole_term(a, c, 1, J)
    h, x = 1e-4, 0.1 + 0.7j
    fd = (f.evaluate(x, h) - f.evaluate(x, -h)) / (2 * h)
    assert abs(f.dy().evaluate(x) - fd) < 1e-7


def test_dict_round_trip(rng):
    f = random_rational(rng, 3)
    g = RationalFunction.from_dict(f.to_dict())
    assert abs(g.evaluate(0.2 + 0.1j, 0.05) - f.evaluate(0.2 + 0.1j, 0.05)) < 1e-14


# ---- particle jets and u -------------------------------------------------

def test_particle_jets_follow_the_flow():
    xj = cm_jets(THREE, 4)
    acc = 2 * cm_rhs(THREE)
    assert np.allclose(xj[:, 1], np.sqrt(2) * THREE.momenta)
    assert np.allclose(2 * xj[:, 2], acc)


def test_cm_u_local_data():
    u = cm_u(CMState(0.0, [0.0], [0.0]))
    assert abs(u.evaluate(0.5) - 8) < 1e-14
    v, w = local_vw(CMState(0.0, [0.0, 1.0], [0.0, 0.0]))
    assert np.allclose(v, [2, 2]) and np.allclose(w, [4, -4])
    # in KP time the particles obey x'' = 2 w
    xj = cm_jets(THREE, 3)
    assert np.allclose(2 * xj[:, 2], 2 * local_vw(THREE)[1])


# ---- wave recursion ------------------------------------------------------

def test_first_coefficient_is_log_derivative():
    ws = wave_series(TWO, 1)
    xi1 = ws.xi[1]
    for x in (0.3 + 0.2j, -1.1):
        assert abs(xi1.evaluate(x) - (-1 / x - 1 / (x - 1))) < 1e-14


def test_two_particle_recursion_closes():
    ws = wave_series(TWO, 6)
    assert ws.max_obstruction() < 1e-14
    for xi in ws.xi[1:]:
        assert xi.max_order <= 1


def test_perturbed_rate_obstructs_at_step_two():
    with pytest.raises(ObstructionError) as info:
        wave_series(TWO, 6, rate_shift=[1e-3, 0.0])
    assert info.value.step == 2
    assert 0.5e-3 < info.value.magnitude < 2e-3


def test_obstruction_matches_local_formula():
    ws = wave_series(THREE, 4, strict=False, rate_shift=[1e-3, 0.0, -2e-3])
    for s in range(1, 4):
        for i in range(3):
            local = obstruction_from_laurent(ws.xi[s], ws.u, i)
            assert abs(local[0] - ws.residues[s][i, 0]) < 1e-12


def test_series_dump_is_json():
    import json
    d = json.loads(wave_series(TWO, 2).dump())
    assert len(d["xi"]) == 3


# ---- pseudo-differential operators ---------------------------------------

def test_d_times_inverse_d():
    one = PsiDO.d(1, 1) * PsiDO.d(-1, 1)
    assert abs(one.coeff(0).evaluate(0.3) - 1) < 1e-15
    assert all(one.coeff(j).max_abs() == 0 for j in one.coeffs if j != 0)


def test_adjoint_is_an_involution(rng):
    A = random_psido(rng, 1, 4, depth=8)
    assert (A.adjoint().adjoint() - A).max_abs() < 1e-10 * A.max_abs()


def test_associativity(rng):
    A, B, C = (random_psido(rng, o, 3, depth=8) for o in (1, 0, -1))
    lhs = (A * B) * C
    assert max_coefficient_difference(lhs, A * (B * C)) < 1e-12 * max(1.0, lhs.max_abs())


def test_truncation_errors():
    P = PsiDO.d(2, 1, depth=1)
    with pytest.raises(TruncationError):
        P.res()
    ws = wave_series(TWO, 3)
    with pytest.raises(TruncationError):
        f_residues(lax_operator(wave_operator(ws)), 4)


def test_wave_operator_and_lax():
    ws = wave_series(TWO, 6)
    phi = wave_operator(ws)
    assert wave_operator(wave_series(TWO, 0)).coeffs.keys() == {0}
    assert (phi * phi.inverse() - PsiDO.identity(phi.jet_length, phi.depth)).max_abs() < 1e-12
    L = lax_operator(phi)
    assert L.order == 1 and abs(L.coeff(1).evaluate(0.4) - 1) < 1e-15
    assert L.coeff(0).max_abs() < 1e-14
    assert (u_from_lax(L) - ws.u.with_jet_length(L.jet_length)).chop(0.0).max_abs() < 1e-13


@pytest.mark.parametrize("state", [TWO, THREE])
def test_residues_of_lax_powers(state):
    ws = wave_series(state, 6)
    Fs = f_residues(lax_operator(wave_operator(ws)), 4)
    assert all(F.pole_order() <= 2 for F in Fs)
    u = ws.u.with_jet_length(Fs[0].jet_length)
    assert (Fs[0] + u.scale(0.5)).chop(0.0).max_abs() < 1e-13
    assert pairing_residual(ws, 4) < 1e-12
    assert dual_pairing(ws, 2)[1].max_abs() < 1e-14


def test_lax_commutator():
    ws = wave_series(TWO, 6)
    assert lax_commutator_residual(ws, 1) < 1e-14
    assert lax_commutator_residual(ws, 2) < 1e-11
    bad = wave_series(TWO, 6, strict=False, rate_shift=[1e-3, 0.0])
    assert lax_commutator_residual(bad, 3) > 1e-4


def test_conjugation_invariance():
    ws = wave_series(THREE, 6)
    assert conjugation_residual(ws, 0.7 + 0.2j, 4) < 1e-12


def test_dickey_identity(rng):
    D1, D2 = random_psido(rng, 1, 6, depth=8), random_psido(rng, 2, 6, depth=8)
    a, b = dickey_sides(D1, D2)
    assert (a - b).chop(0.0).max_abs() < 1e-12 * max(1.0, b.max_abs())
