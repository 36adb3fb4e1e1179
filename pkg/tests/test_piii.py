import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from bzpiii import piii
from bzpiii.errors import DomainError, OutOfSpan
from bzpiii.ode import StepControl, Trajectory, evaluate

TIGHT = StepControl(rtol=1e-12, atol=1e-14)


def test_params_from_ck_examples():
    p = piii.params_from_ck(piii.CkParams(1, 1))
    assert (p.alpha, p.beta, p.gamma, p.delta) == (-2.0, 2.0, 0.0, 0.0)
    p = piii.params_from_ck(piii.CkParams(0, 0))
    assert (p.alpha, p.beta) == (0.0, 0.0)
    p = piii.params_from_ck(piii.CkParams(1, 0))
    assert (p.alpha, p.beta) == (-2.0, 0.0)


coupling = st.floats(-50, 50).filter(lambda x: x == 0 or abs(x) > 1e-100)


@given(coupling, coupling)
def test_parameter_signs_and_inverse(c, k):
    p = piii.params_from_ck(piii.CkParams(c, k))
    assert p.alpha <= 0 <= p.beta
    back = p.to_ck()
    assert back.c >= 0 and back.k >= 0
    assert back.c == pytest.approx(abs(c), rel=1e-14, abs=1e-300)
    assert back.k == pytest.approx(abs(k), rel=1e-14, abs=1e-300)


def test_piii_params_validation():
    with pytest.raises(DomainError):
        piii.PiiiParams(1.0, 2.0)
    with pytest.raises(DomainError):
        piii.PiiiParams(-1.0, -2.0)
    with pytest.raises(DomainError):
        piii.PiiiParams(-1.0, 2.0, gamma=1.0)


def test_rhs_spiii_examples():
    free = piii.PiiiParams(0.0, 0.0)
    sym = piii.PiiiParams(-2.0, 2.0)
    for tau in (0.3, 1.0, 7.0):
        assert piii.rhs_spiii(tau, tau, 1.0, free) == pytest.approx(0.0, abs=1e-15)
        assert piii.rhs_spiii(tau, 1.0, 0.0, sym) == 0.0
    assert piii.rhs_spiii(1.0, 2.0, 0.0, sym) == -6.0
    with pytest.raises(DomainError):
        piii.rhs_spiii(0.0, 1.0, 0.0, sym)
    with pytest.raises(DomainError):
        piii.rhs_spiii(1.0, 0.0, 0.0, sym)


def test_rhs_pgen_matches_symbolic_expansion(rng):
    t, c, k = sp.symbols("t c k", positive=True)
    a = sp.Function("a")(t)
    lhs = sp.diff(t * sp.diff(a, t) / a, t) / t
    eq = sp.Eq(lhs, k**2 * t**2 / a**2 - c**2 * a**2 / t**2)
    dda = sp.solve(eq, sp.diff(a, t, 2))[0]
    A, DA = sp.symbols("A DA")
    dda = sp.lambdify((t, A, DA, c, k), dda.subs(sp.diff(a, t), DA).subs(a, A))
    for _ in range(50):
        tt, aa, da, cc, kk = rng.uniform(0.2, 3, 5) * [1, 1, rng.choice([-1, 1]), 1, 1]
        ck = piii.CkParams(cc, kk)
        assert piii.rhs_pgen(tt, aa, da, ck) == pytest.approx(dda(tt, aa, da, cc, kk), rel=1e-12)
    with pytest.raises(DomainError):
        piii.rhs_pgen(0.0, 1.0, 0.0, piii.CkParams(1, 1))
    with pytest.raises(DomainError):
        piii.rhs_pgen(1.0, 0.0, 0.0, piii.CkParams(1, 1))


def test_pgen_residual_kasner():
    ck = piii.CkParams(0.0, 0.0)
    for s in (-0.4, 0.5, 1.7):
        for t in (0.5, 2.0, 9.0):
            a, da, dda = t**s, s * t ** (s - 1), s * (s - 1) * t ** (s - 2)
            assert abs(piii.pgen_residual(t, a, da, dda, ck)) <= 1e-14


def test_transform_examples():
    s = piii.transform_a_to_u(3.0, 3.0, 1.0)
    assert (s.tau, s.u, s.du) == (2.25, 1.0, pytest.approx(0.0, abs=1e-16))
    s = piii.transform_a_to_u(1.0, 1.0, 2.0)
    assert (s.tau, s.u, s.du) == (0.25, 1.0, 4.0)
    with pytest.raises(DomainError):
        piii.transform_a_to_u(0.0, 1.0, 1.0)
    q = piii.transform_u_to_q(piii.PiiiState(1.0, 1.0, 0.0))
    assert (q.q, q.dq) == (0.0, 0.0)
    q = piii.transform_u_to_q(piii.PiiiState(1.0, math.e, math.e))
    assert q.q == pytest.approx(1.0, abs=1e-16) and q.dq == 1.0
    with pytest.raises(DomainError):
        piii.PiiiState(1.0, -1.0, 0.0)


@settings(max_examples=200)
@given(st.floats(0.05, 20), st.floats(0.01, 20), st.floats(-10, 10))
def test_transform_round_trips(t, a, da):
    s = piii.transform_a_to_u(t, a, da)
    t2, a2, da2 = piii.transform_u_to_a(s)
    assert t2 == pytest.approx(t, rel=1e-14)
    assert a2 == pytest.approx(a, rel=1e-14)
    assert da2 == pytest.approx(da, rel=1e-12, abs=1e-12 * (abs(a) / t + 1))
    q = piii.transform_u_to_q(s)
    back = piii.transform_q_to_u(q)
    assert back.u == pytest.approx(s.u, rel=1e-15)
    assert back.du == pytest.approx(s.du, rel=1e-15, abs=1e-300)


def test_rhs_symp_examples():
    one = piii.CkParams(1, 1)
    assert piii.rhs_symp(2.0, 0.0, 0.0, one) == 0.0
    assert piii.rhs_symp(1.0, math.log(2), 0.0, one) == pytest.approx(-3.0, rel=1e-15)
    for q in (-1.0, 0.3, 2.0):
        assert piii.rhs_symp(1.7, q, 0.0, one) == pytest.approx(-4 * math.sinh(q) / 1.7, rel=1e-14)
    assert piii.rhs_symp(2.0, 0.7, 0.4, piii.CkParams(0, 0)) == -0.2
    with pytest.raises(DomainError):
        piii.rhs_symp(0.0, 0.0, 0.0, one)


def test_solve_power_law():
    tr = piii.solve_piii(piii.PiiiParams(0.0, 0.0), piii.PiiiState(1.0, 1.0, 1.0), 10.0)
    taus = np.linspace(1, 10, 200)
    assert np.max(np.abs(tr(taus)[:, 0] - taus)) <= 1e-9
    assert max(piii.residual_piii(tr, tr.meta["params"], x) for x in np.linspace(1.01, 9.99, 100)) <= 1e-8


def test_solve_equilibrium():
    p = piii.params_from_ck(piii.CkParams(1, 1))
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 1.0, 0.0), 100.0)
    assert np.max(np.abs(tr.states[:, 0] - 1.0)) <= 1e-10
    assert max(piii.residual_piii(tr, p, x) for x in np.linspace(1.01, 99.0, 50)) <= 1e-10


def test_generic_orbit_residual_default_tolerances():
    p = piii.params_from_ck(piii.CkParams(1, 1))
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 2.0, 0.0), 20.0)
    assert tr.event is None
    taus = np.linspace(1.0005, 19.99, 600)
    assert max(piii.residual_piii(tr, p, x) for x in taus) <= 1e-6


def test_orbit_against_mpmath():
    mpmath.mp.dps = 25
    f = mpmath.odefun(lambda tau, y: [y[1], y[1] ** 2 / y[0] - y[1] / tau + (-2 * y[0] ** 2 + 2) / tau], 1, [2, 0])
    p = piii.params_from_ck(piii.CkParams(1, 1))
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 2.0, 0.0), 4.0, TIGHT)
    for tau in (1.5, 2.5, 4.0):
        assert abs(tr(tau)[0] - float(f(tau)[0])) <= 1e-10


def test_corrupted_trajectory_is_detected():
    p = piii.params_from_ck(piii.CkParams(1, 1))
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 2.0, 0.0), 10.0)
    bad = Trajectory(tr.times, tr.states * 1.01, tr.derivs * 1.01)
    assert min(piii.residual_piii(bad, p, x) for x in np.linspace(1.1, 9.9, 100)) >= 1e-3


def test_movable_singularity_event():
    p = piii.params_from_ck(piii.CkParams(1, 0))
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 1e-3, -1.0), 10.0)
    assert tr.event == piii.MOVABLE_SINGULARITY
    assert tr.y_last[0] == pytest.approx(piii.U_FLOOR, rel=1e-6)
    assert np.all(tr.states[:, 0] > 0)
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 1.0, 0.0), 10.0, u_ceiling=1.5, u_floor=0.9)
    assert tr.event == piii.MOVABLE_SINGULARITY


def test_residual_out_of_span():
    p = piii.params_from_ck(piii.CkParams(1, 1))
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 2.0, 0.0), 2.0)
    with pytest.raises(OutOfSpan):
        piii.residual_piii(tr, p, 1.0)
    with pytest.raises(DomainError):
        piii.solve_piii(p, piii.PiiiState(1.0, 2.0, 0.0), -1.0)


def test_log_equivalence():
    for c, k in [(1, 1), (1, 0), (0.5, 2)]:
        ck = piii.CkParams(c, k)
        tr = piii.solve_piii(piii.params_from_ck(ck), piii.PiiiState(1.0, 1.5, 0.2), 8.0)
        qtr = piii.q_trajectory(tr)
        assert max(piii.residual_symp(qtr, ck, x) for x in np.linspace(1.01, 7.99, 200)) <= 1e-6


def test_reflection_symmetry():
    ck = piii.CkParams(1, 1)
    for q0 in (0.4, 1.3):
        a = piii.solve_symp(ck, piii.SinhState(1.0, q0, 0.0), 30.0, TIGHT)
        b = piii.solve_symp(ck, piii.SinhState(1.0, -q0, 0.0), 30.0, TIGHT)
        taus = np.linspace(1, 30, 300)
        assert np.max(np.abs(a(taus)[:, 0] + b(taus)[:, 0])) <= 1e-8


def test_asymptotic_probe():
    free = piii.PiiiParams(0.0, 0.0)
    tr = piii.solve_piii(free, piii.PiiiState(1.0, 1.0, 1.0), 100.0)
    fit = piii.asymptotic_probe(tr, (2.0, 90.0))
    assert fit.exponent == pytest.approx(1.0, abs=1e-6)
    assert fit.amplitude == pytest.approx(1.0, abs=1e-6)
    sym = piii.params_from_ck(piii.CkParams(1, 1))
    tr = piii.solve_piii(sym, piii.PiiiState(1.0, 1.0, 0.0), 100.0)
    assert abs(piii.asymptotic_probe(tr, (2.0, 90.0)).exponent) <= 1e-10
    with pytest.raises(OutOfSpan):
        piii.asymptotic_probe(tr, (0.5, 50.0))


def test_generic_orbit_approaches_equilibrium():
    sym = piii.params_from_ck(piii.CkParams(1, 1))
    for u0, du0 in [(2.0, 0.0), (0.3, 0.5), (5.0, -1.0)]:
        tr = piii.solve_piii(sym, piii.PiiiState(1.0, u0, du0), 2000.0)
        assert tr.event is None
        assert abs(piii.asymptotic_probe(tr, (1000.0, 2000.0)).exponent) <= 0.05


def test_u_positive_until_event():
    p = piii.params_from_ck(piii.CkParams(1, 1))
    tr = piii.solve_piii(p, piii.PiiiState(1.0, 0.05, 3.0), 50.0)
    assert np.all(tr.states[:, 0] > 0)
    assert np.all(evaluate(tr, np.linspace(*tr.span, 1000))[:, 0] > 0)
