import cmath
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from bzpiii import bianchi as bz
from bzpiii import laxpair as lax
from bzpiii import linalg as la
from bzpiii.errors import DomainError, PoleCollision

R_VII0 = bz.r_from_c(bz.c_matrix(bz.BIANCHI_VII0))
vec = lambda m: np.asarray(m, dtype=complex).ravel(order="F")


def random_data(rng):
    t = rng.uniform(0.5, 3)
    a = rng.uniform(0.5, 3)
    gamma = np.diag([a, t * t / a])
    gammadot = np.diag([rng.normal(), rng.normal()])
    C = bz.SymmetricC(*rng.normal(size=3))
    lam = complex(rng.normal(), rng.normal())
    return t, lam, gamma, gammadot, bz.r_from_c(C)


def test_lsh_t_rhs_examples():
    phi = np.array([[1.0, 2.0], [3.0, 4.0]])
    gamma = np.diag([2.0, 2.0])
    np.testing.assert_array_equal(lax.lsh_t_rhs(2.0, 1.0, gamma, phi, np.zeros((2, 2))), 0)
    t = 1.7
    np.testing.assert_allclose(lax.lsh_t_rhs(t, 0.4, t * la.I2, la.I2, R_VII0), 0, atol=1e-15)
    with pytest.raises(DomainError):
        lax.lsh_t_rhs(1.0, 0.0, gamma, phi, R_VII0)


def test_lsh_t_rhs_against_symbolic_substitution():
    t, lam = sp.Rational(2), sp.Rational(1)
    gamma = sp.diag(3, t**2 / 3)
    R = sp.Matrix([[0, 1], [-1, 0]])
    expected = (t / lam) * (gamma * R.T * gamma.inv() - R.T)
    got = lax.lsh_t_rhs(2.0, 1.0, np.diag([3.0, 4.0 / 3.0]), la.I2, R_VII0)
    np.testing.assert_allclose(got, np.array(expected, dtype=float), atol=1e-15)
    assert np.max(np.abs(got)) > 1


def test_lsh_lambda_rhs_examples(rng):
    t, lam = 1.3, 0.6 + 0.2j
    gamma = np.diag([1.1, t * t / 1.1])
    gdot = np.diag([0.4, 2 * t / 1.1 - t * t * 0.4 / 1.1**2])
    phi = rng.normal(size=(2, 2))
    got = lax.lsh_lambda_rhs(t, lam, gamma, gdot, phi, np.zeros((2, 2)))
    np.testing.assert_allclose(got, 0.5 * (t / lam) * gdot @ la.inv2(gamma) @ phi, atol=1e-15)

    far = lax.lsh_lambda_rhs(t, 1e9, gamma, gdot, phi, R_VII0)
    np.testing.assert_allclose(far, 0.5 * (-R_VII0 @ phi - phi @ R_VII0.T), atol=1e-8)

    for t in (1.0, 2.5):
        out = lax.lsh_lambda_rhs(t, t, t * la.I2, la.I2, la.I2, R_VII0)
        np.testing.assert_allclose(out, 0.5 * la.I2 / t, atol=1e-15)
    with pytest.raises(DomainError):
        lax.lsh_lambda_rhs(1.0, 0, gamma, gdot, phi, R_VII0)


def test_linearity(rng):
    for _ in range(20):
        t, lam, gamma, gdot, R = random_data(rng)
        p1, p2 = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
        a, b = complex(rng.normal(), rng.normal()), rng.normal()
        for f in (lambda p: lax.lsh_t_rhs(t, lam, gamma, p, R), lambda p: lax.lsh_lambda_rhs(t, lam, gamma, gdot, p, R)):
            lhs = f(a * p1 + b * p2)
            rhs = a * f(p1) + b * f(p2)
            assert np.max(np.abs(lhs - rhs)) <= 1e-13 * max(1.0, np.max(np.abs(lhs)))


def test_vec4_reproduces_2x2(rng):
    for _ in range(50):
        t, lam, gamma, gdot, R = random_data(rng)
        phi = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        A, B = lax.vec4_connection(t, lam, gamma, gdot, R)
        ref_t = vec(lax.lsh_t_rhs(t, lam, gamma, phi, R))
        ref_l = vec(lax.lsh_lambda_rhs(t, lam, gamma, gdot, phi, R))
        assert np.max(np.abs(A @ vec(phi) - ref_t)) <= 1e-14 * max(1, np.max(np.abs(ref_t)))
        assert np.max(np.abs(B @ vec(phi) - ref_l)) <= 1e-14 * max(1, np.max(np.abs(ref_l)))
        c0, c1, c2 = lax.lambda_coefficients(t, gamma, gdot, R)
        np.testing.assert_allclose(c0 + c1 / lam + c2 / lam**2, B, atol=1e-13)


def test_vec4_bianchi_i_structure():
    t, lam = 1.5, 0.3 + 0.8j
    gamma = np.diag([1.2, t * t / 1.2])
    gdot = np.diag([0.3, 0.9])
    A, B = lax.vec4_connection(t, lam, gamma, gdot, np.zeros((2, 2)))
    np.testing.assert_array_equal(A, 0)
    N = gdot @ la.inv2(gamma)
    np.testing.assert_allclose(B, np.diag(np.tile(np.diag(0.5 * (t / lam) * N), 2)), atol=1e-15)


def test_vec4_lambda_coefficient_shape():
    t, lam = 2.0, 0.9 - 0.3j
    gamma, gdot = t * la.I2, la.I2
    _, B = lax.vec4_connection(t, lam, gamma, gdot, R_VII0)
    S = 0.5 * (-R_VII0 + (t / lam) * gdot @ la.inv2(gamma) - (t / lam) ** 2 * R_VII0.T)
    coeff = 0.5 * ((t / lam) ** 2 - 1)
    np.testing.assert_allclose(B - la.kron(la.I2, S), coeff * la.kron(R_VII0, la.I2), atol=1e-15)
    _, b_lit = lax.zcn_literal(t, lam, gamma, gdot, R_VII0)
    np.testing.assert_allclose(b_lit - la.kron(S, la.I2), coeff * la.kron(la.I2, R_VII0), atol=1e-15)


def test_zcn_report_is_stable_and_complete():
    C = bz.c_matrix(bz.BIANCHI_VI0)
    r1 = lax.zcn_comparison(bz.r_from_c(C))
    r2 = lax.zcn_comparison(bz.r_from_c(C))
    assert r1 == r2
    assert len(r1) == 6
    assert {r["matrix"] for r in r1} == {"A_hat", "B_hat"}
    by_term = {(r["matrix"], r["term"]): r for r in r1}
    assert not any(r["role_consistent"] for r in r1)
    assert by_term[("A_hat", "x * (gamma R^T gamma^-1) kron I2")]["status"] == "match-row-stacking-only"
    assert by_term[("A_hat", "x * I2 kron R^T")]["status"] == "mismatch"
    assert by_term[("B_hat", "1/2 (-R + x N - x^2 M) kron I2")]["status"] == "match-row-stacking-only"
    assert by_term[("B_hat", "1/2 (x^2 - 1) I2 kron R")]["status"] == "match-row-stacking-only"


def test_zcn_sign_term_agrees_only_for_antisymmetric_r():
    recs = lax.zcn_comparison(R_VII0)
    term = next(r for r in recs if r["term"] == "x * I2 kron R^T")
    assert term["status"] == "match-row-stacking-only"
    whole = next(r for r in recs if r["matrix"] == "A_hat" and r["term"] == "whole matrix")
    assert whole["status"] == "match-row-stacking-only"


def test_rectangle_bianchi_i():
    conn = lax.LshConnection(bz.kasner_gamma(0.5), np.zeros((2, 2)))
    assert lax.rectangle_transport_residual(conn, 1.0, 2.0, 1 + 1j, 2 + 1j) <= 1e-8


def test_rectangle_on_orbit_and_off(vii0_orbit):
    _, R, gt = vii0_orbit
    conn = lax.LshConnection(gt, R)
    assert lax.rectangle_transport_residual(conn, 1.2, 2.2, 1 + 1j, 2 + 1j) <= 1e-7
    assert lax.rectangle_transport_residual(conn, 1.5, 2.5, -0.5 - 1j, 1.5 + 0.5j) <= 1e-7
    bad = lax.LshConnection(bz.PerturbedGamma(gt, 0.01), R)
    assert lax.rectangle_transport_residual(bad, 1.2, 2.2, 1 + 1j, 2 + 1j) >= 1e-3
    with pytest.raises(DomainError):
        lax.rectangle_transport_residual(conn, 1.2, 2.2, -1 - 1j, 1 + 1j)


def test_vec4_transport_equals_2x2(vii0_orbit):
    _, R, gt = vii0_orbit
    conn = lax.LshConnection(gt, R)
    phi0 = np.array([[1.0, 0.5j], [-0.2, 2.0]])
    a = lax.transport_t(conn, 0.7 + 0.3j, 1.1, 2.9, phi0)
    b = lax.transport_t(conn, 0.7 + 0.3j, 1.1, 2.9, phi0, vec4=True)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))
    a = lax.transport_lambda(conn, 1.7, 0.5 + 1j, 2 - 0.5j, phi0)
    b = lax.transport_lambda(conn, 1.7, 0.5 + 1j, 2 - 0.5j, phi0, vec4=True)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


@pytest.mark.parametrize("s", [0.5, 0.3, 1.2])
def test_holonomy_bianchi_i_closed_form(s):
    conn = lax.LshConnection(bz.kasner_gamma(s), np.zeros((2, 2)))
    h = lax.holonomy(conn, 2.0)
    expected = np.array([cmath.exp(1j * math.pi * s), cmath.exp(1j * math.pi * (2 - s))] * 2)
    np.testing.assert_allclose(np.diag(h.matrix), expected, atol=1e-9)
    np.testing.assert_allclose(h.matrix - np.diag(np.diag(h.matrix)), 0, atol=1e-12)
    assert h.liouville_defect <= 1e-8


def test_holonomy_identity_connection():
    class Frozen(bz.GammaSource):
        span = (0.5, 3.0)

        def gamma(self, t):
            return np.diag([2.0, 3.0])

        def gammadot(self, t):
            return np.zeros((2, 2))

    h = lax.holonomy(lax.LshConnection(Frozen(), np.zeros((2, 2))), 1.0)
    np.testing.assert_allclose(h.matrix, la.I4, atol=1e-14)


def test_holonomy_properties(vii0_orbit):
    _, R, gt = vii0_orbit
    conn = lax.LshConnection(gt, R)
    h1 = lax.holonomy(conn, 2.0, radius=1.0)
    assert h1.steps <= lax.HOLONOMY_MAX_STEPS
    assert h1.error <= 1e-8
    assert h1.liouville_defect <= 1e-8
    h_small = lax.holonomy(conn, 2.0, radius=0.5)
    h_big = lax.holonomy(conn, 2.0, radius=2.0)
    assert abs(h_small.trace - h_big.trace) <= 1e-6 * abs(h_big.trace)
    shifted = lax.holonomy(conn, 2.0, theta0=1.234)
    assert abs(shifted.trace - h1.trace) <= 1e-12 * abs(h1.trace) + 1e-9
    with pytest.raises(DomainError):
        lax.holonomy(conn, 2.0, radius=0.0)


def test_holonomy_base_point_trace_exact(vii0_orbit):
    _, R, gt = vii0_orbit
    conn = lax.LshConnection(gt, R)
    a = lax.holonomy(conn, 1.5, steps=512)
    b = lax.holonomy(conn, 1.5, steps=512, theta0=2 * math.pi / 1024 * 16)
    assert abs(a.trace - b.trace) <= 1e-12 * abs(a.trace)


def test_trace_drift(vii0_orbit):
    _, R, gt = vii0_orbit
    ts = np.linspace(1, 3, 5)
    for s in (0.5, 0.3):
        kas = lax.holonomy_trace_drift(lax.LshConnection(bz.kasner_gamma(s), np.zeros((2, 2))), ts)
        assert kas.max_relative_drift <= 1e-8
        assert kas.trace[0] == pytest.approx(2 * (cmath.exp(1j * math.pi * s) + cmath.exp(1j * math.pi * (2 - s))), abs=1e-9)
    orbit = lax.holonomy_trace_drift(lax.LshConnection(gt, R), ts)
    assert orbit.max_relative_drift <= 1e-5
    bad = lax.holonomy_trace_drift(lax.LshConnection(bz.PerturbedGamma(gt, 0.01), R), ts)
    assert bad.max_relative_drift >= 1e-2


def test_characteristic_fixed_point_and_w():
    path = [(2.0, 0.0), (2.5, 0.0), (2.5, 0.7), (3.0, 0.9)]
    zero = lax.bz_characteristic(path, 0.0)
    assert np.all(zero.lam == 0)
    for lam0 in (0.3 + 0.2j, 5 + 1j, -7.0 + 0.1j):
        ch = lax.bz_characteristic(path, lam0)
        assert ch.w_drift <= 1e-8


def test_characteristic_follows_w_level_set():
    # sigma = t = xi - eta, beta = z = xi + eta; w fixed gives lam^2 + 2 (beta - w) lam + sigma^2 = 0
    lam0 = 0.4 + 0.3j
    areal = lax.ArealFunction()
    w = areal.spectral_w(2.0, -0.5, lam0)
    ch = lax.bz_characteristic([(2.0, -0.5), (3.5, -0.5)], lam0)
    prev = lam0
    for xi, eta, lam in zip(ch.xi, ch.eta, ch.lam):
        sig, beta = xi - eta, xi + eta
        roots = np.roots([1.0, 2 * (beta - w), sig * sig])
        root = roots[np.argmin(np.abs(roots - prev))]
        assert abs(lam - root) <= 1e-8 * max(1, abs(root))
        prev = root


def test_pole_collision():
    with pytest.raises(PoleCollision):
        lax.bz_characteristic([(2.0, 0.0), (2.5, 0.0)], 2.0 * (1 + 1e-7))


def test_bz_transport_lambda_zero_reproduces_g(vii0_orbit):
    _, _, gt = vii0_orbit
    field_ = bz.assemble_metric(bz.BIANCHI_VII0, gt, np.linspace(1, 3, 5), np.linspace(0, 1, 5))
    path = [lax.tz_to_null(1.5, 0.0), lax.tz_to_null(2.5, 0.0), lax.tz_to_null(2.5, 1.0), lax.tz_to_null(1.8, 0.4)]
    res = lax.bz_transport(field_, path, 0.0, field_.g_at(1.5, 0.0))
    for t, z, psi in zip(res.t, res.z, res.psi):
        assert np.max(np.abs(psi - field_.g_at(t, z))) <= 1e-7


def test_bz_transport_path_independence(vii0_orbit):
    _, _, gt = vii0_orbit
    field_ = bz.assemble_metric(bz.BIANCHI_VII0, gt, np.linspace(1, 3, 5), np.linspace(0, 1, 5))
    start, end = lax.tz_to_null(1.5, 0.0), lax.tz_to_null(2.5, 0.6)
    p1 = [start, (end[0], start[1]), end]
    p2 = [start, (start[0], end[1]), end]
    for lam0 in (0.3 + 0.2j, 5 + 1j):
        a = lax.bz_transport(field_, p1, lam0, la.I2)
        b = lax.bz_transport(field_, p2, lam0, la.I2)
        assert abs(a.lam[-1] - b.lam[-1]) <= 1e-9
        assert np.max(np.abs(a.psi_end - b.psi_end)) <= 1e-6


def test_bz_transport_large_lambda_bianchi_i():
    k = bz.kasner_gamma(0.5, (0.5, 5.0))
    field_ = bz.assemble_metric(bz.BIANCHI_I, k, np.linspace(1, 3, 5), np.linspace(0, 1, 5))
    # a z-leg carries A/(lam - t) + B/(lam + t) ~ 2A/lam, so psi - I is O(1/lam)
    path = [lax.tz_to_null(1.5, 0.0), lax.tz_to_null(1.5, 1.0), lax.tz_to_null(2.5, 1.0)]
    scaled = []
    for lam0 in (20.0, 40.0, 80.0, 160.0):
        psi = lax.bz_transport(field_, path, lam0, la.I2).psi_end
        scaled.append(np.max(np.abs(psi - la.I2)) * lam0)
    assert max(scaled) / min(scaled) <= 1.5
    assert max(scaled) <= 3.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(-2.0, 2.0))
def test_tz_null_round_trip(t, z):
    xi, eta = lax.tz_to_null(t, z)
    assert xi - eta == pytest.approx(t, rel=1e-15, abs=1e-15)
    assert xi + eta == pytest.approx(z, rel=1e-15, abs=1e-15)
