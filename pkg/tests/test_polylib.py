from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as L

from hdivdg import polylib


def leg_poly(n):
    c = np.zeros(n + 1)
    c[n] = 1.0
    return L.Legendre(c)


def chi_oracle(p):
    """(x^2 - 1) P'_{p-1} built with numpy's Legendre class."""
    return leg_poly(p - 1).deriv() * L.Legendre([-2 / 3, 0, 2 / 3])  # x^2 - 1 = (2/3)(P2 - P0)


# -- legendre_eval -------------------------------------------------------------


def test_legendre_p0():
    assert polylib.legendre_eval(0, 0.37) == (1.0, 0.0)


def test_legendre_p2_closed_form():
    v, d = polylib.legendre_eval(2, 0.5)
    assert v == pytest.approx(-0.125, abs=1e-15)
    assert d == pytest.approx(1.5, abs=1e-15)


def test_legendre_p2_norm():
    x, w = np.polynomial.legendre.leggauss(16)
    v, _ = polylib.legendre_eval(2, x)
    assert w @ v**2 == pytest.approx(0.4, rel=1e-14)


@given(st.integers(0, 30), st.floats(-1, 1))
def test_legendre_matches_numpy(n, x):
    v, d = polylib.legendre_eval(n, x)
    P = leg_poly(n)
    assert v == pytest.approx(P(x), abs=1e-12)
    assert d == pytest.approx(P.deriv()(x), abs=1e-9 * max(1, n * n))


# -- Gauss-Lobatto -------------------------------------------------------------


def test_lobatto_two_and_three_nodes():
    np.testing.assert_allclose(polylib.gauss_lobatto(2).nodes, [-1, 1])
    np.testing.assert_allclose(polylib.gauss_lobatto(3).nodes, [-1, 0, 1], atol=1e-16)


def _bisect(f, a, b):
    for _ in range(200):
        m = 0.5 * (a + b)
        if np.sign(f(m)) == np.sign(f(a)):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def test_lobatto_four_nodes_against_bisection():
    dP3 = leg_poly(3).deriv()
    root = _bisect(dP3, 0.1, 0.9)
    nodes = polylib.gauss_lobatto(4).nodes
    np.testing.assert_allclose(nodes[1:3], [-root, root], atol=1e-14)
    assert root == pytest.approx(1 / np.sqrt(5), abs=1e-14)


@pytest.mark.parametrize("n", [2, 3, 5, 8, 17, 33, 64])
def test_lobatto_rule_invariants(n):
    rule = polylib.gauss_lobatto(n)
    x, w = rule.nodes, rule.weights
    assert x[0] == -1 and x[-1] == 1
    assert np.all(np.diff(x) > 0)
    np.testing.assert_allclose(x, -x[::-1], atol=1e-14)
    assert w.sum() == pytest.approx(2, abs=1e-13)
    assert np.all(w > 0)
    if n > 2:
        _, dp = polylib.legendre_eval(n - 1, x[1:-1])
        assert np.max(np.abs(dp)) / (n * (n - 1) / 2) < 1e-13


def test_lobatto_cap():
    with pytest.raises(ValueError):
        polylib.gauss_lobatto(polylib.MAX_NODES + 1)
    with pytest.raises(ValueError):
        polylib.gauss_lobatto(1)


@pytest.mark.parametrize("n", [2, 3, 4, 6, 10, 20])
def test_lobatto_quadrature_exactness(n):
    rule = polylib.gauss_lobatto(n)
    for k in range(2 * n - 2):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert rule.weights @ rule.nodes**k == pytest.approx(exact, abs=1e-12)


# -- chi -----------------------------------------------------------------------


def test_chi_two_is_x2_minus_1():
    assert polylib.chi_eval(2, 0.0) == pytest.approx(-1.0)
    xs = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(polylib.chi_eval(2, xs), xs**2 - 1, atol=1e-15)


def test_chi_three_at_half():
    assert polylib.chi_eval(3, 0.5) == pytest.approx(-1.125, abs=1e-15)
    assert chi_oracle(3)(0.5) == pytest.approx(-1.125, abs=1e-14)


@pytest.mark.parametrize("p", range(2, 13))
def test_chi_vanishes_at_nodes(p):
    nodes = polylib.gauss_lobatto(p).nodes
    assert np.max(np.abs(polylib.chi_eval(p, nodes))) < 1e-11


@pytest.mark.parametrize("p", range(2, 13))
def test_chi_legendre_expansion(p):
    xs = np.linspace(-1, 1, 41)
    np.testing.assert_allclose(polylib.chi_eval(p, xs), polylib.chi_legendre_form(p, xs), atol=1e-12)
    np.testing.assert_allclose(polylib.chi_eval(p, xs), chi_oracle(p)(xs), atol=1e-11)


@pytest.mark.parametrize("p", range(2, 13))
def test_chi_derivative_identity(p):
    xs = np.linspace(-1, 1, 50)
    Pm1, _ = polylib.legendre_eval(p - 1, xs)
    np.testing.assert_allclose(polylib.chi_derivative(p, xs), (p * p - p) * Pm1, atol=1e-11)


def test_chi_norms_p2_exact():
    l2, h1 = polylib.chi_norms(2)
    assert Fraction(l2).limit_denominator(1000) == Fraction(16, 15)
    assert Fraction(h1).limit_denominator(1000) == Fraction(8, 3)


@pytest.mark.parametrize("p", range(2, 13))
def test_chi_norms_against_quadrature(p):
    x, w = np.polynomial.legendre.leggauss(2 * p)
    chi = chi_oracle(p)
    l2, h1 = polylib.chi_norms(p)
    assert l2 == pytest.approx(w @ chi(x) ** 2, rel=1e-12)
    assert h1 == pytest.approx(w @ chi.deriv()(x) ** 2, rel=1e-12)


# -- interpolation ------------------------------------------------------------


@pytest.mark.parametrize("p", [2, 3, 4, 7, 12])
def test_interp_matrix_structure(p):
    J = polylib.interp_matrix(p).entries
    assert J.shape == (p, p + 1)
    np.testing.assert_allclose(J.sum(axis=1), 1, atol=1e-13)
    fine = polylib.gauss_lobatto(p + 1).nodes
    coarse = polylib.gauss_lobatto(p).nodes
    for i in range(p + 1):
        c = np.zeros(p + 1)
        c[i] = 1
        li = np.polynomial.polynomial.Polynomial.fit(fine, c, p, domain=[-1, 1], window=[-1, 1])
        np.testing.assert_allclose(J[:, i], li(coarse), atol=1e-9)


@pytest.mark.parametrize("p,expected", [(2, 6.0), (3, 10 / 3)])
def test_interp_stability_examples(p, expected):
    mu, lam = polylib.interp_stability_eigs(p)
    assert mu == pytest.approx(expected, rel=1e-10)
    assert lam <= 1 + 1e-12


@pytest.mark.parametrize("p", range(2, 13))
def test_interp_stability_sharp(p):
    mu, lam = polylib.interp_stability_eigs(p)
    assert mu == pytest.approx(2 + 4 / (2 * p - 3), rel=1e-10)
    assert lam <= 1 + 1e-10


def test_interp_error_bound_p2():
    assert polylib.interp_error_bound(2) == pytest.approx(0.4)


def test_interp_error_at_p2_symbolic():
    # u = P_2 = (3x^2 - 1)/2; I_1 u = 1 on the nodes {-1, 1}; u - 1 = 3(x^2 - 1)/2
    x, w = np.polynomial.legendre.leggauss(6)
    err = w @ (1.5 * (x**2 - 1)) ** 2
    semi = w @ (3 * x) ** 2
    assert err == pytest.approx(12 / 5, rel=1e-14)
    assert semi == pytest.approx(6, rel=1e-14)
    nodes = polylib.gauss_lobatto(3).nodes
    assert polylib.interp_error_ratio(2, leg_poly(2)(nodes)) == pytest.approx(0.4, rel=1e-12)


def test_interp_error_bound_monotone():
    b = [polylib.interp_error_bound(p) for p in range(2, 13)]
    assert all(x > y > 0 for x, y in zip(b, b[1:]))


@pytest.mark.parametrize("p", range(2, 13))
def test_interp_error_constant_sharp(p):
    bound, achieved = polylib.interp_error_constant_check(p)
    assert achieved <= bound + 1e-12
    assert achieved == pytest.approx(bound, rel=1e-10)


@pytest.mark.parametrize("p", range(2, 13))
def test_interp_error_maximiser_is_chi(p):
    # the bound is attained by chi_p (plus any constant)
    nodes = polylib.gauss_lobatto(p + 1).nodes
    ratio = polylib.interp_error_ratio(p, polylib.chi_eval(p, nodes) + 0.3)
    assert ratio == pytest.approx(polylib.interp_error_bound(p), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.lists(st.floats(-1, 1), min_size=11, max_size=11))
def test_interp_error_ratio_below_bound(p, coeffs):
    u = np.asarray(coeffs[: p + 1])
    nodes = polylib.gauss_lobatto(p + 1).nodes
    vals = L.legval(nodes, u)
    _, Lmat = polylib.mass_stiffness_1d(p)
    if vals @ Lmat @ vals < 1e-8:
        return
    assert polylib.interp_error_ratio(p, vals) <= polylib.interp_error_bound(p) * (1 + 1e-9)


@pytest.mark.parametrize("p", range(2, 9))
def test_tensor_stability(p):
    mu, lam = polylib.tensor_stability_eigs(p)
    c = 2 + 4 / (2 * p - 3)
    assert mu == pytest.approx(c**2, rel=1e-8)
    assert lam <= c * (1 + 1e-8)


def test_mass_stiffness_exact():
    M, Lm = polylib.mass_stiffness_1d(3)
    ones = np.ones(4)
    x = polylib.gauss_lobatto(4).nodes
    assert ones @ M @ ones == pytest.approx(2.0, rel=1e-14)
    assert x @ Lm @ x == pytest.approx(2.0, rel=1e-13)
    assert (x**3) @ M @ (x**3) == pytest.approx(2 / 7, rel=1e-13)


def test_lagrange_basis_cardinal():
    nodes = polylib.gauss_lobatto(6).nodes
    np.testing.assert_allclose(polylib.lagrange_basis(nodes, nodes), np.eye(6), atol=1e-13)
    d = polylib.lagrange_basis(nodes, np.array([0.3]), derivative=True)
    assert d.sum() == pytest.approx(0.0, abs=1e-12)
