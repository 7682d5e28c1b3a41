"""One-dimensional Legendre / Gauss--Lobatto kernels.

Everything here works on the interval [-1, 1] unless a function says
otherwise.  The finite element code maps nodes to the unit interval with
:func:`to_unit_interval`.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

MAX_NODES = 64


class RootFindingError(RuntimeError):
    pass


def legendre_eval(n, x):
    """Evaluate the Legendre polynomial ``P_n`` and its derivative.

    Parameters
    ----------
    n : int
        Degree, ``n >= 0``.
    x : float or array_like
        Evaluation points in [-1, 1].

    Returns
    -------
    value, derivative : float or ndarray
        ``P_n(x)`` and ``P_n'(x)``, computed with the three-term recurrence.
    """
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    p0, d0 = np.ones_like(x), np.zeros_like(x)
    if n == 0:
        return _unwrap(p0), _unwrap(d0)
    p1, d1 = x.copy(), np.ones_like(x)
    for k in range(2, n + 1):
        p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        # derivative recurrence: P_k' = P_{k-2}' + (2k-1) P_{k-1}
        d2 = d0 + (2 * k - 1) * p1
        p0, p1, d0, d1 = p1, p2, d1, d2
    return _unwrap(p1), _unwrap(d1)


def _unwrap(a):
    return float(a) if np.ndim(a) == 0 else a


@dataclass(frozen=True)
class GaussLobattoRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def gauss_lobatto(n):
    """Gauss--Lobatto rule with ``n`` nodes on [-1, 1].

    Nodes are the zeros of ``P'_{n-1}(x) (x^2 - 1)``.  Interior nodes are
    found by Newton's method on ``P'_{n-1}`` started from the
    Chebyshev--Gauss--Lobatto points.
    """
    if n < 2:
        raise ValueError("a Gauss-Lobatto rule needs at least 2 nodes")
    if n > MAX_NODES:
        raise ValueError(f"at most {MAX_NODES} nodes are supported in double precision")
    N = n - 1
    x = -np.cos(np.pi * np.arange(n) / N)
    interior = x[1:-1].copy()
    for _ in range(100):
        p, dp = legendre_eval(N, interior)
        # Legendre ODE: (1 - x^2) P'' = 2x P' - N(N+1) P
        d2p = (2 * interior * dp - N * (N + 1) * p) / (1 - interior**2)
        step = dp / d2p
        interior = interior - step
        if np.all(np.abs(step) < 1e-16):
            break
    if n > 2:
        _, res = legendre_eval(N, interior)
        scale = N * (N + 1) / 2  # |P'_N| is at most N(N+1)/2 on [-1, 1]
        if np.max(np.abs(res)) / scale > 1e-13:
            raise RootFindingError(f"Newton iteration did not converge for n={n}")
    nodes = np.concatenate(([-1.0], np.sort(interior), [1.0]))
    nodes = 0.5 * (nodes - nodes[::-1])  # exact symmetry
    pn, _ = legendre_eval(N, nodes)
    weights = 2.0 / (n * (n - 1) * pn**2)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return GaussLobattoRule(n, nodes, weights)


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss--Legendre nodes and weights on [-1, 1] (numpy's ``leggauss``)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def to_unit_interval(x):
    return 0.5 * (np.asarray(x) + 1.0)


def lagrange_basis(nodes, x, derivative=False):
    """Values (or first derivatives) of the Lagrange basis on ``nodes``.

    Returns an array of shape ``x.shape + (len(nodes),)``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    denom = np.prod(diff, axis=1)
    xs = x[..., None] - nodes  # (..., n)
    out = np.empty(x.shape + (n,))
    for i in range(n):
        others = np.delete(np.arange(n), i)
        if not derivative:
            out[..., i] = np.prod(xs[..., others], axis=-1) / denom[i]
        else:
            acc = np.zeros(x.shape)
            for k in others:
                rest = others[others != k]
                acc += np.prod(xs[..., rest], axis=-1)
            out[..., i] = acc / denom[i]
    return out


def lobatto_points(n, unit=False):
    nodes = gauss_lobatto(n).nodes
    return to_unit_interval(nodes) if unit else np.asarray(nodes)


@lru_cache(maxsize=None)
def mass_stiffness_1d(p):
    """Mass and stiffness matrices of the degree-``p`` Gauss--Lobatto
    Lagrange basis on [-1, 1], integrated exactly."""
    nodes = gauss_lobatto(p + 1).nodes
    xq, wq = gauss_legendre(p + 2)
    V = lagrange_basis(nodes, xq)
    D = lagrange_basis(nodes, xq, derivative=True)
    M = V.T @ (wq[:, None] * V)
    L = D.T @ (wq[:, None] * D)
    return M, L


@dataclass(frozen=True)
class InterpMatrix:
    """Matrix of Gauss--Lobatto interpolation from degree p to p - 1.

    ``entries[j, i]`` is the i-th degree-p Lagrange polynomial evaluated at
    the j-th node of the p-point rule.
    """
    p: int
    entries: np.ndarray


@lru_cache(maxsize=None)
def interp_matrix(p):
    if p < 2:
        raise ValueError("interpolation to degree p-1 needs p >= 2")
    fine = gauss_lobatto(p + 1).nodes
    coarse = gauss_lobatto(p).nodes
    return InterpMatrix(p, lagrange_basis(fine, coarse))


def chi_eval(p, x):
    """The degree-p polynomial ``P'_{p-1}(x) (x^2 - 1)`` vanishing at the p
    Gauss--Lobatto nodes."""
    if p < 2:
        raise ValueError("p must be at least 2")
    x = np.asarray(x, dtype=float)
    _, dp = legendre_eval(p - 1, x)
    return _unwrap(dp * (x**2 - 1))


def chi_legendre_form(p, x):
    """Same polynomial written as ``(p^2-p)/(2p-1) (P_p - P_{p-2})``."""
    a, _ = legendre_eval(p, x)
    b, _ = legendre_eval(p - 2, x)
    return (p * p - p) / (2 * p - 1) * (a - b)


def chi_derivative(p, x):
    """Derivative of :func:`chi_eval`, via Legendre-series algebra."""
    Leg = np.polynomial.Legendre
    chi = Leg.basis(p - 1).deriv() * np.polynomial.Polynomial([-1, 0, 1]).convert(kind=Leg)
    return _unwrap(chi.deriv()(np.asarray(x, dtype=float)))


def chi_norms(p):
    """Closed-form squared L2 norm and H1 seminorm of ``chi_p``."""
    if p < 2:
        raise ValueError("p must be at least 2")
    c = (p * p - p) / (2 * p - 1)
    l2_sq = c**2 * (2 / (2 * p + 1) + 2 / (2 * p - 3))
    h1_semi_sq = 2 * (p * p - p) ** 2 / (2 * p - 1)
    return l2_sq, h1_semi_sq


def l2_stability_bound(p):
    return 2 + 4 / (2 * p - 3)


def interp_error_bound(p):
    return 2 / (4 * p * p - 4 * p - 3)


def interp_stability_eigs(p):
    """Largest generalized eigenvalues of interpolation to degree p-1.

    Returns ``(mu, lam)`` with ``mu`` the max of ``(J^T Mc J, M)`` and
    ``lam`` the max of ``(J^T Lc J, L)`` restricted to non-constants.
    """
    J = interp_matrix(p).entries
    M, L = mass_stiffness_1d(p)
    Mc, Lc = mass_stiffness_1d(p - 1)
    mu = sla.eigh(J.T @ Mc @ J, M, eigvals_only=True)[-1]
    Z = _nonconstant_basis(p + 1)
    lam = sla.eigh(Z.T @ J.T @ Lc @ J @ Z, Z.T @ L @ Z, eigvals_only=True)[-1]
    return mu, lam


def _nonconstant_basis(n):
    # orthonormal complement of the constant vector; constants are the
    # common kernel of both stiffness forms
    return sla.null_space(np.ones((1, n)))


def interp_error_constant_check(p):
    """Return ``(bound, achieved)`` for the L2 interpolation error constant.

    ``achieved`` is the maximum of ``||u - I u||^2 / |u|_1^2`` over
    degree-p polynomials, from a dense generalized eigensolve.
    """
    M, L = mass_stiffness_1d(p)
    E = _interp_error_form(p)
    Z = _nonconstant_basis(p + 1)
    achieved = sla.eigh(Z.T @ E @ Z, Z.T @ L @ Z, eigvals_only=True)[-1]
    return interp_error_bound(p), achieved


def _interp_error_form(p):
    """Gram matrix of ``u -> u - I_{p-1} u`` in the degree-p basis."""
    M, _ = mass_stiffness_1d(p)
    J = interp_matrix(p).entries
    fine = gauss_lobatto(p + 1).nodes
    coarse = gauss_lobatto(p).nodes
    K = lagrange_basis(coarse, fine)  # degree p-1 polynomial at fine nodes
    E = np.eye(p + 1) - K @ J
    return E.T @ M @ E


def interp_error_ratio(p, u_values):
    """``||u - I u||^2 / |u|_1^2`` for ``u`` given by its values at the
    (p+1) Gauss--Lobatto nodes."""
    _, L = mass_stiffness_1d(p)
    u = np.asarray(u_values, dtype=float)
    return (u @ _interp_error_form(p) @ u) / (u @ L @ u)


def tensor_stability_eigs(p, d=2):
    """Largest generalized eigenvalues of the d-fold tensor interpolant for
    the mass and stiffness forms (dense eigensolve on Kronecker products)."""
    J = interp_matrix(p).entries
    M, L = mass_stiffness_1d(p)
    Mc, Lc = mass_stiffness_1d(p - 1)
    JMJ, JLJ = J.T @ Mc @ J, J.T @ Lc @ J

    def kron_all(mats):
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    mass_lhs = kron_all([JMJ] * d)
    mass_rhs = kron_all([M] * d)
    stiff_lhs = sum(kron_all([JLJ if k == j else JMJ for k in range(d)]) for j in range(d))
    stiff_rhs = sum(kron_all([L if k == j else M for k in range(d)]) for j in range(d))
    mu = sla.eigh(mass_lhs, mass_rhs, eigvals_only=True)[-1]
    Z = _nonconstant_basis((p + 1) ** d)
    lam = sla.eigh(Z.T @ stiff_lhs @ Z, Z.T @ stiff_rhs @ Z, eigvals_only=True)[-1]
    return mu, lam
