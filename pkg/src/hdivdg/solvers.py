"""Direct factorization, Krylov solvers and condition number estimates."""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CAP = 3000


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    def __init__(self, row, message=None):
        super().__init__(message or f"zero pivot at row {row}: the matrix has a zero-energy mode")
        self.row = row


class NotPositiveDefinite(SolverError):
    def __init__(self, operator, value):
        super().__init__(f"{operator} is not positive definite (found {value:.3e})")
        self.operator = operator


class LinearMap:
    """Apply-only symmetric operator.

    ``apply`` must accept vectors of shape ``(n,)`` and blocks ``(n, k)``.
    """

    def __init__(self, n, apply, name="map"):
        self.shape = (n, n)
        self._apply = apply
        self.name = name

    def __call__(self, x):
        return self._apply(x)

    def apply(self, x):
        return self._apply(x)

    def __matmul__(self, x):
        return self._apply(x)

    def to_dense(self):
        return np.asarray(self._apply(np.eye(self.shape[0])))

    @classmethod
    def wrap(cls, obj, name=None):
        if obj is None or isinstance(obj, LinearMap):
            return obj
        if sp.issparse(obj) or isinstance(obj, np.ndarray):
            M = obj
            return cls(M.shape[0], lambda x: M @ x, name or "matrix")
        if callable(obj):
            raise TypeError("wrap callables explicitly with LinearMap(n, f)")
        raise TypeError(f"cannot use {type(obj).__name__} as a linear map")


def identity_map(n):
    return LinearMap(n, lambda x: np.array(x, dtype=float, copy=True), "identity")


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    residuals: list = field(default_factory=list)
    time_s: float = 0.0
    lambda_min_est: float = float("nan")
    lambda_max_est: float = float("nan")
    cond_est: float = float("nan")
    status: str = ""


# -- direct solves --------------------------------------------------------------


class Factorization:
    def __init__(self, lu, n):
        self._lu = lu
        self.n = n

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        return self._lu.solve(b)

    def as_map(self, name="direct"):
        return LinearMap(self.n, self.solve, name)


def direct_factorize(A, spd=True):
    """Sparse LU with a symmetric fill-reducing ordering (SuperLU).

    For symmetric input the ordering is minimum degree on ``A + A^T`` and
    pivoting is restricted to the diagonal when ``spd`` is set.
    """
    A = sp.csc_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    opts = {"permc_spec": "MMD_AT_PLUS_A"}
    if spd:
        opts["diag_pivot_thresh"] = 0.0
        opts["options"] = {"SymmetricMode": True}
    try:
        lu = spla.splu(A, **opts)
    except RuntimeError as err:
        row = _locate_zero_pivot(A)
        raise SingularMatrixError(row, f"zero pivot at row {row}: {err}") from None
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() == 0.0 or not np.all(np.isfinite(udiag)):
        k = int(np.argmin(udiag))
        raise SingularMatrixError(int(lu.perm_c[k]))
    return Factorization(lu, A.shape[0])


def _locate_zero_pivot(A):
    if A.shape[0] > DENSE_CAP:
        return -1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = sla.lu_factor(A.toarray(), check_finite=False)
    d = np.abs(np.diag(lu))
    return int(np.argmin(d))


def direct_solve(F, b):
    return F.solve(b)


# -- Krylov methods --------------------------------------------------------------


def pcg(A, b, B=None, tol=1e-12, maxit=1000, x0=None):
    """Preconditioned conjugate gradients.

    Stops when ``sqrt(r^T B r) <= tol * sqrt(r0^T B r0)``.  The CG
    coefficients give a Lanczos tridiagonal whose extreme eigenvalues
    estimate the spectrum of ``B A``.
    """
    A = LinearMap.wrap(A)
    B = LinearMap.wrap(B) or identity_map(A.shape[0])
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A(x) if x0 is not None else b.copy()
    z = B(r)
    rz = float(r @ z)
    rep = SolveReport()
    if rz < 0:
        raise NotPositiveDefinite("preconditioner", rz)
    if rz == 0:
        rep.converged, rep.residuals = True, [0.0]
        return x, rep
    rz0 = rz
    rep.residuals.append(1.0)
    d = z.copy()
    alphas, betas = [], []
    for it in range(1, maxit + 1):
        Ad = A(d)
        dAd = float(d @ Ad)
        if dAd <= 0:
            raise NotPositiveDefinite("operator", dAd)
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        z = B(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise NotPositiveDefinite("preconditioner", rz_new)
        alphas.append(alpha)
        rep.residuals.append(np.sqrt(rz_new / rz0))
        rep.iterations = it
        if rz_new <= tol**2 * rz0:
            rep.converged = True
            break
        beta = rz_new / rz
        betas.append(beta)
        d = z + beta * d
        rz = rz_new
    rep.status = "converged" if rep.converged else "maxit"
    lo, hi = lanczos_extremes(alphas, betas)
    rep.lambda_min_est, rep.lambda_max_est, rep.cond_est = lo, hi, hi / lo
    rep.time_s = time.perf_counter() - t0
    return x, rep


def lanczos_extremes(alphas, betas):
    """Extreme eigenvalues of the Lanczos matrix built from CG coefficients."""
    k = len(alphas)
    if k == 0:
        return float("nan"), float("nan")
    a = np.asarray(alphas)
    bt = np.asarray(betas[: k - 1])
    diag = 1.0 / a
    diag[1:] += bt / a[:-1]
    off = np.sqrt(bt) / a[:-1]
    ev = sla.eigvalsh_tridiagonal(diag, off) if k > 1 else diag
    return float(ev[0]), float(ev[-1])


def minres(A, b, B=None, tol=1e-12, maxit=1000, x0=None, stagnation=50):
    """Preconditioned MINRES for symmetric (indefinite) systems.

    Stops when the preconditioned residual norm ``||r||_{B}`` has dropped by
    ``tol``.  Reports ``status`` ``"stagnated"`` if the residual fails to
    decrease over ``stagnation`` consecutive iterations.
    """
    A = LinearMap.wrap(A)
    B = LinearMap.wrap(B) or identity_map(A.shape[0])
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    v = b - A(x)
    z = B(v)
    g = float(v @ z)
    rep = SolveReport()
    if g < 0:
        raise NotPositiveDefinite("preconditioner", g)
    gamma = np.sqrt(g)
    if gamma == 0:
        rep.converged, rep.residuals, rep.status = True, [0.0], "converged"
        return x, rep
    gamma0 = gamma
    v_old = np.zeros_like(b)
    w_old = np.zeros_like(b)
    w = np.zeros_like(b)
    c_old = c = 1.0
    s_old = s = 0.0
    gamma_old = 1.0
    eta = gamma
    rep.residuals.append(1.0)
    best, since_best = 1.0, 0
    for it in range(1, maxit + 1):
        z = z / gamma
        Az = A(z)
        delta = float(Az @ z)
        v_new = Az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = B(v_new)
        g = float(v_new @ z_new)
        if g < 0:
            raise NotPositiveDefinite("preconditioner", g)
        gamma_new = np.sqrt(g)
        a0 = c * delta - c_old * s * gamma
        a1 = np.hypot(a0, gamma_new)
        if a1 == 0:
            raise SolverError(f"MINRES breakdown at iteration {it} (zero Lanczos coefficient)")
        a2 = s * delta + c_old * c * gamma
        a3 = s_old * gamma
        c_new, s_new = a0 / a1, gamma_new / a1
        w_new = (z - a3 * w_old - a2 * w) / a1
        x += c_new * eta * w_new
        eta = -s_new * eta
        rel = abs(eta) / gamma0
        rep.residuals.append(rel)
        rep.iterations = it
        if rel <= tol:
            rep.converged = True
            break
        if gamma_new == 0:
            raise SolverError(f"MINRES breakdown at iteration {it} (zero Lanczos coefficient)")
        if rel < best * (1 - 1e-12):
            best, since_best = rel, 0
        else:
            since_best += 1
            if since_best >= stagnation:
                rep.status = "stagnated"
                break
        v_old, v = v, v_new
        z = z_new
        w_old, w = w, w_new
        gamma_old, gamma = gamma, gamma_new
        c_old, c = c, c_new
        s_old, s = s, s_new
    if not rep.status:
        rep.status = "converged" if rep.converged else "maxit"
    rep.time_s = time.perf_counter() - t0
    return x, rep


# -- spectra --------------------------------------------------------------------


def cond_estimate(A, B=None, dense_cap=DENSE_CAP, lanczos=False, seed=0):
    """Extreme eigenvalues and condition number of ``B A``.

    Up to ``dense_cap`` unknowns the preconditioner is applied to the
    identity, factored as ``L L^T`` and the symmetric matrix ``L^T A L`` is
    diagonalised.  Larger problems need ``lanczos=True``, which runs PCG on
    a random right-hand side and returns its Ritz estimates.
    """
    n = A.shape[0]
    if n <= dense_cap:
        Ad = A.toarray() if sp.issparse(A) else (A.to_dense() if isinstance(A, LinearMap) else np.asarray(A))
        Ad = 0.5 * (Ad + Ad.T)
        if B is None:
            ev = sla.eigvalsh(Ad)
        else:
            Bd = LinearMap.wrap(B).to_dense()
            Bd = 0.5 * (Bd + Bd.T)
            try:
                L = sla.cholesky(Bd, lower=True)
            except sla.LinAlgError:
                raise NotPositiveDefinite("preconditioner", float(sla.eigvalsh(Bd)[0])) from None
            ev = sla.eigvalsh(L.T @ Ad @ L)
        if ev[0] <= 0:
            raise NotPositiveDefinite("preconditioned operator", float(ev[0]))
        return float(ev[0]), float(ev[-1]), float(ev[-1] / ev[0])
    if not lanczos:
        raise ValueError(
            f"{n} unknowns exceeds the dense eigensolver cap of {dense_cap}; "
            "use the Lanczos estimate (--lanczos)"
        )
    b = np.random.default_rng(seed).standard_normal(n)
    _, rep = pcg(A, b, B, tol=1e-10, maxit=2000)
    return rep.lambda_min_est, rep.lambda_max_est, rep.cond_est
