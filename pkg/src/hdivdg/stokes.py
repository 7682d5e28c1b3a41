"""H(div) interior penalty discretization of the Stokes problem.

Velocities live in RT(p) with the normal component imposed strongly on the
boundary and the tangential component imposed weakly through the penalty
form.  Pressures live in scalar DG(p-1), so the discrete divergence of the
velocity vanishes pointwise once the constraint rows are satisfied.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import (
    assemble_dirichlet_lift,
    assemble_div,
    assemble_ipdg,
    assemble_load,
    assemble_mass,
    constrain,
    tensor_rule,
    unit_gauss,
)
from .fespace import build_space, essential_dofs, interpolate
from .precond import build_precond
from .solvers import LinearMap, minres

FLUX_TOL = 1e-10


class IncompatibleDataError(ValueError):
    pass


@dataclass
class SaddleSystem:
    """Block system ``[[A, D^T], [D, 0]] [u; p] = [f; g]``.

    ``A`` and ``D`` already carry the strong normal condition: essential
    velocity rows of ``A`` are identity rows and the matching columns of
    ``D`` are zero.
    """

    A: sp.csr_matrix
    D: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    velocity: object
    pressure: object
    eta: float
    ess: np.ndarray

    @property
    def nu(self):
        return self.A.shape[0]

    @property
    def np_(self):
        return self.D.shape[0]

    @property
    def ndofs(self):
        return self.nu + self.np_

    @property
    def rhs(self):
        return np.concatenate([self.f, self.g])

    def matrix(self):
        return sp.bmat([[self.A, self.D.T], [self.D, None]], format="csr")

    def operator(self):
        A, D, nu = self.A, self.D, self.nu

        def apply(x):
            u, p = x[:nu], x[nu:]
            return np.concatenate([A @ u + D.T @ p, D @ u])

        return LinearMap(self.ndofs, apply, "stokes")


def boundary_flux(mesh, u_D, order=8):
    """Net outward flux of ``u_D`` through the domain boundary."""
    t, w = unit_gauss(order)
    total = 0.0
    for f in mesh.boundary_faces:
        x0, x1 = mesh.vertices[mesh.faces[f]]
        d = x1 - x0
        e = mesh.face_elems[f, 0]
        n = np.array([d[1], -d[0]])
        if n @ (0.5 * (x0 + x1) - mesh.vertices[mesh.elements[e]].mean(axis=0)) < 0:
            n = -n
        x = x0[None, :] + t[:, None] * d[None, :]
        total += float(w @ (np.asarray(u_D(x), float) @ n))
    return total


def assemble_stokes(mesh, p, eta, f=None, u_D=None):
    """Assemble the saddle point system for ``-lap u + grad p = f``,
    ``div u = 0`` with velocity ``u_D`` on the boundary."""
    if p < 2:
        raise ValueError("p must be at least 2")
    zero = lambda x: np.zeros((len(x), 2))  # noqa: E731
    f = f or zero
    u_D = u_D or zero
    flux = boundary_flux(mesh, u_D)
    if abs(flux) > FLUX_TOL:
        raise IncompatibleDataError(f"boundary data has net flux {flux:.3e}; a divergence-free velocity needs zero")
    rt = build_space(mesh, "RT", p)
    pr = build_space(mesh, "DG", p - 1, ncomp=1)
    ess = essential_dofs(rt)
    A_full = assemble_ipdg(rt, eta)
    D_full = assemble_div(rt, pr)
    u_ess = np.zeros(rt.ndofs)
    u_ess[ess] = interpolate(rt, u_D)[ess]
    b = assemble_load(rt, f) + assemble_dirichlet_lift(rt, eta, u_D) - A_full @ u_ess
    b[ess] = u_ess[ess]
    keep = np.ones(rt.ndofs)
    keep[ess] = 0.0
    D = sp.csr_matrix(D_full @ sp.diags(keep))
    D.eliminate_zeros()
    g = -(D_full @ u_ess)
    return SaddleSystem(constrain(A_full, ess), D, b, g, rt, pr, float(eta), ess)


def pressure_block(pressure):
    """Inverse diagonal of the pressure mass matrix with the constant
    vector projected out on both sides."""
    d = 1.0 / assemble_mass(pressure).diagonal()
    n = len(d)

    def proj(x):
        return x - x.mean(axis=0)

    return LinearMap(n, lambda x: proj((d if x.ndim == 1 else d[:, None]) * proj(x)), "pressure")


def stokes_preconditioner(sys, kind="sub"):
    nu = sys.nu
    if kind == "none":
        vel = LinearMap(nu, lambda x: np.array(x, float), "identity")
    else:
        vel = build_precond(kind, sys.A, sys.velocity, sys.eta, sys.ess)
    pb = pressure_block(sys.pressure)

    def apply(x):
        return np.concatenate([vel(x[:nu]), pb(x[nu:])])

    return LinearMap(sys.ndofs, apply, f"stokes-{kind}")


@dataclass
class StokesResult:
    u: np.ndarray
    p: np.ndarray
    report: object
    div_residual: float  # max|D u| / max|u|


def solve_stokes(sys, precond="sub", tol=1e-12, maxit=5000, x0=None):
    """MINRES with the block diagonal preconditioner.

    The pressure right-hand side is made orthogonal to constants first and
    the pressure is returned with zero mean.  ``x0`` is an optional initial
    guess for the stacked ``[u; p]`` vector.
    """
    rhs = sys.rhs.copy()
    rhs[sys.nu :] -= rhs[sys.nu :].mean()
    B = stokes_preconditioner(sys, precond)
    x, rep = minres(sys.operator(), rhs, B, tol=tol, maxit=maxit, x0=x0)
    u, p = x[: sys.nu], x[sys.nu :]
    M = assemble_mass(sys.pressure)
    ones = np.ones(sys.np_)
    p = p - (ones @ (M @ p)) / (ones @ (M @ ones))
    umax = np.abs(u).max()
    div = float(np.abs(sys.D @ u).max() / umax) if umax > 0 else 0.0
    return StokesResult(u, p, rep, div)


def cavity_lid(x):
    """Regularized lid velocity on the top side of the unit square."""
    x = np.atleast_2d(x)
    top = np.abs(x[:, 1] - 1.0) < 1e-12
    u = np.zeros_like(x, dtype=float)
    u[top, 0] = 16.0 * x[top, 0] ** 2 * (1.0 - x[top, 0]) ** 2
    return u


def curl_bump_velocity(x):
    """Rotated gradient of the stream function ``sin^2(pi x) sin^2(pi y)``."""
    sx, sy = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
    return np.column_stack(
        [np.pi * sx**2 * np.sin(2 * np.pi * x[:, 1]), -np.pi * sy**2 * np.sin(2 * np.pi * x[:, 0])]
    )


def curl_bump_forcing(x, with_pressure=True):
    """``-lap u + grad p`` for :func:`curl_bump_velocity` and
    ``p = cos(pi x) cos(pi y)``."""
    c = 2 * np.pi**3
    X, Y = x[:, 0], x[:, 1]
    f1 = -c * np.sin(2 * np.pi * Y) * (2 * np.cos(2 * np.pi * X) - 1)
    f2 = c * np.sin(2 * np.pi * X) * (2 * np.cos(2 * np.pi * Y) - 1)
    if with_pressure:
        f1 = f1 - np.pi * np.sin(np.pi * X) * np.cos(np.pi * Y)
        f2 = f2 - np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)
    return np.column_stack([f1, f2])


def velocity_l2_error(space, u, exact, order=None):
    mesh = space.mesh
    order = order or space.degree + 4
    xq, wq = tensor_rule(order)
    V, _, det = space.physical_basis(xq, gradients=False)
    uh = np.einsum("eqla,el->eqa", V, u[space.elem_dofs])
    x = mesh.map_points(xq)
    ue = exact(x.reshape(-1, 2)).reshape(uh.shape)
    return float(np.sqrt(np.sum(((uh - ue) ** 2).sum(-1) * det * wq[None, :])))


def manufactured_solution_check(n, p, eta=10.0, precond="sub", mesh=None):
    """Solve the curl-bump problem and return the velocity L2 error."""
    from .mesh import cartesian_mesh

    mesh = mesh or cartesian_mesh(n)
    sys = assemble_stokes(mesh, p, eta, f=curl_bump_forcing)
    res = solve_stokes(sys, precond)
    err = velocity_l2_error(sys.velocity, res.u, curl_bump_velocity)
    return {"n": n, "p": p, "error": err, "iterations": res.report.iterations, "div_residual": res.div_residual}
