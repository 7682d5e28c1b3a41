"""Assembly of the interior penalty form, mass matrices and the divergence
matrix."""
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import BOUNDARY, face_param_to_ref
from .polylib import gauss_legendre

CHUNK = 256


class AssemblyError(ValueError):
    pass


def quadrature_order_policy(p):
    """Gauss--Legendre points per dimension for degree ``p`` integrands."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return p + 2


def unit_gauss(n):
    x, w = gauss_legendre(n)
    return 0.5 * (np.asarray(x) + 1), 0.5 * np.asarray(w)


def tensor_rule(n):
    x, w = unit_gauss(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), np.outer(w, w).ravel()


@dataclass(frozen=True)
class PenaltyParams:
    eta: float
    alpha: np.ndarray  # per face


def penalty_params(mesh, eta, order):
    """Face penalties ``alpha = eta * order^2 / h_F``.

    ``order`` is the number of nodes per direction of the velocity space
    (``p + 1`` for RT(p)); the auxiliary operators reuse the same value so
    all three forms share one penalty.
    """
    if not eta > 0:
        raise AssemblyError(f"penalty parameter must be positive, got {eta}")
    return PenaltyParams(float(eta), eta * order**2 / mesh.face_h())


def _default_order(space):
    return quadrature_order_policy(max(space.degree, 1))


def _scatter(space, blocks, elems, rows, cols, vals):
    d = space.elem_dofs[elems]
    rows.append(np.repeat(d[:, :, None], d.shape[1], axis=2).ravel())
    cols.append(np.repeat(d[:, None, :], d.shape[1], axis=1).ravel())
    vals.append(blocks.ravel())


def _to_csr(rows, cols, vals, shape):
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def face_traces(space, faces, order=None, gradients=True):
    """Traces of the basis on both sides of the given faces.

    Yields ``(side_a, side_b, w)`` per chunk.  Each side is a dict with
    ``val`` ``(nf, nq, nloc, ncomp)``, ``grad``, ``dofs`` and ``normal``
    (outward for side a).  ``side_b`` is None on boundary chunks.  ``w``
    holds quadrature weights times face length.  A chunk contains either
    only interior or only boundary faces.
    """
    mesh = space.mesh
    order = order or _default_order(space)
    t, wt = unit_gauss(order)
    faces = np.asarray(faces)
    inner = mesh.face_elems[faces, 1] != BOUNDARY
    for group in (faces[inner], faces[~inner]):
        for s in range(0, len(group), CHUNK):
            fs = group[s : s + CHUNK]
            x0 = mesh.vertices[mesh.faces[fs, 0]]
            x1 = mesh.vertices[mesh.faces[fs, 1]]
            d = x1 - x0
            length = np.hypot(d[:, 0], d[:, 1])
            nrm = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
            ea = mesh.face_elems[fs, 0]
            centroid = mesh.vertices[mesh.elements[ea]].mean(axis=1)
            flip = np.einsum("fi,fi->f", nrm, 0.5 * (x0 + x1) - centroid) < 0
            nrm[flip] *= -1
            w = wt[None, :] * length[:, None]
            sides = []
            for col in (0, 1):
                es = mesh.face_elems[fs, col]
                if es[0] == BOUNDARY:
                    sides.append(None)
                    continue
                lf = mesh.face_local[fs, col]
                rev = np.array([mesh.face_reversed(e, f) for e, f in zip(es, lf)])
                tl = np.where(rev[:, None], 1 - t[None, :], t[None, :])
                xhat = np.stack([face_param_to_ref(f, tt) for f, tt in zip(lf, tl)])
                val, grad, _ = space.physical_basis(xhat, es, gradients=gradients)
                sides.append(
                    {
                        "val": val,
                        "grad": grad,
                        "dofs": space.elem_dofs[es],
                        "normal": nrm if col == 0 else -nrm,
                        "faces": fs,
                    }
                )
            yield sides[0], sides[1], w


def assemble_ipdg(space, eta, order=None, penalty_order=None):
    """Symmetric interior penalty matrix for the vector Laplacian.

    Boundary faces carry the one-sided trace and the full gradient, which
    imposes a homogeneous Dirichlet condition weakly on every component.

    Parameters
    ----------
    space : FESpace
        RT or vector DG space.
    eta : float
        Penalty scaling, see :func:`penalty_params`.
    order : int, optional
        Gauss--Legendre points per direction (default from
        :func:`quadrature_order_policy`).
    penalty_order : int, optional
        Defaults to ``space.degree + 1``.
    """
    if space.kind not in ("RT", "DG", "BrokenRT"):
        raise AssemblyError(f"IPDG form is not defined on {space.kind} spaces")
    mesh = space.mesh
    order = order or _default_order(space)
    pen = penalty_params(mesh, eta, space.degree + 1 if penalty_order is None else penalty_order)
    rows, cols, vals = [], [], []
    xq, wq = tensor_rule(order)
    for s in range(0, mesh.ne, CHUNK):
        elems = np.arange(s, min(s + CHUNK, mesh.ne))
        _, G, det = space.physical_basis(xq, elems)
        Gt = G.transpose(0, 2, 1, 3, 4).reshape(len(elems), G.shape[2], -1)
        wt = np.repeat(det * wq[None, :], G.shape[3] * G.shape[4], axis=1)
        K = np.matmul(Gt * wt[:, None, :], Gt.transpose(0, 2, 1))
        _scatter(space, K, elems, rows, cols, vals)
    for a, b, w in face_traces(space, np.arange(mesh.nf), order):
        n = a["normal"]
        if b is None:
            jump, avg, dofs = a["val"], a["grad"], a["dofs"]
        else:
            jump = np.concatenate([a["val"], -b["val"]], axis=2)
            avg = 0.5 * np.concatenate([a["grad"], b["grad"]], axis=2)
            dofs = np.hstack([a["dofs"], b["dofs"]])
        gn = np.einsum("fqlaj,fj->fqla", avg, n)
        alpha = pen.alpha[a["faces"]]
        nc = jump.shape[3]
        J = jump.transpose(0, 2, 1, 3).reshape(jump.shape[0], jump.shape[2], -1)
        Gn = gn.transpose(0, 2, 1, 3).reshape(J.shape)
        wf = np.repeat(w, nc, axis=1)[:, None, :]
        K = np.matmul(J * (wf * alpha[:, None, None]), J.transpose(0, 2, 1))
        C = np.matmul(J * wf, Gn.transpose(0, 2, 1))
        K -= C + C.transpose(0, 2, 1)
        r = np.repeat(dofs[:, :, None], dofs.shape[1], axis=2)
        c = np.repeat(dofs[:, None, :], dofs.shape[1], axis=1)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(K.ravel())
    return _to_csr(rows, cols, vals, (space.ndofs, space.ndofs))


def assemble_mass(space, order=None):
    """L2 Gram matrix of the basis."""
    mesh = space.mesh
    order = order or _default_order(space)
    xq, wq = tensor_rule(order)
    rows, cols, vals = [], [], []
    for s in range(0, mesh.ne, CHUNK):
        elems = np.arange(s, min(s + CHUNK, mesh.ne))
        V, _, det = space.physical_basis(xq, elems, gradients=False)
        Vt = V.transpose(0, 2, 1, 3).reshape(len(elems), V.shape[2], -1)
        wt = np.repeat(det * wq[None, :], V.shape[3], axis=1)
        K = np.matmul(Vt * wt[:, None, :], Vt.transpose(0, 2, 1))
        _scatter(space, K, elems, rows, cols, vals)
    return _to_csr(rows, cols, vals, (space.ndofs, space.ndofs))


def assemble_div(velocity, pressure, order=None):
    """Matrix of ``-(div u, q)`` with rows indexed by pressure DOFs.

    With the Piola map the physical divergence integrated against ``q`` over
    an element equals the reference divergence integrated over the unit
    square, so no geometric factors enter.
    """
    if velocity.kind != "RT":
        raise AssemblyError("velocity space must be RT")
    if pressure.kind != "DG" or pressure.local.ncomp != 1:
        raise AssemblyError("pressure space must be scalar DG")
    mesh = velocity.mesh
    order = order or _default_order(velocity)
    xq, wq = tensor_rule(order)
    _, G = velocity.local.basis(xq)
    divhat = G[..., 0, 0] + G[..., 1, 1]  # (nq, nloc)
    Q, _ = pressure.local.basis(xq)
    Q = Q[..., 0]
    ref = -np.einsum("qm,ql,q->ml", Q, divhat, wq)
    blocks = ref[None] * velocity.signs[:, None, :]
    r = np.repeat(pressure.elem_dofs[:, :, None], velocity.nloc, axis=2)
    c = np.repeat(velocity.elem_dofs[:, None, :], pressure.nloc, axis=1)
    D = sp.coo_matrix((blocks.ravel(), (r.ravel(), c.ravel())), shape=(pressure.ndofs, velocity.ndofs)).tocsr()
    D.sum_duplicates()
    D.sort_indices()
    return D


def assemble_load(space, f, order=None):
    """Load vector ``(f, v)`` for a field ``f`` of physical points."""
    mesh = space.mesh
    order = order or _default_order(space) + 2
    xq, wq = tensor_rule(order)
    b = np.zeros(space.ndofs)
    for s in range(0, mesh.ne, CHUNK):
        elems = np.arange(s, min(s + CHUNK, mesh.ne))
        V, _, det = space.physical_basis(xq, elems, gradients=False)
        x = mesh.map_points(xq, elems)
        fx = np.asarray(f(x.reshape(-1, 2)), float).reshape(x.shape[:2] + (-1,))
        loc = np.einsum("eqla,eqa,eq->el", V, fx, det * wq[None, :])
        np.add.at(b, space.elem_dofs[elems].ravel(), loc.ravel())
    return b


def assemble_dirichlet_lift(space, eta, g, order=None, penalty_order=None):
    """Right-hand side contribution of nonzero Dirichlet data ``g``.

    Consistent with :func:`assemble_ipdg`:
    ``-<g n, grad v> + <alpha g, v>`` over the boundary faces.
    """
    mesh = space.mesh
    pen = penalty_params(mesh, eta, space.degree + 1 if penalty_order is None else penalty_order)
    order = order or _default_order(space) + 2
    b = np.zeros(space.ndofs)
    t, wt = unit_gauss(order)
    for a, _, w in face_traces(space, mesh.boundary_faces, order):
        f = a["faces"]
        x0 = mesh.vertices[mesh.faces[f, 0]]
        x1 = mesh.vertices[mesh.faces[f, 1]]
        x = x0[:, None, :] + t[None, :, None] * (x1 - x0)[:, None, :]
        gx = np.asarray(g(x.reshape(-1, 2)), float).reshape(x.shape)
        n = a["normal"]
        gn = np.einsum("fqlaj,fj->fqla", a["grad"], n)
        loc = np.einsum("fqla,fqa,fq->fl", a["val"], gx, w * pen.alpha[f][:, None])
        loc -= np.einsum("fqla,fqa,fq->fl", gn, gx, w)
        np.add.at(b, a["dofs"].ravel(), loc.ravel())
    return b


def write_matrix_market(A, path, symmetric=None):
    A = sp.csr_matrix(A)
    if symmetric is None:
        symmetric = A.shape[0] == A.shape[1] and abs(A - A.T).max() <= 1e-11 * abs(A).max()
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), symmetry="symmetric" if symmetric else "general")


def constrain(A, ess):
    """Zero the rows and columns of ``ess`` and put ones on their diagonal."""
    A = sp.csr_matrix(A)
    keep = np.ones(A.shape[0])
    keep[np.asarray(ess, dtype=np.int64)] = 0.0
    Z = sp.diags(keep)
    out = sp.csr_matrix(Z @ A @ Z + sp.diags(1.0 - keep))
    out.eliminate_zeros()
    out.sort_indices()
    return out
