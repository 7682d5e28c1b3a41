"""Finite element spaces and transfer operators on quadrilateral meshes.

Four kinds of space are supported:

``RT``
    H(div)-conforming Raviart--Thomas space of index ``p``.  The reference
    space is Q_{p,p-1} x Q_{p-1,p} with a Gauss--Lobatto nodal basis and
    fields are mapped with the contravariant Piola transform.
``BrokenRT``
    Same local spaces without any inter-element coupling.
``DG``
    Discontinuous vector fields with both components in Q_q, mapped by
    composition with the element map.
``H1Q1``
    Continuous vector fields with bilinear components (vertex values).

Local RT ordering on the reference square: x-component functions come first,
index ``j*(p+1) + i`` for node ``(xi_i, zeta_j)``, followed by y-components,
``p(p+1) + j*p + i`` for node ``(zeta_i, xi_j)``.  ``xi`` are the p+1
Gauss--Lobatto points of [0,1] and ``zeta`` the p points.

Every element carries a sign per local function.  Conforming face functions
have sign ``+1`` on the element with the lower index and ``-1`` on the other,
relative to the outward normal, so the global normal of a face points from the
lower element to the higher one.  The broken space uses the same signs, which
makes the injection from the conforming space a 0/1 matrix.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BOUNDARY, FACE_OUTWARD_SIGN
from .polylib import lagrange_basis, lobatto_points

KINDS = ("RT", "BrokenRT", "DG", "H1Q1")


class SpaceError(ValueError):
    pass


def _unit_nodes(n):
    return lobatto_points(n, unit=True)


def _lagrange_1d(nodes, x):
    return lagrange_basis(nodes, x), lagrange_basis(nodes, x, derivative=True)


@dataclass
class LocalRT:
    """Reference-element description of the RT(p) nodal basis."""

    p: int

    def __post_init__(self):
        p = self.p
        self.xi = _unit_nodes(p + 1)
        self.zeta = _unit_nodes(p)
        direction, ix, iy, nodes = [], [], [], []
        for j in range(p):
            for i in range(p + 1):
                direction.append(0)
                ix.append(i)
                iy.append(j)
                nodes.append((self.xi[i], self.zeta[j]))
        for j in range(p + 1):
            for i in range(p):
                direction.append(1)
                ix.append(i)
                iy.append(j)
                nodes.append((self.zeta[i], self.xi[j]))
        self.direction = np.array(direction)
        self.ix = np.array(ix)
        self.iy = np.array(iy)
        self.nodes = np.array(nodes)
        self.nloc = len(nodes)
        # face_dofs[lf, k]: local function with the k-th normal node on face lf
        nx = p * (p + 1)
        self.face_dofs = np.array(
            [
                [nx + 0 * p + k for k in range(p)],  # yhat = 0
                [k * (p + 1) + p for k in range(p)],  # xhat = 1
                [nx + p * p + k for k in range(p)],  # yhat = 1
                [k * (p + 1) + 0 for k in range(p)],  # xhat = 0
            ]
        )
        on_face = np.zeros(self.nloc, bool)
        on_face[self.face_dofs.ravel()] = True
        self.interior_dofs = np.flatnonzero(~on_face)
        self.face_of = -np.ones(self.nloc, dtype=np.int64)
        self.face_pos = -np.ones(self.nloc, dtype=np.int64)
        for lf in range(4):
            self.face_of[self.face_dofs[lf]] = lf
            self.face_pos[self.face_dofs[lf]] = np.arange(p)

    def basis(self, xhat):
        """Values ``(..., nloc, 2)`` and gradients ``(..., nloc, 2, 2)``.

        Gradient index order is ``[component, derivative direction]``.
        """
        xhat = np.asarray(xhat, float)
        x, y = xhat[..., 0], xhat[..., 1]
        Lx_hi, dLx_hi = _lagrange_1d(self.xi, x)
        Ly_hi, dLy_hi = _lagrange_1d(self.xi, y)
        Lx_lo, dLx_lo = _lagrange_1d(self.zeta, x)
        Ly_lo, dLy_lo = _lagrange_1d(self.zeta, y)
        shape = xhat.shape[:-1] + (self.nloc,)
        val = np.zeros(shape + (2,))
        grad = np.zeros(shape + (2, 2))
        nx = self.p * (self.p + 1)
        i, j = self.ix[:nx], self.iy[:nx]
        val[..., :nx, 0] = Lx_hi[..., i] * Ly_lo[..., j]
        grad[..., :nx, 0, 0] = dLx_hi[..., i] * Ly_lo[..., j]
        grad[..., :nx, 0, 1] = Lx_hi[..., i] * dLy_lo[..., j]
        i, j = self.ix[nx:], self.iy[nx:]
        val[..., nx:, 1] = Lx_lo[..., i] * Ly_hi[..., j]
        grad[..., nx:, 1, 0] = dLx_lo[..., i] * Ly_hi[..., j]
        grad[..., nx:, 1, 1] = Lx_lo[..., i] * dLy_hi[..., j]
        return val, grad


@dataclass
class LocalDG:
    """Reference description of Q_q with Gauss--Lobatto nodes.

    Local index ``c*(q+1)^2 + j*(q+1) + i`` for component ``c`` at node
    ``(xi_i, xi_j)``.  ``ncomp`` is 2 for vector fields, 1 for scalars.
    """

    q: int
    ncomp: int = 2

    def __post_init__(self):
        q = self.q
        self.xi = _unit_nodes(q + 1) if q > 0 else np.array([0.5])
        n1 = q + 1
        jj, ii = np.divmod(np.arange(n1 * n1), n1)
        self.ix = np.tile(ii, self.ncomp)
        self.iy = np.tile(jj, self.ncomp)
        self.direction = np.repeat(np.arange(self.ncomp), n1 * n1)
        self.nodes = np.column_stack([self.xi[self.ix], self.xi[self.iy]])
        self.nloc = self.ncomp * n1 * n1

    def scalar(self, xhat):
        x, y = xhat[..., 0], xhat[..., 1]
        if self.q == 0:
            one = np.ones(x.shape + (1,))
            return one, 0 * one, 0 * one
        Lx, dLx = _lagrange_1d(self.xi, x)
        Ly, dLy = _lagrange_1d(self.xi, y)
        n1 = self.q + 1
        i, j = self.ix[: n1 * n1], self.iy[: n1 * n1]
        return Lx[..., i] * Ly[..., j], dLx[..., i] * Ly[..., j], Lx[..., i] * dLy[..., j]

    def basis(self, xhat):
        xhat = np.asarray(xhat, float)
        s, sx, sy = self.scalar(xhat)
        m = s.shape[-1]
        shape = xhat.shape[:-1] + (self.nloc,)
        val = np.zeros(shape + (self.ncomp,))
        grad = np.zeros(shape + (self.ncomp, 2))
        for c in range(self.ncomp):
            sl = slice(c * m, (c + 1) * m)
            val[..., sl, c] = s
            grad[..., sl, c, 0] = sx
            grad[..., sl, c, 1] = sy
        return val, grad


@dataclass
class LocalQ1:
    """Vector bilinear functions; local index ``c*4 + corner``."""

    nloc: int = 8

    def basis(self, xhat):
        from .mesh import bilinear_shape, bilinear_shape_grad

        xhat = np.asarray(xhat, float)
        N = bilinear_shape(xhat)
        dN = bilinear_shape_grad(xhat)
        shape = xhat.shape[:-1] + (8,)
        val = np.zeros(shape + (2,))
        grad = np.zeros(shape + (2, 2))
        for c in range(2):
            val[..., 4 * c : 4 * c + 4, c] = N
            grad[..., 4 * c : 4 * c + 4, c, :] = dN
        return val, grad


def _right_mul(X, M):
    """``X[e, q, l, a, :] @ M[e, q]`` for 2x2 matrices ``M``."""
    Mb = M[:, :, None, None]
    return X[..., 0:1] * Mb[..., 0, :] + X[..., 1:2] * Mb[..., 1, :]


class FESpace:
    """A finite element space on a :class:`QuadMesh`.

    Attributes
    ----------
    kind : str
    degree : int
        ``p`` for RT kinds, ``q`` for DG, 1 for H1Q1.
    local : LocalRT, LocalDG or LocalQ1
    elem_dofs : (ne, nloc) int array
    signs : (ne, nloc) float array
    piola : bool
        Whether fields are mapped with the contravariant Piola transform.
    """

    def __init__(self, mesh, kind, degree, local, elem_dofs, signs, ndofs, piola):
        self.mesh = mesh
        self.kind = kind
        self.degree = degree
        self.local = local
        self.elem_dofs = elem_dofs
        self.signs = signs
        self.ndofs = int(ndofs)
        self.piola = piola

    @property
    def nloc(self):
        return self.local.nloc

    def __repr__(self):
        return f"FESpace({self.kind}, degree={self.degree}, ndofs={self.ndofs})"

    # -- evaluation --------------------------------------------------------

    def physical_basis(self, xhat, elems=None, gradients=True):
        """Signed physical basis values and gradients at reference points.

        Parameters
        ----------
        xhat : (nq, 2) or (ne, nq, 2) array
        elems : index array, optional

        Returns
        -------
        val : (ne, nq, nloc, 2)
        grad : (ne, nq, nloc, 2, 2) or None
        detJ : (ne, nq)
        """
        mesh = self.mesh
        elems = np.arange(mesh.ne) if elems is None else np.asarray(elems)
        xhat = np.asarray(xhat, float)
        V, G = self.local.basis(xhat)
        if xhat.ndim == 2:
            V, G = V[None], G[None]
        J = mesh.jacobians(xhat, elems)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        Jinv = np.empty_like(J)
        Jinv[..., 0, 0] = J[..., 1, 1]
        Jinv[..., 1, 1] = J[..., 0, 0]
        Jinv[..., 0, 1] = -J[..., 0, 1]
        Jinv[..., 1, 0] = -J[..., 1, 0]
        Jinv /= det[..., None, None]
        sig = self.signs[elems][:, None, :]
        ne = len(elems)
        if not self.piola:
            val = np.broadcast_to(V, (ne,) + V.shape[1:]) * sig[..., None]
            if not gradients:
                return val, None, det
            grad = _right_mul(np.broadcast_to(G, val.shape + (2,)), Jinv)
            return val, grad * sig[..., None, None], det
        F = J / det[..., None, None]
        Vb = np.broadcast_to(V, (ne,) + V.shape[1:])
        val = F[:, :, None, :, 0] * Vb[..., 0:1] + F[:, :, None, :, 1] * Vb[..., 1:2]
        val *= sig[..., None]
        if not gradients:
            return val, None, det
        c = mesh.vertices[mesh.elements[elems, 0]] - mesh.vertices[mesh.elements[elems, 1]]
        c += mesh.vertices[mesh.elements[elems, 2]] - mesh.vertices[mesh.elements[elems, 3]]
        zero = np.zeros_like(c)
        dJ = np.stack(
            [np.stack([zero, c], axis=-1), np.stack([c, zero], axis=-1)], axis=1
        )  # (ne, k, 2, 2)
        adj = Jinv * det[..., None, None]
        ddet = np.einsum("eqab,ekba->eqk", adj, dJ)
        dF = dJ[:, None] / det[..., None, None, None] - (
            J[:, :, None] * (ddet / det[..., None] ** 2)[..., None, None]
        )  # (ne, nq, k, a, b)
        Gb = np.broadcast_to(G, (ne,) + G.shape[1:])
        # d/dk of (F v)_a = dF_k[a, b] v_b + F[a, b] dv_b/dk
        dref = np.empty(Gb.shape)
        for k in range(2):
            dref[..., k] = (
                dF[:, :, None, k, :, 0] * Vb[..., 0:1]
                + dF[:, :, None, k, :, 1] * Vb[..., 1:2]
                + F[:, :, None, :, 0] * Gb[..., 0:1, k]
                + F[:, :, None, :, 1] * Gb[..., 1:2, k]
            )
        grad = _right_mul(dref, Jinv)
        return val, grad * sig[..., None, None], det

    def evaluate(self, coeffs, xhat, elems=None):
        """Field values ``(ne, nq, 2)`` for a global coefficient vector."""
        elems = np.arange(self.mesh.ne) if elems is None else np.asarray(elems)
        val, _, _ = self.physical_basis(xhat, elems, gradients=False)
        loc = np.asarray(coeffs)[self.elem_dofs[elems]]
        return np.einsum("eqla,el->eqa", val, loc)

    # -- nodal data ---------------------------------------------------------

    def nodal_points(self):
        """Physical nodal point of every global DOF, ``(ndofs, 2)``."""
        if self.kind == "H1Q1":
            return np.tile(self.mesh.vertices, (2, 1))
        pts = self.mesh.map_points(self.local.nodes)
        out = np.empty((self.ndofs, 2))
        out[self.elem_dofs.ravel()] = pts.reshape(-1, 2)
        return out

    def nodal_directions(self):
        """Reference unit direction of every global DOF (0 = x, 1 = y)."""
        d = self.local.direction if self.kind != "H1Q1" else np.repeat([0, 1], 4)
        out = np.empty(self.ndofs, dtype=np.int64)
        out[self.elem_dofs.ravel()] = np.tile(d, self.mesh.ne)
        return out


def build_space(mesh, kind, p, ncomp=2):
    """Construct a finite element space.

    Parameters
    ----------
    mesh : QuadMesh
    kind : {"RT", "BrokenRT", "DG", "H1Q1"}
    p : int
        RT index, or DG degree (``p >= 0``).  Ignored for H1Q1.
    ncomp : int
        Number of components of a DG space (1 gives scalar fields).
    """
    if kind not in KINDS:
        raise SpaceError(f"unknown space kind {kind!r}; choose from {KINDS}")
    ne = mesh.ne
    if kind in ("RT", "BrokenRT"):
        if p < 2:
            raise SpaceError(
                "RT spaces need p >= 2 so that they contain the bilinear coarse space"
            )
        loc = LocalRT(p)
        if kind == "BrokenRT":
            dofs = np.arange(ne * loc.nloc).reshape(ne, loc.nloc)
            return FESpace(mesh, kind, p, loc, dofs, _rt_signs(mesh, loc), ne * loc.nloc, True)
        dofs = _rt_numbering(mesh, loc)
        return FESpace(mesh, kind, p, loc, dofs, _rt_signs(mesh, loc), dofs.max() + 1, True)
    if kind == "DG":
        if p < 0:
            raise SpaceError("DG degree must be non-negative")
        loc = LocalDG(p, ncomp)
        dofs = np.arange(ne * loc.nloc).reshape(ne, loc.nloc)
        return FESpace(mesh, kind, p, loc, dofs, np.ones((ne, loc.nloc)), ne * loc.nloc, False)
    loc = LocalQ1()
    dofs = np.hstack([mesh.elements, mesh.elements + mesh.nv])
    return FESpace(mesh, kind, 1, loc, dofs, np.ones((ne, 8)), 2 * mesh.nv, False)


def _rt_signs(mesh, loc):
    signs = np.ones((mesh.ne, loc.nloc))
    for lf in range(4):
        signs[:, loc.face_dofs[lf]] = FACE_OUTWARD_SIGN[lf]
    # flip the higher-index side of each interior face
    inner = mesh.face_elems[:, 1] != BOUNDARY
    for e, lf in zip(mesh.face_elems[inner, 1], mesh.face_local[inner, 1]):
        signs[e, loc.face_dofs[lf]] *= -1
    return signs


def _rt_numbering(mesh, loc):
    p = loc.p
    nface = mesh.nf * p
    nint = len(loc.interior_dofs)
    dofs = np.empty((mesh.ne, loc.nloc), dtype=np.int64)
    for e in range(mesh.ne):
        for lf in range(4):
            f = mesh.elem_faces[e, lf]
            k = np.arange(p)
            if mesh.face_reversed(e, lf):
                k = p - 1 - k
            dofs[e, loc.face_dofs[lf]] = f * p + k
        dofs[e, loc.interior_dofs] = nface + e * nint + np.arange(nint)
    return dofs


def essential_dofs(space):
    """RT DOFs carrying the normal trace on boundary faces."""
    if space.kind != "RT":
        raise SpaceError("essential normal DOFs are defined for RT spaces only")
    p = space.degree
    bf = space.mesh.boundary_faces
    return (bf[:, None] * p + np.arange(p)[None, :]).ravel()


# -- DOF functionals and interpolation ----------------------------------------


def dof_functional(space, i, u):
    """Apply the nodal functional of global DOF ``i`` to a field ``u``.

    ``u`` maps an ``(m, 2)`` array of physical points to ``(m, 2)`` values.
    For Piola spaces the functional is ``n^T adj(J) u`` at the nodal point,
    evaluated from the first element that owns the DOF.
    """
    e, l = np.argwhere(space.elem_dofs == i)[0]
    return float(_local_functionals(space, u, [e])[0, l] * space.signs[e, l])


def _local_functionals(space, u, elems):
    """Unsigned local nodal functionals of ``u``, shape ``(ne, nloc)``."""
    mesh = space.mesh
    elems = np.asarray(elems)
    if space.kind == "H1Q1":
        from .mesh import REF_CORNERS

        x = mesh.map_points(REF_CORNERS, elems)
        vals = np.asarray(u(x.reshape(-1, 2))).reshape(len(elems), 4, 2)
        return np.concatenate([vals[..., 0], vals[..., 1]], axis=1)
    loc = space.local
    x = mesh.map_points(loc.nodes, elems)
    vals = np.asarray(u(x.reshape(-1, 2)), float).reshape(len(elems), loc.nloc, -1)
    if space.piola:
        J = mesh.jacobians(loc.nodes, elems)
        d = loc.direction
        # row d of adj(J) applied to u
        adj0 = np.stack([J[..., 1, 1], -J[..., 0, 1]], axis=-1)
        adj1 = np.stack([-J[..., 1, 0], J[..., 0, 0]], axis=-1)
        rows = np.where((d == 0)[None, :, None], adj0, adj1)
        return np.einsum("ela,ela->el", rows, vals)
    return vals[np.arange(len(elems))[:, None], np.arange(loc.nloc)[None, :], loc.direction[None, :]]


def interpolate(space, u):
    """Nodal interpolant of the field ``u`` as a global DOF vector."""
    ne = space.mesh.ne
    loc_vals = _local_functionals(space, u, np.arange(ne)) * space.signs
    out = np.zeros(space.ndofs)
    cnt = np.zeros(space.ndofs)
    np.add.at(out, space.elem_dofs.ravel(), loc_vals.ravel())
    np.add.at(cnt, space.elem_dofs.ravel(), 1.0)
    return out / cnt


# -- transfer operators --------------------------------------------------------


@dataclass(frozen=True)
class TransferOp:
    matrix: sp.csr_matrix
    source: str
    target: str

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x


def _check_pair(a, b):
    if a.mesh is not b.mesh:
        raise SpaceError("spaces live on different meshes")


def injection_and_multiplicity(rt, broken):
    """Copy map ``P`` from the conforming to the broken space and the
    number of broken copies ``m`` of each conforming DOF."""
    _check_pair(rt, broken)
    if rt.kind != "RT" or broken.kind != "BrokenRT" or rt.degree != broken.degree:
        raise SpaceError("need an RT space and a BrokenRT space of the same index")
    rows = broken.elem_dofs.ravel()
    cols = rt.elem_dofs.ravel()
    P = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(broken.ndofs, rt.ndofs))
    m = np.bincount(cols, minlength=rt.ndofs)
    return TransferOp(P, "RT", "BrokenRT"), m


def oswald(rt, broken):
    """Averaging left inverse ``M^{-1} P^T`` of the injection."""
    P, m = injection_and_multiplicity(rt, broken)
    Q = sp.diags(1.0 / m) @ P.matrix.T
    return TransferOp(sp.csr_matrix(Q), "BrokenRT", "RT")


def _broken_interp_matrix(broken, source, local_rows):
    """Assemble a block-diagonal map into the broken space from per-element
    blocks ``local_rows`` of shape ``(ne, nloc_broken, nloc_source)``."""
    ne = broken.mesh.ne
    r = np.repeat(broken.elem_dofs[:, :, None], source.nloc, axis=2)
    c = np.repeat(source.elem_dofs[:, None, :], broken.nloc, axis=1)
    M = sp.coo_matrix((local_rows.ravel(), (r.ravel(), c.ravel())), shape=(broken.ndofs, source.ndofs))
    M = M.tocsr()
    M.eliminate_zeros()
    return M


def _nodal_interp_blocks(broken, source):
    """Per-element matrices of the broken nodal interpolation of fields in an
    identity-mapped space (DG or H1Q1)."""
    mesh = broken.mesh
    loc = broken.local
    J = mesh.jacobians(loc.nodes)  # (ne, nloc, 2, 2)
    adj0 = np.stack([J[..., 1, 1], -J[..., 0, 1]], axis=-1)
    adj1 = np.stack([-J[..., 1, 0], J[..., 0, 0]], axis=-1)
    rows = np.where((loc.direction == 0)[None, :, None], adj0, adj1)  # (ne, nloc, 2)
    vals, _ = source.local.basis(loc.nodes)  # (nloc, nsrc, 2)
    blocks = np.einsum("elc,lmc->elm", rows, vals)
    return blocks * broken.signs[:, :, None]


def broken_interpolation(broken, source):
    """Matrix of nodal interpolation from a DG or H1Q1 space into ``broken``."""
    _check_pair(broken, source)
    if source.kind not in ("DG", "H1Q1"):
        raise SpaceError("source must be a DG or H1Q1 space")
    return _broken_interp_matrix(broken, source, _nodal_interp_blocks(broken, source))


def transfer_R(rt, broken, dg):
    """Map from the DG space to the conforming space: broken interpolation
    followed by averaging."""
    if dg.kind != "DG":
        raise SpaceError("transfer_R needs a DG source space")
    Q = oswald(rt, broken).matrix
    return TransferOp(sp.csr_matrix(Q @ broken_interpolation(broken, dg)), "DG", "RT")


def right_inverse_S(rt, dg):
    """Right inverse of :func:`transfer_R` mapping RT(p) into DG(p).

    On each element the field is ``J(x) z(x)`` where ``z`` is the reference
    RT function whose nodal values are the local coefficients divided by
    ``det J`` at the nodes.  Its components lie in Q_p and its nodal
    functionals reproduce the input coefficients exactly.
    """
    _check_pair(rt, dg)
    if dg.kind != "DG" or dg.degree != rt.degree:
        raise SpaceError("right_inverse_S needs DG of the same degree as RT")
    mesh = rt.mesh
    loc = rt.local
    ynodes = dg.local.nodes[: (dg.degree + 1) ** 2]
    Jn = mesh.jacobians(loc.nodes)
    detn = Jn[..., 0, 0] * Jn[..., 1, 1] - Jn[..., 0, 1] * Jn[..., 1, 0]  # (ne, nloc)
    Jy = mesh.jacobians(ynodes)  # (ne, ny, 2, 2)
    V, _ = loc.basis(ynodes)  # (ny, nloc, 2)
    # w_c(y) = sum_l J(y)[c, d_l] * theta_l(y)_{d_l} * sigma_l / det(x_l)
    theta = V[:, np.arange(loc.nloc), loc.direction]  # (ny, nloc)
    Jcol = Jy[:, :, :, loc.direction]  # (ne, ny, 2, nloc)
    blocks = np.einsum("eycl,yl->ecyl", Jcol, theta)
    blocks = blocks * (rt.signs / detn)[:, None, None, :]
    blocks = blocks.reshape(mesh.ne, dg.nloc, loc.nloc)
    r = np.repeat(dg.elem_dofs[:, :, None], loc.nloc, axis=2)
    c = np.repeat(rt.elem_dofs[:, None, :], dg.nloc, axis=1)
    # shared RT DOFs appear in two elements; each owns its own DG copy, so no
    # duplicates arise within a row
    S = sp.coo_matrix((blocks.ravel(), (r.ravel(), c.ravel())), shape=(dg.ndofs, rt.ndofs)).tocsr()
    S.eliminate_zeros()
    return TransferOp(S, "RT", "DG")


def coarse_embedding(rt, h1):
    """Interpolation of continuous bilinear vector fields into RT(p)."""
    if h1.kind != "H1Q1":
        raise SpaceError("coarse_embedding needs an H1Q1 source space")
    if rt.degree < 2:
        raise SpaceError("the bilinear coarse space embeds only for p >= 2")
    broken = build_space(rt.mesh, "BrokenRT", rt.degree)
    Q = oswald(rt, broken).matrix
    E = sp.csr_matrix(Q @ broken_interpolation(broken, h1))
    E.eliminate_zeros()
    return TransferOp(E, "H1Q1", "RT")


def aux_embedding_Pi(rt, broken, dg0):
    """Transfer from DG(p-1) to RT(p)."""
    if dg0.kind != "DG" or dg0.degree != rt.degree - 1:
        raise SpaceError("auxiliary space must be DG of degree p-1")
    op = transfer_R(rt, broken, dg0)
    return TransferOp(op.matrix, "DG0", "RT")


def face_jump_integral(space, coeffs, order=None):
    """Sum over interior faces of the squared jump of the full vector field."""
    from .assembly import face_traces

    total = 0.0
    for side_a, side_b, w in face_traces(space, space.mesh.interior_faces, order, gradients=False):
        ua = np.einsum("fqla,fl->fqa", side_a["val"], np.asarray(coeffs)[side_a["dofs"]])
        ub = np.einsum("fqla,fl->fqa", side_b["val"], np.asarray(coeffs)[side_b["dofs"]])
        total += float(np.sum(w[..., None] * (ua - ub) ** 2))
    return total
