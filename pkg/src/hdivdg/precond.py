"""Preconditioners for the H(div) interior penalty operator.

All builders take the assembled (and possibly constrained) matrix and
return a symmetric positive definite :class:`LinearMap`.  DOFs listed in
``ess`` are treated as eliminated: they are left out of every subspace and
the returned map acts as the identity on them.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import assemble_ipdg
from .fespace import aux_embedding_Pi, build_space, coarse_embedding, transfer_R
from .solvers import LinearMap, SolverError, direct_factorize

log = logging.getLogger(__name__)

PRECONDITIONERS = ("none", "sub", "fic", "aux")


class SingularBlockError(SolverError):
    def __init__(self, entity):
        super().__init__(f"local block for {entity} is not positive definite")
        self.entity = entity


class RankDeficientTransfer(SolverError):
    pass


@dataclass(frozen=True)
class EntityBlock:
    kind: str  # "vertex", "face" or "element"
    entity: int
    dofs: np.ndarray


class BlockInverse:
    """Sum of exact inverses of principal submatrices of ``A``.

    Blocks of equal size are inverted and applied as one batched operation.
    """

    def __init__(self, A, blocks, labels=None):
        A = sp.csr_matrix(A)
        self.n = A.shape[0]
        labels = labels if labels is not None else list(range(len(blocks)))
        groups = {}
        for lab, idx in zip(labels, blocks):
            groups.setdefault(len(idx), []).append((lab, np.asarray(idx)))
        self.groups = []
        for size in sorted(groups):
            labs = [g[0] for g in groups[size]]
            idx = np.stack([g[1] for g in groups[size]])
            sub = np.stack([A[i][:, i].toarray() for i in idx])
            try:
                L = np.linalg.cholesky(sub)
            except np.linalg.LinAlgError:
                bad = next(l for l, s in zip(labs, sub) if np.linalg.eigvalsh(s)[0] <= 0)
                raise SingularBlockError(bad) from None
            Linv = np.linalg.inv(L)
            inv = np.matmul(Linv.transpose(0, 2, 1), Linv)
            self.groups.append((idx, inv))

    def __call__(self, r):
        out = np.zeros_like(r, dtype=float)
        for idx, inv in self.groups:
            if r.ndim == 1:
                y = np.matmul(inv, r[idx][..., None])[..., 0]
            else:
                y = np.matmul(inv, r[idx])
            np.add.at(out, idx, y)
        return out


def _essential_mask(n, ess):
    mask = np.zeros(n, dtype=bool)
    if ess is not None:
        mask[np.asarray(ess, dtype=np.int64)] = True
    return mask


def _with_identity(n, apply, ess_mask, name):
    if not ess_mask.any():
        return LinearMap(n, apply, name)

    def wrapped(r):
        y = apply(np.where(_expand(~ess_mask, r), r, 0.0))
        return np.where(_expand(ess_mask, r), r, y)

    return LinearMap(n, wrapped, name)


def _expand(mask, r):
    return mask if r.ndim == 1 else mask[:, None]


def _dof_owners(space):
    """Owning elements of each DOF, ``(ndofs, 2)`` with -1 padding."""
    owners = -np.ones((space.ndofs, 2), dtype=np.int64)
    for e in range(space.mesh.ne):
        for g in space.elem_dofs[e]:
            owners[g, 1 if owners[g, 0] >= 0 else 0] = e
    return owners


def patch_dofs(rt, ess=None):
    """DOFs of each vertex patch space: those whose basis function is
    supported in the union of the elements around the vertex."""
    mesh = rt.mesh
    owners = _dof_owners(rt)
    ess_mask = _essential_mask(rt.ndofs, ess)
    out = []
    inside = np.zeros(mesh.ne + 1, dtype=bool)  # last slot absorbs the -1 padding
    for patch in mesh.vertex_patches():
        els = np.array(patch.elements)
        inside[:] = False
        inside[els] = True
        inside[-1] = True
        cand = np.unique(rt.elem_dofs[els])
        ok = inside[owners[cand, 0]] & inside[owners[cand, 1]] & ~ess_mask[cand]
        out.append(cand[ok])
    return out


def constrained_coarse_basis(rt, h1, ess=None):
    """Coarse embedding restricted to fields with zero essential DOFs.

    At each vertex the two component columns are recombined so that the
    essential rows vanish; combinations that cannot be made to vanish are
    dropped.
    """
    E = coarse_embedding(rt, h1).matrix.tocsc()
    if ess is None or len(ess) == 0:
        return E.tocsr()
    nv = rt.mesh.nv
    ess_mask = _essential_mask(rt.ndofs, ess)
    cols = []
    for v in range(nv):
        pair = E[:, [v, v + nv]]
        rows = np.unique(pair.nonzero()[0])
        hit = rows[ess_mask[rows]]
        if len(hit) == 0:
            cols.append(pair)
            continue
        K = sla.null_space(pair[hit].toarray())
        if K.shape[1]:
            cols.append(pair @ sp.csr_matrix(K))
    if not cols:
        return sp.csr_matrix((rt.ndofs, 0))
    Ec = sp.hstack(cols).tocsr()
    Ec.eliminate_zeros()
    return Ec


def build_subspace_precond(A, rt_space, mesh=None, ess=None, subsolver=None):
    """Additive vertex-patch preconditioner with a bilinear coarse space."""
    rt = rt_space
    mesh = mesh or rt.mesh
    A = sp.csr_matrix(A)
    n = A.shape[0]
    subsolver = subsolver or (lambda M: direct_factorize(M, spd=True).solve)
    h1 = build_space(mesh, "H1Q1", 1)
    E = constrained_coarse_basis(rt, h1, ess)
    if E.shape[1]:
        coarse = subsolver(sp.csr_matrix(E.T @ A @ E))
    else:
        log.info("the coarse space is empty under the boundary constraints; skipped")
        coarse = lambda r: 0.0 * r  # noqa: E731
    patches = patch_dofs(rt, ess)
    empty = [i for i, d in enumerate(patches) if len(d) == 0]
    for i in empty:
        log.info("vertex %d has an empty patch space; skipped", i)
    keep = [i for i, d in enumerate(patches) if len(d)]
    local = BlockInverse(A, [patches[i] for i in keep], labels=[f"vertex {i}" for i in keep])

    def apply(r):
        return E @ coarse(E.T @ r) + local(r)

    return _with_identity(n, apply, _essential_mask(n, ess), "B_sub")


def _split_components(T, dg_vec, dg_scalar):
    """Columns of a map out of vector DG split into one block per component,
    each indexed by the scalar DG numbering."""
    m = dg_scalar.nloc
    ne = dg_vec.mesh.ne
    out = []
    T = sp.csc_matrix(T)
    for c in range(2):
        cols = (np.arange(ne)[:, None] * dg_vec.nloc + c * m + np.arange(m)[None, :]).ravel()
        out.append(sp.csr_matrix(T[:, cols]))
    return out


def _dg_correction(R_parts, A_dg, subsolver):
    solve = subsolver(A_dg)

    def apply(r):
        y = [Rc.T @ r for Rc in R_parts]
        stacked = np.stack(y, axis=-1) if r.ndim == 1 else np.concatenate(y, axis=1)
        sol = solve(stacked)
        if r.ndim == 1:
            return R_parts[0] @ sol[:, 0] + R_parts[1] @ sol[:, 1]
        k = r.shape[1]
        return R_parts[0] @ sol[:, :k] + R_parts[1] @ sol[:, k:]

    return apply


def _zero_rows(T, ess):
    if ess is None or len(ess) == 0:
        return sp.csr_matrix(T)
    keep = np.ones(T.shape[0])
    keep[np.asarray(ess)] = 0.0
    return sp.csr_matrix(sp.diags(keep) @ T)


def build_fictitious_precond(A, rt_space, mesh=None, eta=1.0, ess=None, subsolver=None):
    """``R A_dg^{-1} R^T`` with the DG(p) interior penalty operator.

    The vector DG operator is block diagonal over the two components, so a
    single scalar matrix is factored and applied to both.
    """
    rt = rt_space
    mesh = mesh or rt.mesh
    p = rt.degree
    n = A.shape[0]
    subsolver = subsolver or (lambda M: direct_factorize(M, spd=True).solve)
    broken = build_space(mesh, "BrokenRT", p)
    dg = build_space(mesh, "DG", p)
    dgs = build_space(mesh, "DG", p, ncomp=1)
    R = _zero_rows(transfer_R(rt, broken, dg).matrix, ess)
    ess_mask = _essential_mask(n, ess)
    dead = np.flatnonzero((np.diff(sp.csr_matrix(R).indptr) == 0) & ~ess_mask)
    if len(dead):
        raise RankDeficientTransfer(f"transfer into RT has {len(dead)} empty rows (first {dead[0]})")
    A_dg = assemble_ipdg(dgs, eta, penalty_order=p + 1)
    apply = _dg_correction(_split_components(R, dg, dgs), A_dg, subsolver)
    B = _with_identity(n, apply, ess_mask, "B_fic")
    _probe_positive(B, n, "B_fic")
    return B


def _probe_positive(B, n, name, samples=4):
    """Cheap check that ``v^T B v > 0`` on a few random vectors."""
    V = np.random.default_rng(0).standard_normal((n, samples))
    q = np.einsum("ik,ik->k", V, B(V))
    if np.any(q <= 0):
        raise RankDeficientTransfer(f"{name} has a non-positive probe value {q.min():.3e}")


def entity_blocks(rt, ess=None, partition="vertex"):
    """Partition of the RT DOFs by the mesh entity holding their node.

    With ``partition="vertex"`` nodes at mesh vertices form one block per
    vertex, nodes inside an edge one block per edge, and the rest one block
    per element.  With ``partition="face"`` vertex nodes stay with the face
    whose normal they carry.
    """
    mesh = rt.mesh
    p = rt.degree
    loc = rt.local
    nface = mesh.nf * p
    key = np.empty((rt.ndofs, 2), dtype=np.int64)  # (kind, entity), kind 0 vertex 1 face 2 element
    g = np.arange(nface)
    f, k = np.divmod(g, p)
    key[:nface, 0] = 1
    key[:nface, 1] = f
    if partition == "vertex":
        at_start, at_end = k == 0, k == p - 1
        key[:nface][at_start] = np.column_stack([np.zeros(at_start.sum(), int), mesh.faces[f[at_start], 0]])
        key[:nface][at_end] = np.column_stack([np.zeros(at_end.sum(), int), mesh.faces[f[at_end], 1]])
    elif partition != "face":
        raise ValueError("partition must be 'vertex' or 'face'")
    xh = loc.nodes
    on = [xh[:, 1] < 1e-14, xh[:, 0] > 1 - 1e-14, xh[:, 1] > 1 - 1e-14, xh[:, 0] < 1e-14]
    for e in range(mesh.ne):
        for l in loc.interior_dofs:
            gl = rt.elem_dofs[e, l]
            lf = next((j for j in range(4) if on[j][l]), None)
            key[gl] = (1, mesh.elem_faces[e, lf]) if lf is not None else (2, e)
    ess_mask = _essential_mask(rt.ndofs, ess)
    order = np.lexsort((np.arange(rt.ndofs), key[:, 1], key[:, 0]))
    order = order[~ess_mask[order]]
    ks = key[order]
    cuts = np.flatnonzero(np.any(np.diff(ks, axis=0) != 0, axis=1)) + 1
    names = ("vertex", "face", "element")
    blocks = []
    for idx in np.split(order, cuts):
        if len(idx):
            kind, ent = key[idx[0]]
            blocks.append(EntityBlock(names[kind], int(ent), idx))
    return blocks


def build_auxiliary_precond(A, rt_space, mesh=None, eta=1.0, ess=None, subsolver=None, partition="vertex"):
    """Entity block Jacobi plus a DG(p-1) auxiliary space correction."""
    rt = rt_space
    mesh = mesh or rt.mesh
    p = rt.degree
    n = A.shape[0]
    subsolver = subsolver or (lambda M: direct_factorize(M, spd=True).solve)
    blocks = entity_blocks(rt, ess, partition)
    smoother = BlockInverse(A, [b.dofs for b in blocks], labels=[f"{b.kind} {b.entity}" for b in blocks])
    broken = build_space(mesh, "BrokenRT", p)
    dg0 = build_space(mesh, "DG", p - 1)
    dg0s = build_space(mesh, "DG", p - 1, ncomp=1)
    Pi = _zero_rows(aux_embedding_Pi(rt, broken, dg0).matrix, ess)
    A0 = assemble_ipdg(dg0s, eta, penalty_order=p + 1)
    coarse = _dg_correction(_split_components(Pi, dg0, dg0s), A0, subsolver)

    def apply(r):
        return smoother(r) + coarse(r)

    return _with_identity(n, apply, _essential_mask(n, ess), "B_aux")


def build_precond(kind, A, rt, eta, ess=None):
    """Dispatch on the preconditioner name used by the command line."""
    if kind == "none":
        return None
    if kind == "sub":
        return build_subspace_precond(A, rt, ess=ess)
    if kind == "fic":
        return build_fictitious_precond(A, rt, eta=eta, ess=ess)
    if kind == "aux":
        return build_auxiliary_precond(A, rt, eta=eta, ess=ess)
    raise ValueError(f"unknown preconditioner {kind!r}; choose from {', '.join(PRECONDITIONERS)}")
