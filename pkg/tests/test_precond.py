import numpy as np
import pytest
import scipy.sparse as sp

from hdivdg.assembly import assemble_ipdg
from hdivdg.fespace import TransferOp, build_space, essential_dofs
from hdivdg.mesh import cartesian_mesh, parallelogram_star_mesh, skewed_mesh
from hdivdg.precond import (
    PRECONDITIONERS,
    BlockInverse,
    RankDeficientTransfer,
    SingularBlockError,
    build_auxiliary_precond,
    build_fictitious_precond,
    build_precond,
    build_subspace_precond,
    entity_blocks,
    patch_dofs,
)
from hdivdg.solvers import cond_estimate
from hdivdg.tables import PoissonProblem

KINDS = ("sub", "fic", "aux")


def cond(n, p, eta, kind, mesh=None):
    return PoissonProblem.build(mesh or cartesian_mesh(n), p, eta).cond(kind)[:3]


@pytest.fixture(scope="module")
def skewed_problem():
    return PoissonProblem.build(skewed_mesh(4, 0.3), 3, 10.0)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("with_ess", [True, False])
def test_spd_contract(skewed_problem, kind, with_ess):
    prob = skewed_problem
    if with_ess:
        B = prob.preconditioner(kind)
    else:
        A = assemble_ipdg(prob.rt, prob.eta)
        B = build_precond(kind, A, prob.rt, prob.eta, None)
    r = np.random.default_rng(0)
    for _ in range(20):
        v, w = r.standard_normal((2, prob.ndofs))
        assert v @ B(v) > 0
        assert abs(v @ B(w) - w @ B(v)) < 1e-11 * np.linalg.norm(v) * np.linalg.norm(w)


@pytest.mark.parametrize("kind", KINDS)
def test_block_apply_matches_columns(skewed_problem, kind):
    B = skewed_problem.preconditioner(kind)
    X = np.random.default_rng(1).standard_normal((skewed_problem.ndofs, 3))
    Y = B(X)
    for j in range(3):
        np.testing.assert_allclose(Y[:, j], B(X[:, j]), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
def test_apply_is_bitwise_reproducible(skewed_problem, kind):
    v = np.random.default_rng(2).standard_normal(skewed_problem.ndofs)
    assert np.array_equal(skewed_problem.preconditioner(kind)(v), skewed_problem.preconditioner(kind)(v))


def test_identity_on_essential_dofs(skewed_problem):
    prob = skewed_problem
    v = np.zeros(prob.ndofs)
    v[prob.ess] = np.arange(1.0, len(prob.ess) + 1)
    for kind in KINDS:
        np.testing.assert_array_equal(prob.preconditioner(kind)(v), v)


def test_build_precond_dispatch(skewed_problem):
    assert build_precond("none", skewed_problem.A, skewed_problem.rt, 1.0) is None
    with pytest.raises(ValueError, match="sub"):
        build_precond("amg", skewed_problem.A, skewed_problem.rt, 1.0)
    assert PRECONDITIONERS == ("none", "sub", "fic", "aux")


# -- table values ----------------------------------------------------------------


@pytest.mark.parametrize(
    "kind,n,eta,expected,rel",
    [
        ("sub", 4, 10.0, 5.92, 0.02),
        ("sub", 16, 10.0, 5.92, 0.02),
        ("sub", 4, 1e4, 6.00, 0.02),
        ("fic", 4, 10.0, 2.92, 0.02),
        ("aux", 4, 10.0, 3.80, 0.05),
        ("aux", 16, 10.0, 5.02, 0.05),
    ],
)
def test_condition_numbers_p2(kind, n, eta, expected, rel):
    assert cond(n, 2, eta, kind)[2] == pytest.approx(expected, rel=rel)


def test_fictitious_improves_with_p():
    assert cond(4, 5, 10.0, "fic")[2] == pytest.approx(1.60, rel=0.02)


@pytest.mark.parametrize("kind", KINDS)
def test_h_robustness(kind):
    c4 = cond(4, 2, 10.0, kind)[2]
    c16 = cond(16, 2, 10.0, kind)[2]
    assert abs(c16 - c4) / c4 < 0.5


@pytest.mark.parametrize("p", [2, 3, 4, 5])
@pytest.mark.parametrize("eta", [10.0, 1e4])
def test_subspace_robust_in_p_and_eta(p, eta):
    assert 5 <= cond(4, p, eta, "sub")[2] <= 7


def test_subspace_upper_eigenvalue_by_valence():
    mesh = cartesian_mesh(4)
    lo, hi, _ = cond(4, 2, 10.0, "sub", mesh)
    assert hi <= 1 + (mesh.valence() + 1)
    assert lo > 0


def test_fictitious_eta_sensitivity_on_skewed_mesh():
    m = skewed_mesh(4, 0.3)
    assert cond(4, 2, 100.0, "fic", m)[2] > cond(4, 2, 1.0, "fic", m)[2]


def test_single_element():
    prob = PoissonProblem.build(cartesian_mesh(1), 2, 10.0)
    fic = prob.cond("fic")
    aux = prob.cond("aux")
    assert fic[0] > 0 and aux[0] > 0
    assert aux[2] <= 10 * fic[2]
    assert prob.cond("sub")[0] > 0  # coarse space is empty here


def test_star_mesh_valence_five():
    mesh = parallelogram_star_mesh(1)
    lo, hi, c = cond(0, 2, 10.0, "sub", mesh)
    assert hi <= 1 + (mesh.valence() + 1)
    assert c < 10


def test_custom_subsolver_hook():
    prob = PoissonProblem.build(cartesian_mesh(3), 2, 10.0)
    calls = []

    def dense(M):
        calls.append(M.shape)
        inv = np.linalg.inv(M.toarray())
        return lambda r: inv @ r

    v = np.random.default_rng(4).standard_normal(prob.ndofs)
    for build in (build_subspace_precond, build_fictitious_precond, build_auxiliary_precond):
        kw = {} if build is build_subspace_precond else {"eta": prob.eta}
        default = build(prob.A, prob.rt, ess=prob.ess, **kw)
        custom = build(prob.A, prob.rt, ess=prob.ess, subsolver=dense, **kw)
        np.testing.assert_allclose(custom(v), default(v), rtol=1e-9, atol=1e-13)
    assert len(calls) == 3


# -- patches and blocks ------------------------------------------------------------


@pytest.mark.parametrize("mesh", [cartesian_mesh(3), skewed_mesh(3, 0.3)], ids=repr)
def test_patch_functions_vanish_outside(mesh):
    rt = build_space(mesh, "RT", 3)
    xh = np.random.default_rng(0).uniform(0, 1, (12, 2))
    for patch, dofs in zip(mesh.vertex_patches(), patch_dofs(rt)):
        c = np.zeros(rt.ndofs)
        c[dofs] = np.random.default_rng(patch.vertex).standard_normal(len(dofs))
        outside = np.setdiff1d(np.arange(mesh.ne), patch.elements)
        if len(outside):
            assert np.abs(rt.evaluate(c, xh, outside)).max() == 0.0
        if len(dofs):
            assert np.abs(rt.evaluate(c, xh, list(patch.elements))).max() > 0


def test_patch_dofs_exclude_essential():
    rt = build_space(cartesian_mesh(3), "RT", 2)
    ess = set(essential_dofs(rt))
    assert all(not (set(d) & ess) for d in patch_dofs(rt, list(ess)))


def test_patches_and_coarse_span_the_space():
    # every non-essential DOF lies in some patch space
    rt = build_space(skewed_mesh(3, 0.2), "RT", 2)
    ess = essential_dofs(rt)
    covered = np.zeros(rt.ndofs, bool)
    for d in patch_dofs(rt, ess):
        covered[d] = True
    covered[ess] = True
    assert covered.all()


@pytest.mark.parametrize("partition", ["vertex", "face"])
@pytest.mark.parametrize("with_ess", [True, False])
def test_entity_blocks_partition(partition, with_ess):
    rt = build_space(skewed_mesh(3, 0.25), "RT", 3)
    ess = essential_dofs(rt) if with_ess else None
    blocks = entity_blocks(rt, ess, partition)
    allidx = np.concatenate([b.dofs for b in blocks])
    expected = np.setdiff1d(np.arange(rt.ndofs), ess if ess is not None else [])
    assert len(allidx) == len(np.unique(allidx))
    np.testing.assert_array_equal(np.sort(allidx), expected)


def _on_segment(pts, a, b, tol=1e-12):
    d = b - a
    t = (pts - a) @ d / (d @ d)
    off = np.abs((pts - a) @ np.array([d[1], -d[0]])) / np.linalg.norm(d)
    return (off < tol) & (t > -tol) & (t < 1 + tol)


@pytest.mark.parametrize("partition", ["vertex", "face"])
def test_entity_blocks_geometry(partition):
    mesh = skewed_mesh(3, 0.25)
    rt = build_space(mesh, "RT", 3)
    pts = rt.nodal_points()
    on_any_face = np.zeros(rt.ndofs, bool)
    for f, (a, b) in enumerate(mesh.faces):
        on_any_face |= _on_segment(pts, mesh.vertices[a], mesh.vertices[b])
    kinds = set()
    for blk in entity_blocks(rt, None, partition):
        kinds.add(blk.kind)
        x = pts[blk.dofs]
        if blk.kind == "face":
            a, b = mesh.vertices[mesh.faces[blk.entity]]
            assert _on_segment(x, a, b).all()
        elif blk.kind == "vertex":
            np.testing.assert_allclose(x, np.broadcast_to(mesh.vertices[blk.entity], x.shape), atol=1e-12)
        else:
            assert not on_any_face[blk.dofs].any()
    assert kinds == ({"vertex", "face", "element"} if partition == "vertex" else {"face", "element"})


def test_entity_blocks_rejects_unknown_partition():
    with pytest.raises(ValueError):
        entity_blocks(build_space(cartesian_mesh(2), "RT", 2), None, "edge")


def test_face_partition_is_a_valid_preconditioner():
    prob = PoissonProblem.build(cartesian_mesh(4), 2, 10.0)
    B = build_auxiliary_precond(prob.A, prob.rt, eta=10.0, ess=prob.ess, partition="face")
    lo, hi, c = cond_estimate(prob.A, B)
    assert lo > 0 and c > prob.cond("aux")[2]


# -- errors ---------------------------------------------------------------------------


def test_singular_block_reports_entity():
    A = sp.csr_matrix(np.diag([1.0, 2.0, -1.0, 3.0]))
    with pytest.raises(SingularBlockError) as err:
        BlockInverse(A, [np.array([0, 1]), np.array([2, 3])], labels=["face 0", "face 7"])
    assert err.value.entity == "face 7"
    assert "face 7" in str(err.value)


def test_block_inverse_exact_on_blocks():
    M = np.random.default_rng(0).standard_normal((6, 6))
    A = sp.csr_matrix(M @ M.T + 6 * np.eye(6))
    blocks = [np.array([0, 3]), np.array([1, 2, 5]), np.array([4])]
    inv = BlockInverse(A, blocks)
    Ad = A.toarray()
    expected = np.zeros((6, 6))
    for b in blocks:
        expected[np.ix_(b, b)] = np.linalg.inv(Ad[np.ix_(b, b)])
    np.testing.assert_allclose(inv(np.eye(6)), expected, atol=1e-12)


def test_fictitious_detects_broken_transfer(monkeypatch):
    import hdivdg.precond as pc

    prob = PoissonProblem.build(cartesian_mesh(2), 2, 10.0)
    real = pc.transfer_R
    interior = np.setdiff1d(np.arange(prob.ndofs), prob.ess)[0]

    def broken(rt, br, dg):
        R = real(rt, br, dg).matrix.tolil()
        R[interior, :] = 0.0
        return TransferOp(R.tocsr(), "DG", "RT")

    monkeypatch.setattr(pc, "transfer_R", broken)
    with pytest.raises(RankDeficientTransfer):
        build_fictitious_precond(prob.A, prob.rt, eta=10.0, ess=prob.ess)

