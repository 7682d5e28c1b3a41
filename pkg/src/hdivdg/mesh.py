"""Straight-sided quadrilateral meshes.

The reference element is the unit square [0,1]^2 with corners numbered
counterclockwise, ``0:(0,0) 1:(1,0) 2:(1,1) 3:(0,1)``.  Local faces are

====  ============  ==================  ===================
face  position      parameter ``t``     vertices (t=0, t=1)
====  ============  ==================  ===================
0     ``yhat = 0``  ``(t, 0)``          0, 1
1     ``xhat = 1``  ``(1, t)``          1, 2
2     ``yhat = 1``  ``(t, 1)``          3, 2
3     ``xhat = 0``  ``(0, t)``          0, 3
====  ============  ==================  ===================
"""
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BOUNDARY = -1

FACE_VERTS = np.array([[0, 1], [1, 2], [3, 2], [0, 3]])
# +1 where the reference outward normal points along +xhat / +yhat
FACE_OUTWARD_SIGN = np.array([-1, 1, 1, -1])
REF_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, path, line, token, message):
        super().__init__(f"{path}:{line}: {message} (token {token!r})")
        self.line = line
        self.token = token


class NonManifoldFace(MeshError):
    pass


class InvertedElement(MeshError):
    def __init__(self, element, message=None):
        super().__init__(message or f"element {element} is inverted or degenerate (det J <= 0)")
        self.element = element


def face_param_to_ref(local_face, t):
    """Reference coordinates of the point with parameter ``t`` on a local face."""
    t = np.asarray(t, dtype=float)
    z, o = np.zeros_like(t), np.ones_like(t)
    xy = {0: (t, z), 1: (o, t), 2: (t, o), 3: (z, t)}[int(local_face)]
    return np.stack(xy, axis=-1)


def bilinear_shape(xhat):
    """Bilinear shape functions at reference points, shape ``(..., 4)``."""
    x, y = xhat[..., 0], xhat[..., 1]
    return np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=-1)


def bilinear_shape_grad(xhat):
    """Reference gradients of the shape functions, shape ``(..., 4, 2)``."""
    x, y = xhat[..., 0], xhat[..., 1]
    gx = np.stack([-(1 - y), 1 - y, y, -y], axis=-1)
    gy = np.stack([-(1 - x), -x, x, 1 - x], axis=-1)
    return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True)
class ElementTransform:
    """Bilinear map ``T`` from the unit square onto one element."""

    corners: np.ndarray  # (4, 2)

    def map(self, xhat):
        return bilinear_shape(np.asarray(xhat, float)) @ self.corners

    def jacobian(self, xhat):
        g = bilinear_shape_grad(np.asarray(xhat, float))  # (...,4,2)
        return np.einsum("...ak,ai->...ik", g, self.corners)

    def det(self, xhat):
        return np.linalg.det(self.jacobian(xhat))

    def adjugate(self, xhat):
        J = self.jacobian(xhat)
        adj = np.empty_like(J)
        adj[..., 0, 0] = J[..., 1, 1]
        adj[..., 1, 1] = J[..., 0, 0]
        adj[..., 0, 1] = -J[..., 0, 1]
        adj[..., 1, 0] = -J[..., 1, 0]
        return adj

    @property
    def is_affine(self):
        s = np.linspace(0, 1, 5)
        pts = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
        J = self.jacobian(pts)
        return float(np.max(np.abs(J - J[0]))) < 1e-13


@dataclass(frozen=True)
class VertexPatch:
    vertex: int
    elements: tuple


class QuadMesh:
    """Conforming mesh of straight-sided quadrilaterals.

    Parameters
    ----------
    vertices : (nv, 2) array_like
    elements : (ne, 4) array_like of int
        Corner indices in counterclockwise order.
    boundary_attr : dict, optional
        Maps a sorted vertex pair of a boundary face to an integer marker.
        Unlisted boundary faces get marker 1.
    """

    def __init__(self, vertices, elements, boundary_attr=None, check=True):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.elements = np.array(elements, dtype=np.int64).reshape(-1, 4)
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= len(self.vertices)):
            raise MeshError("element references a vertex index out of range")
        self._build_faces()
        attrs = boundary_attr or {}
        self.boundary_attr = {
            f: attrs.get(tuple(self.faces[f]), 1) for f in np.flatnonzero(self.face_elems[:, 1] == BOUNDARY)
        }
        self.vertices.setflags(write=False)
        self.elements.setflags(write=False)
        if check:
            self.check_orientation()

    # -- topology ---------------------------------------------------------

    def _build_faces(self):
        owners = {}
        for e, quad in enumerate(self.elements):
            for lf, (a, b) in enumerate(FACE_VERTS):
                key = tuple(sorted((int(quad[a]), int(quad[b]))))
                if key[0] == key[1]:
                    raise InvertedElement(e, f"element {e} has a collapsed face")
                owners.setdefault(key, []).append((e, lf))
        faces, felems, flocal = [], [], []
        for key, own in owners.items():
            if len(own) > 2:
                raise NonManifoldFace(f"face {key} is shared by {len(own)} elements")
            own = sorted(own)
            faces.append(key)
            if len(own) == 2:
                felems.append((own[0][0], own[1][0]))
                flocal.append((own[0][1], own[1][1]))
            else:
                felems.append((own[0][0], BOUNDARY))
                flocal.append((own[0][1], BOUNDARY))
        self.faces = np.array(faces, dtype=np.int64).reshape(-1, 2)
        self.face_elems = np.array(felems, dtype=np.int64).reshape(-1, 2)
        self.face_local = np.array(flocal, dtype=np.int64).reshape(-1, 2)
        self.elem_faces = np.empty((len(self.elements), 4), dtype=np.int64)
        for f in range(len(self.faces)):
            for side in range(2):
                e = self.face_elems[f, side]
                if e != BOUNDARY:
                    self.elem_faces[e, self.face_local[f, side]] = f

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def ne(self):
        return len(self.elements)

    @property
    def nf(self):
        return len(self.faces)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_elems[:, 1] == BOUNDARY)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_elems[:, 1] != BOUNDARY)

    def face_reversed(self, e, lf):
        """True if local face ``lf`` of ``e`` runs against its global direction.

        A face's global parameter runs from its lower vertex index to the
        higher one.
        """
        start = self.elements[e, FACE_VERTS[lf, 0]]
        return bool(start != min(self.elements[e, FACE_VERTS[lf]]))

    def valence(self):
        counts = np.bincount(self.elements.ravel(), minlength=self.nv)
        return int(counts.max())

    # -- geometry ---------------------------------------------------------

    def transform(self, e):
        return ElementTransform(self.vertices[self.elements[e]])

    def corners(self, elems=None):
        idx = self.elements if elems is None else self.elements[elems]
        return self.vertices[idx]  # (ne, 4, 2)

    def jacobians(self, xhat, elems=None):
        """Jacobians at reference points for many elements, ``(ne, npts, 2, 2)``.

        ``xhat`` is either ``(npts, 2)`` shared by all elements or
        ``(ne, npts, 2)``.
        """
        g = bilinear_shape_grad(np.asarray(xhat, float))
        C = self.corners(elems)
        if g.ndim == 3:
            return np.einsum("qak,eai->eqik", g, C)
        return np.einsum("eqak,eai->eqik", g, C)

    def map_points(self, xhat, elems=None):
        N = bilinear_shape(np.asarray(xhat, float))
        C = self.corners(elems)
        if N.ndim == 2:
            return np.einsum("qa,eai->eqi", N, C)
        return np.einsum("eqa,eai->eqi", N, C)

    def is_affine(self):
        """Per-element flag: Jacobian constant to 1e-13 on a 5x5 grid."""
        s = np.linspace(0, 1, 5)
        pts = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
        J = self.jacobians(pts)
        dev = np.abs(J - J[:, :1]).reshape(self.ne, -1).max(axis=1)
        return dev < 1e-13

    def element_areas(self):
        x, w = np.polynomial.legendre.leggauss(2)
        x, w = 0.5 * (x + 1), 0.5 * w
        pts = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
        ww = np.outer(w, w).ravel()
        return np.linalg.det(self.jacobians(pts)) @ ww

    def face_lengths(self):
        d = self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def face_h(self):
        """Penalty length scale per face: min over neighbours of area / length."""
        area = self.element_areas()
        ln = self.face_lengths()
        h = area[self.face_elems[:, 0]] / ln
        inner = self.face_elems[:, 1] != BOUNDARY
        h[inner] = np.minimum(h[inner], area[self.face_elems[inner, 1]] / ln[inner])
        return h

    def check_orientation(self, order=4):
        """Raise :class:`InvertedElement` unless det J > 0 at sample points."""
        s = (np.polynomial.legendre.leggauss(order)[0] + 1) / 2
        s = np.concatenate(([0.0], s, [1.0]))
        pts = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
        det = np.linalg.det(self.jacobians(pts))
        bad = np.flatnonzero(det.min(axis=1) <= 0)
        if len(bad):
            raise InvertedElement(int(bad[0]))

    # -- patches ------------------------------------------------------------

    def vertex_patches(self):
        incident = [[] for _ in range(self.nv)]
        for e, quad in enumerate(self.elements):
            for v in quad:
                incident[v].append(e)
        return [VertexPatch(v, tuple(els)) for v, els in enumerate(incident)]

    def canonical(self):
        """Sorted set of elements as tuples of rounded corner coordinates;
        used to compare meshes independent of numbering."""
        out = []
        for quad in self.corners():
            out.append(tuple(sorted(tuple(np.round(c, 12)) for c in quad)))
        return sorted(out)

    def __repr__(self):
        return f"QuadMesh(nv={self.nv}, ne={self.ne}, nf={self.nf})"


def vertex_patches(mesh):
    return mesh.vertex_patches()


# -- generators -------------------------------------------------------------


def cartesian_mesh(n, domain=(0.0, 1.0, 0.0, 1.0)):
    """``n x n`` grid of congruent axis-aligned rectangles."""
    if n < 1:
        raise ValueError("need at least one subdivision per side")
    x0, x1, y0, y1 = domain
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    elems = []
    for j in range(n):
        for i in range(n):
            v = j * (n + 1) + i
            elems.append((v, v + 1, v + n + 2, v + n + 1))
    return QuadMesh(verts, elems)


def parallelogram_star_mesh(levels=0):
    """Five unit rhombi around the origin (a star), refined ``levels`` times."""
    ang = 2 * np.pi * np.arange(5) / 5
    ring = np.column_stack([np.cos(ang), np.sin(ang)])
    tips = ring + np.roll(ring, -1, axis=0)
    verts = np.vstack([[0.0, 0.0], ring, tips])
    elems = [(0, 1 + k, 6 + k, 1 + (k + 1) % 5) for k in range(5)]
    mesh = QuadMesh(verts, elems)
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh


def skewed_mesh(n, skew):
    """Cartesian grid on the unit square with interior vertices displaced.

    Interior vertex ``(i, j)`` with ``i + j`` even moves by
    ``skew * h * (cos a, sin a)`` with ``a = pi (x + 2 y)``.  Each element
    has one such diagonal pair of corners, so it stays convex for
    ``skew <= 0.4`` and is a non-parallelogram whenever one of them moves.
    """
    if not 0 <= skew <= 0.4:
        raise ValueError("skew must lie in [0, 0.4]")
    base = cartesian_mesh(n)
    if skew == 0:
        return base
    h = 1.0 / n
    verts = base.vertices.copy()
    for j in range(1, n):
        for i in range(1, n):
            if (i + j) % 2:
                continue
            v = j * (n + 1) + i
            x, y = verts[v]
            a = np.pi * (x + 2 * y)
            verts[v] += skew * h * np.array([np.cos(a), np.sin(a)])
    return QuadMesh(verts, base.elements)


def refine_uniform(mesh):
    """Split every element into four through edge and centre midpoints."""
    verts = [tuple(v) for v in mesh.vertices]
    nv = mesh.nv
    face_mid = nv + np.arange(mesh.nf)
    verts.extend(0.5 * (mesh.vertices[mesh.faces[:, 0]] + mesh.vertices[mesh.faces[:, 1]]))
    centre = nv + mesh.nf + np.arange(mesh.ne)
    verts.extend(mesh.vertices[mesh.elements].mean(axis=1))
    elems = []
    # counterclockwise edge midpoints: bottom, right, top, left
    for e, q in enumerate(mesh.elements):
        m0, m1, m2, m3 = (face_mid[mesh.elem_faces[e, lf]] for lf in range(4))
        c = centre[e]
        elems.append((q[0], m0, c, m3))
        elems.append((m0, q[1], m1, c))
        elems.append((c, m1, q[2], m2))
        elems.append((m3, c, m2, q[3]))
    attrs = {}
    for f, mark in mesh.boundary_attr.items():
        a, b = mesh.faces[f]
        m = face_mid[f]
        attrs[tuple(sorted((a, m)))] = mark
        attrs[tuple(sorted((m, b)))] = mark
    return QuadMesh(np.array(verts), elems, boundary_attr=attrs)


# -- file format --------------------------------------------------------------


def save_mesh(mesh, path):
    lines = ["quadmesh 1", f"vertices {mesh.nv}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"elements {mesh.ne}")
    lines += [" ".join(str(int(v)) for v in q) for q in mesh.elements]
    bf = mesh.boundary_faces
    lines.append(f"boundary {len(bf)}")
    lines += [f"{mesh.faces[f, 0]} {mesh.faces[f, 1]} {mesh.boundary_attr[f]}" for f in bf]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path):
    """Read the ``quadmesh 1`` text format.

    Raises :class:`MeshParseError` with a line number on malformed input,
    and the topology errors of :class:`QuadMesh` on invalid meshes.
    """
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        s = raw.split("#", 1)[0].split()
        if s:
            rows.append((lineno, s))
    it = iter(rows)

    def next_row(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshParseError(path, len(rows) and rows[-1][0], "", f"unexpected end of file, expected {what}")

    def header(name):
        lineno, toks = next_row(name)
        if toks[0] != name or len(toks) != 2:
            raise MeshParseError(path, lineno, toks[0], f"expected '{name} <count>'")
        return lineno, _parse(int, toks[1], path, lineno)

    lineno, toks = next_row("magic line")
    if toks != ["quadmesh", "1"]:
        raise MeshParseError(path, lineno, " ".join(toks), "expected 'quadmesh 1'")
    _, nv = header("vertices")
    verts = []
    for _ in range(nv):
        lineno, toks = next_row("vertex")
        if len(toks) != 2:
            raise MeshParseError(path, lineno, " ".join(toks), "vertex line needs 2 coordinates")
        verts.append([_parse(float, t, path, lineno) for t in toks])
    _, ne = header("elements")
    elems = []
    for _ in range(ne):
        lineno, toks = next_row("element")
        if len(toks) != 4:
            raise MeshParseError(path, lineno, " ".join(toks), "element line needs 4 vertex indices")
        ids = [_parse(int, t, path, lineno) for t in toks]
        for t, v in zip(toks, ids):
            if not 0 <= v < nv:
                raise MeshParseError(path, lineno, t, "vertex index out of range")
        elems.append(ids)
    attrs = {}
    rest = list(it)
    if rest:
        lineno, toks = rest[0]
        if toks[0] != "boundary" or len(toks) != 2:
            raise MeshParseError(path, lineno, toks[0], "expected 'boundary <count>'")
        nb = _parse(int, toks[1], path, lineno)
        if len(rest) - 1 != nb:
            raise MeshParseError(path, lineno, toks[1], f"boundary section lists {len(rest) - 1} faces, header says {nb}")
        for lineno, toks in rest[1:]:
            if len(toks) != 3:
                raise MeshParseError(path, lineno, " ".join(toks), "boundary line needs 'va vb attr'")
            a, b, m = (_parse(int, t, path, lineno) for t in toks)
            attrs[tuple(sorted((a, b)))] = m
    counts = Counter()
    for q in elems:
        for a, b in FACE_VERTS:
            counts[tuple(sorted((q[a], q[b])))] += 1
    for key, c in counts.items():
        if c > 2:
            raise NonManifoldFace(f"face {key} is shared by {c} elements")
    return QuadMesh(verts, elems, boundary_attr=attrs)


def _parse(kind, token, path, lineno):
    try:
        return kind(token)
    except ValueError:
        raise MeshParseError(path, lineno, token, f"cannot parse {kind.__name__}") from None
