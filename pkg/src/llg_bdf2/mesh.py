"""Conforming triangulations of the unit square.

Two mesh families are provided:

* ``crisscross_unit_square(n)``: each of the n x n squares is split into four
  triangles through its center (4n^2 triangles, h = 1/n).
* ``diagonal_unit_square(n)``: each square is split by one diagonal
  (2n^2 right isosceles triangles, h = sqrt(2)/n).

``uniform_bisection`` refines every triangle once through its refinement
(longest) edge and closes the result so that no hanging nodes remain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# local edge k is opposite local vertex k
_EDGE_VERTS = ((1, 2), (2, 0), (0, 1))


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable 2D triangulation.

    ``parent_vertices[i] = (a, b)`` records, for refined meshes, that fine
    vertex ``i`` sits at the midpoint of coarse vertices ``a`` and ``b``
    (``a == b`` for copied coarse vertices).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    refinement_edge: np.ndarray
    level: int = 0
    parent: Optional["TriMesh"] = field(default=None, repr=False)
    parent_vertices: Optional[np.ndarray] = field(default=None, repr=False)
    family: str = "custom"

    def __post_init__(self):
        for name in ("vertices", "triangles", "refinement_edge"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        if self.parent_vertices is not None:
            self.parent_vertices.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def edge_lengths(self) -> np.ndarray:
        """(M, 3) lengths, column k is the edge opposite local vertex k."""
        p = self.vertices[self.triangles]
        out = np.empty((self.num_triangles, 3))
        for k, (a, b) in enumerate(_EDGE_VERTS):
            out[:, k] = np.linalg.norm(p[:, a] - p[:, b], axis=1)
        return out

    @property
    def h(self) -> float:
        return float(self.edge_lengths().max())

    def quasi_uniformity(self) -> float:
        """Smallest gamma with gamma^-1 h <= |K|^(1/2) <= diam(K) <= h."""
        return float(self.h / np.sqrt(self.areas()).min())

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        e = np.concatenate([self.triangles[:, list(ab)] for ab in _EDGE_VERTS])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def boundary_edges(self) -> np.ndarray:
        e = np.concatenate([self.triangles[:, list(ab)] for ab in _EDGE_VERTS])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    def check(self):
        """Raise MeshError unless areas are positive and the mesh is conforming."""
        if np.any(self.signed_areas() <= 0.0):
            raise MeshError("mesh has a degenerate or clockwise triangle")
        check_conforming(self)

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write(f"vertices {self.num_vertices} triangles {self.num_triangles}\n")
            for x, y in self.vertices:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
            for i, j, k in self.triangles:
                fh.write(f"{i} {j} {k}\n")

    def lineage(self) -> list:
        chain, m = [], self
        while m is not None:
            chain.append(m)
            m = m.parent
        return chain


def check_conforming(mesh: TriMesh):
    """No hanging nodes: each edge is shared by at most two triangles and no
    vertex lies in the interior of another triangle's edge."""
    e = np.concatenate([mesh.triangles[:, list(ab)] for ab in _EDGE_VERTS])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("edge shared by more than two triangles")
    # a hanging node shows up as a vertex strictly inside a boundary-of-patch
    # edge; boundary edges of a conforming mesh of a convex domain lie on the
    # domain boundary
    bnd = uniq[counts == 1]
    p = mesh.vertices
    lo, hi = p.min(axis=0), p.max(axis=0)
    tol = 1e-12 * max(1.0, float(np.abs(p).max()))
    a, b = p[bnd[:, 0]], p[bnd[:, 1]]
    on_boundary = np.zeros(len(bnd), dtype=bool)
    for d in range(2):
        for v in (lo[d], hi[d]):
            on_boundary |= (np.abs(a[:, d] - v) < tol) & (np.abs(b[:, d] - v) < tol)
    if not np.all(on_boundary):
        raise MeshError("mesh is not conforming (hanging node)")


def _longest_edge(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Local index of the longest edge; ties go to the smallest opposite vertex index."""
    p = vertices[triangles]
    lengths = np.empty((len(triangles), 3))
    for k, (a, b) in enumerate(_EDGE_VERTS):
        lengths[:, k] = np.sum((p[:, a] - p[:, b]) ** 2, axis=1)
    lmax = lengths.max(axis=1, keepdims=True)
    opposite = np.where(lengths >= lmax * (1 - 1e-12), triangles, np.iinfo(np.int64).max)
    return np.argmin(opposite, axis=1).astype(np.int64)


def _finalize(vertices, triangles, family, **kw) -> TriMesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    # orient counterclockwise
    p = vertices[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    cw = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    triangles[cw] = triangles[cw][:, [0, 2, 1]]
    ref = _longest_edge(vertices, triangles)
    return TriMesh(vertices, triangles, ref, family=family, **kw)


def _lexsorted(points: np.ndarray):
    order = np.lexsort((points[:, 0], points[:, 1]))
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return points[order], inv


def crisscross_unit_square(n: int) -> TriMesh:
    if n < 1:
        raise MeshError("n must be >= 1")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g)
    grid = np.column_stack([X.ravel(), Y.ravel()])
    c = (np.arange(n) + 0.5) / n
    CX, CY = np.meshgrid(c, c)
    centers = np.column_stack([CX.ravel(), CY.ravel()])
    pts = np.vstack([grid, centers])
    pts, inv = _lexsorted(pts)

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    vc = (n + 1) ** 2 + j * n + i
    tris = np.concatenate([
        np.column_stack([v00, v10, vc]),
        np.column_stack([v10, v11, vc]),
        np.column_stack([v11, v01, vc]),
        np.column_stack([v01, v00, vc]),
    ])
    tris = inv[tris]
    # group the four triangles of each square together
    order = np.argsort(np.tile(np.arange(n * n), 4), kind="stable")
    return _finalize(pts, tris[order], "crisscross")


def diagonal_unit_square(n: int) -> TriMesh:
    if n < 1:
        raise MeshError("n must be >= 1")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])  # already (y, x) lexicographic
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10, v01 = v00 + 1, v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    tris = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _finalize(pts, tris, "diagonal")


def uniform_bisection(mesh: TriMesh) -> TriMesh:
    """Bisect every triangle through its refinement edge.

    Edges are marked (all refinement edges first), then the marking is closed
    so that every triangle with a marked edge also has its refinement edge
    marked. Triangles are then split into 2, 3 or 4 children according to the
    marked edges, which leaves no hanging node.
    """
    mesh.check()
    tris = mesh.triangles
    ref = mesh.refinement_edge
    nv = mesh.num_vertices

    def key(a, b):
        return (a, b) if a < b else (b, a)

    def tri_edge(t, k):
        a, b = _EDGE_VERTS[k]
        return key(int(tris[t, a]), int(tris[t, b]))

    edge_tris: dict = {}
    for t in range(len(tris)):
        for k in range(3):
            edge_tris.setdefault(tri_edge(t, k), []).append(t)

    marked = {tri_edge(t, int(ref[t])) for t in range(len(tris))}
    stack = list(marked)
    while stack:
        e = stack.pop()
        for t in edge_tris[e]:
            r = tri_edge(t, int(ref[t]))
            if r not in marked:
                marked.add(r)
                stack.append(r)

    # new vertices in deterministic order (sorted edge keys)
    mid: dict = {}
    new_pts = []
    parents = [(v, v) for v in range(nv)]
    for e in sorted(marked):
        mid[e] = nv + len(new_pts)
        new_pts.append(0.5 * (mesh.vertices[e[0]] + mesh.vertices[e[1]]))
        parents.append(e)
    vertices = np.vstack([mesh.vertices, np.array(new_pts).reshape(-1, 2)])

    children = []

    def split(tri, r):
        """Bisect (a, b, c) with refinement edge index r; returns the two children."""
        a, b = _EDGE_VERTS[r]
        va, vb, vc = tri[a], tri[b], tri[r]
        m = mid[key(va, vb)]
        return (vc, va, m), (vb, vc, m)

    for t in range(len(tris)):
        tri = tuple(int(v) for v in tris[t])
        c1, c2 = split(tri, int(ref[t]))
        for child in (c1, c2):
            # the edge of the child that is an old side is (child[0], child[1])
            e = key(child[0], child[1])
            if e in marked:
                (g1, g2) = split(child, 2)
                children.extend([g1, g2])
            else:
                children.append(child)

    out = _finalize(
        vertices,
        np.array(children),
        mesh.family,
        level=mesh.level + 1,
        parent=mesh,
        parent_vertices=np.array(parents, dtype=np.int64),
    )
    return out


def refine(mesh: TriMesh, times: int = 1) -> TriMesh:
    for _ in range(times):
        mesh = uniform_bisection(mesh)
    return mesh


def nested_vertex_map(coarse: TriMesh, fine: TriMesh) -> np.ndarray:
    """(N_fine, 2) coarse-vertex pairs whose midpoint is each fine vertex.

    Uses recorded refinement parents when ``coarse`` is an ancestor of
    ``fine``; otherwise matches coordinates against coarse vertices and coarse
    edge midpoints. Raises MeshError when a fine vertex matches neither.
    """
    if fine.parent is coarse and fine.parent_vertices is not None:
        return np.asarray(fine.parent_vertices)
    scale = 1e9
    lookup = {}
    for i, p in enumerate(coarse.vertices):
        lookup[tuple(np.round(p * scale).astype(np.int64))] = (i, i)
    for a, b in coarse.edges():
        p = 0.5 * (coarse.vertices[a] + coarse.vertices[b])
        lookup.setdefault(tuple(np.round(p * scale).astype(np.int64)), (int(a), int(b)))
    out = np.empty((fine.num_vertices, 2), dtype=np.int64)
    for i, p in enumerate(fine.vertices):
        k = tuple(np.round(p * scale).astype(np.int64))
        if k not in lookup:
            raise MeshError(f"fine vertex {i} at {p} is not nested in the coarse mesh")
        out[i] = lookup[k]
    return out


def prolong(coarse: TriMesh, values: np.ndarray, fine: TriMesh) -> np.ndarray:
    """Exact P1 prolongation of nodal values from ``coarse`` to a nested ``fine`` mesh.

    Only one refinement generation apart is allowed per call: every fine vertex
    must be a coarse vertex or a coarse edge midpoint.
    """
    values = np.asarray(values)
    if values.shape[0] != coarse.num_vertices:
        raise MeshError("field does not live on the coarse mesh")
    pairs = nested_vertex_map(coarse, fine)
    return 0.5 * (values[pairs[:, 0]] + values[pairs[:, 1]])


def prolong_through(coarse: TriMesh, values: np.ndarray, fine: TriMesh) -> np.ndarray:
    """Prolong across several bisection generations using the fine mesh's lineage."""
    chain = fine.lineage()
    try:
        depth = next(i for i, m in enumerate(chain) if m is coarse)
    except StopIteration:
        raise MeshError("coarse mesh is not an ancestor of the fine mesh") from None
    for i in range(depth, 0, -1):
        values = prolong(chain[i], values, chain[i - 1])
    return values


def build_mesh(family: str, n: int, level: int = 0) -> TriMesh:
    """Mesh ladder entry: crisscross doubles n per level, diagonal bisects once per level."""
    if family == "crisscross":
        return crisscross_unit_square(n * 2 ** level)
    if family == "diagonal":
        return refine(diagonal_unit_square(n), level)
    raise MeshError(f"unknown mesh family {family!r}")
