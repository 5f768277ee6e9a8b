"""P1 finite elements on triangles.

Scalar matrices are assembled once per mesh and cached on a ``P1Space``;
vector-valued forms act componentwise. Nodal fields are plain arrays of
shape ``(N,)`` or ``(N, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import ceil

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import roots_jacobi

from .mesh import MeshError, TriMesh
from .sparse import SolverError, as_csr

MASS_DEGREE = 2
WEIGHTED_DEGREE = 3
ERROR_DEGREE = 6


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle; weights sum to one."""

    points: np.ndarray  # (Q, 3) barycentric
    weights: np.ndarray  # (Q,)
    degree: int


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss-Jacobi product rule, exact up to ``degree``.

    All weights are positive and all points are interior.
    """
    n = max(1, ceil((degree + 1) / 2))
    xs, ws = roots_jacobi(n, 0.0, 0.0)
    xr, wr = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xs + 1.0)
    r = 0.5 * (xr + 1.0)
    pts, wts = [], []
    for rj, wrj in zip(r, wr):
        for si, wsi in zip(s, ws):
            xi, eta = (1.0 - rj) * si, rj
            pts.append((1.0 - xi - eta, xi, eta))
            wts.append(wsi * wrj)
    w = np.array(wts)
    return QuadratureRule(np.array(pts), w / w.sum(), degree)


def local_mass(area: float) -> np.ndarray:
    return area / 12.0 * np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])


class P1Space:
    """Geometry, cached matrices and quadrature helpers for one mesh."""

    def __init__(self, mesh: TriMesh):
        if np.any(mesh.signed_areas() <= 0.0):
            raise MeshError("degenerate triangle")
        self.mesh = mesh
        self.tri = mesh.triangles
        self.n = mesh.num_vertices
        p = mesh.vertices[self.tri]
        self.corners = p
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (M, 2, 2), columns
        self.area = 0.5 * np.abs(np.linalg.det(J))
        Jinv = np.linalg.inv(J)  # rows are grad(lambda_1), grad(lambda_2)
        g = np.empty((len(self.tri), 3, 2))
        g[:, 1] = Jinv[:, 0]
        g[:, 2] = Jinv[:, 1]
        g[:, 0] = -g[:, 1] - g[:, 2]
        self.grad_lambda = g
        self._I = np.repeat(self.tri, 3, axis=1).ravel()
        self._J = np.tile(self.tri, (1, 3)).ravel()

    def _assemble(self, local: np.ndarray) -> sp.csr_matrix:
        A = sp.coo_matrix((local.ravel(), (self._I, self._J)), shape=(self.n, self.n))
        return as_csr(A)

    # -- matrices ---------------------------------------------------------

    def local_mass_matrices(self, rule: QuadratureRule | None = None) -> np.ndarray:
        rule = rule or triangle_rule(MASS_DEGREE)
        phi = rule.points
        ref = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
        return self.area[:, None, None] * ref

    def local_stiffness_matrices(self) -> np.ndarray:
        g = self.grad_lambda
        return self.area[:, None, None] * np.einsum("eid,ejd->eij", g, g)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self._assemble(self.local_mass_matrices())

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return self._assemble(self.local_stiffness_matrices())

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return np.asarray(self.mass.sum(axis=1)).ravel()

    @cached_property
    def _weighted_tensor(self) -> np.ndarray:
        rule = triangle_rule(WEIGHTED_DEGREE)
        phi = rule.points
        return np.einsum("q,qi,qj,qk->ijk", rule.weights, phi, phi, phi)

    def weighted_mass(self, w: np.ndarray) -> sp.csr_matrix:
        """W[i, j] = integral of w * phi_i * phi_j for a P1 scalar ``w``."""
        wl = np.asarray(w, dtype=float)[self.tri]
        local = self.area[:, None, None] * np.einsum("ijk,ek->eij", self._weighted_tensor, wl)
        return self._assemble(local)

    @cached_property
    def mass3(self) -> sp.csr_matrix:
        return vector_block(self.mass)

    @cached_property
    def stiffness3(self) -> sp.csr_matrix:
        return vector_block(self.stiffness)

    def cross_matrix(self, w: np.ndarray) -> sp.csr_matrix:
        """Matrix of the form (v, phi) -> <w x v, phi> on node-major 3-vector fields.

        Uses (w x e_b) . e_a = eps[a, c, b] w_c, so the 3x3 block of node pair
        (i, j) is sum_c W_c[i, j] * E_c with (E_c)[a, b] = eps[a, c, b].
        """
        w = np.asarray(w, dtype=float)
        out = None
        for c in range(3):
            E = np.zeros((3, 3))
            for a in range(3):
                for b in range(3):
                    E[a, b] = levi_civita(a, c, b)
            term = sp.kron(self.weighted_mass(w[:, c]), E, format="csr")
            out = term if out is None else out + term
        return as_csr(out)

    # -- quadrature helpers ----------------------------------------------

    def quadrature_points(self, rule: QuadratureRule) -> np.ndarray:
        """(M, Q, 2) physical quadrature points (cached per rule, read-only)."""
        cache = self.__dict__.setdefault("_qp_cache", {})
        key = (rule.degree, rule.points.tobytes())
        if key not in cache:
            x = np.einsum("qk,ekd->eqd", rule.points, self.corners)
            x.setflags(write=False)
            cache[key] = x
        return cache[key]

    def evaluate(self, u: np.ndarray, rule: QuadratureRule) -> np.ndarray:
        """Values of a P1 field at quadrature points, shape (M, Q) or (M, Q, 3)."""
        ul = np.asarray(u)[self.tri]  # (M, 3[, C])
        return np.einsum("qk,ek...->eq...", rule.points, ul)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Elementwise constant gradient, shape (M, 2) or (M, 3, 2)."""
        ul = np.asarray(u)[self.tri]
        if ul.ndim == 2:
            return np.einsum("ek,ekd->ed", ul, self.grad_lambda)
        return np.einsum("ekc,ekd->ecd", ul, self.grad_lambda)

    def integrate(self, values: np.ndarray, rule: QuadratureRule) -> float:
        """Integral of pointwise values given at quadrature points (M, Q)."""
        return float(np.sum(self.area * (values @ rule.weights)))

    def load_vector(self, values: np.ndarray, rule: QuadratureRule) -> np.ndarray:
        """b_i = integral of g * phi_i from values of g at quadrature points (M, Q[, C])."""
        vals = np.asarray(values)
        local = np.einsum("e,q,qk,eq...->ek...", self.area, rule.weights, rule.points, vals)
        shape = (self.n,) + vals.shape[2:]
        out = np.zeros(shape)
        np.add.at(out, self.tri, local)
        return out

    def gradient_load_vector(self, grads: np.ndarray, rule: QuadratureRule) -> np.ndarray:
        """b_i = integral of grad g . grad phi_i from grad g at quadrature points (M, Q, 2)."""
        avg = np.einsum("q,eqd->ed", rule.weights, grads)
        local = self.area[:, None] * np.einsum("ed,ekd->ek", avg, self.grad_lambda)
        out = np.zeros(self.n)
        np.add.at(out, self.tri, local)
        return out

    # -- Ritz projection --------------------------------------------------

    @cached_property
    def _ritz_lu(self):
        c = self.mass @ np.ones(self.n)
        A = sp.bmat([[self.stiffness, sp.csr_matrix(c[:, None])],
                     [sp.csr_matrix(c[None, :]), sp.csr_matrix(np.array([[-1.0]]))]],
                    format="csc")
        try:
            return spla.splu(A), c
        except RuntimeError as exc:
            raise SolverError(f"Ritz system factorization failed: {exc}") from exc


def levi_civita(i: int, j: int, k: int) -> int:
    return (i - j) * (j - k) * (k - i) // 2


def vector_block(A: sp.spmatrix) -> sp.csr_matrix:
    """Componentwise action on node-major 3-vector fields: A kron I3."""
    return as_csr(sp.kron(A, sp.identity(3), format="csr"))


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    return P1Space(mesh).mass


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    return P1Space(mesh).stiffness


def assemble_weighted_mass(mesh: TriMesh, w: np.ndarray) -> sp.csr_matrix:
    return P1Space(mesh).weighted_mass(w)


def interpolate_nodal(mesh: TriMesh, g) -> np.ndarray:
    """Nodal interpolant: the values of ``g`` at the mesh vertices."""
    return np.asarray(g(mesh.vertices), dtype=float)


def error_norms(space: P1Space, u, exact, exact_grad, rule: QuadratureRule | None = None):
    """(L2, H1-seminorm, H1) norms of ``u - exact`` by quadrature.

    ``exact`` maps points (..., 2) to values (...,) or (..., 3); ``exact_grad``
    maps to (..., 2) or (..., 3, 2).
    """
    rule = rule or triangle_rule(ERROR_DEGREE)
    x = space.quadrature_points(rule)
    diff = space.evaluate(u, rule) - exact(x)
    gdiff = space.gradient(u)[:, None] - exact_grad(x)
    sq = diff ** 2
    gsq = gdiff ** 2
    l2 = space.integrate(sq.reshape(sq.shape[0], sq.shape[1], -1).sum(axis=2), rule)
    semi = space.integrate(gsq.reshape(gsq.shape[0], gsq.shape[1], -1).sum(axis=2), rule)
    return np.sqrt(l2), np.sqrt(semi), np.sqrt(l2 + semi)


def field_norms(space: P1Space, u: np.ndarray):
    """Exact (L2, H1-seminorm) norms of a P1 field via M and K."""
    u = np.asarray(u)
    if u.ndim == 1:
        u = u[:, None]
    l2 = sum(u[:, c] @ (space.mass @ u[:, c]) for c in range(u.shape[1]))
    semi = sum(u[:, c] @ (space.stiffness @ u[:, c]) for c in range(u.shape[1]))
    return np.sqrt(max(l2, 0.0)), np.sqrt(max(semi, 0.0))


def ritz_project(space: P1Space, v, grad_v, rule: QuadratureRule | None = None) -> np.ndarray:
    """Neumann Ritz projection of a scalar function.

    Solves <grad R v, grad psi> + <R v, 1><psi, 1> = <grad v, grad psi> + <v, 1><psi, 1>
    through the bordered system [[K, c], [c^T, -1]] with c = M 1, which is the
    rank-one term written out with one auxiliary unknown.
    """
    rule = rule or triangle_rule(ERROR_DEGREE)
    x = space.quadrature_points(rule)
    vals = v(x)
    grads = grad_v(x)
    mean = space.integrate(vals, rule)
    lu, c = space._ritz_lu
    b = space.gradient_load_vector(grads, rule) + mean * c
    sol = lu.solve(np.append(b, 0.0))
    if not np.all(np.isfinite(sol)):
        raise SolverError("Ritz solve produced non-finite values")
    return sol[:-1]


def ritz_project_vector(space: P1Space, m, grad_m, rule: QuadratureRule | None = None) -> np.ndarray:
    """Componentwise Ritz projection of a 3-vector function; returns (N, 3)."""
    return np.column_stack([
        ritz_project(space, lambda x, c=c: m(x)[..., c], lambda x, c=c: grad_m(x)[..., c, :], rule)
        for c in range(3)
    ])
