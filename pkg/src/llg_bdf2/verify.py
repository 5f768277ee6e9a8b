"""Numerical checks of the analysis objects behind the scheme.

The defect measures how far Ritz projections of an exact solution are from
satisfying one discrete step. The remaining studies check approximation
properties of the nodal projection, the Ritz projection and the
normalization map, plus two small constants from the BDF2 stability argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sparse as sparse_la
from .fem import ERROR_DEGREE, P1Space, error_norms, ritz_project, ritz_project_vector, triangle_rule
from .mesh import TriMesh, crisscross_unit_square
from .problems import ProblemSpec
from .tangent import build_frame, discrete_project, normalize_at_nodes, project_pointwise

G_MATRIX = 0.25 * np.array([[1.0, -2.0], [-2.0, 5.0]])
BDF2_DELTA = np.array([1.5, -2.0, 0.5])


def fit_order(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def pairwise_orders(x, y) -> list:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return [float(np.log(y[i] / y[i + 1]) / np.log(x[i] / x[i + 1])) for i in range(len(x) - 1)]


# -- defect --------------------------------------------------------------------

def ritz_states(problem: ProblemSpec, space: P1Space, times, rule=None) -> list:
    ex = problem.exact
    return [ritz_project_vector(space, lambda x, t=t: ex.m(x, t), lambda x, t=t: ex.grad_m(x, t), rule)
            for t in times]


def compute_defect(problem: ProblemSpec, mesh: TriMesh, tau: float, n: int,
                   space: P1Space | None = None) -> float:
    """L2 norm of the tangent-space Riesz representer of the defect at step n."""
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    if n < 2:
        raise ValueError("the defect needs n >= 2")
    space = space or P1Space(mesh)
    m2, m1, m0 = ritz_states(problem, space, [(n - 2) * tau, (n - 1) * tau, n * tau])
    mhat = 2.0 * m1 - m2
    if np.linalg.norm(mhat, axis=1).min() < 0.25:
        raise ValueError("mesh too coarse: predictor of the Ritz surrogate is below 1/4")
    v = discrete_project(mhat, (1.5 * m0 - 2.0 * m1 + 0.5 * m2) / tau)
    f = np.asarray(problem.f(mesh.vertices, n * tau), dtype=float)
    lam, alpha = problem.lambda_sq, problem.alpha
    M, K = space.mass, space.stiffness
    C = space.cross_matrix(mhat)
    rhs = (alpha * (M @ v) + (C @ v.ravel()).reshape(-1, 3)
           + lam * (K @ m0) - M @ f)
    frame = build_frame(mhat)
    B = frame.basis
    Mr = sparse_la.as_csr(B.T @ space.mass3 @ B)
    d = sparse_la.solve_direct(Mr, frame.restrict(rhs), tol=1e-9)
    return float(np.sqrt(max(d @ (Mr @ d), 0.0)))


def sampled_defect(problem: ProblemSpec, mesh: TriMesh, num_steps: int,
                   space: P1Space | None = None) -> float:
    """Worst defect over n in {2, N/2, N}."""
    tau = problem.T / num_steps
    space = space or P1Space(mesh)
    ns = sorted({2, max(2, num_steps // 2), num_steps})
    return max(compute_defect(problem, mesh, tau, n, space) for n in ns)


@dataclass
class DefectReport:
    rows: list = field(default_factory=list)  # (h, tau, n, defect)
    order: float = float("nan")
    varied: str = "h"

    def as_table(self):
        return [dict(h=h, tau=t, n=n, defect=d) for h, t, n, d in self.rows]


def defect_h_ladder(problem: ProblemSpec, ns=(8, 16, 32), tau: float = 1e-5) -> DefectReport:
    """Mesh ladder with tau frozen small; worst defect over n in {2, N/2, N}."""
    N = int(round(problem.T / tau))
    rep = DefectReport(varied="h")
    for nm in ns:
        mesh = crisscross_unit_square(nm)
        rep.rows.append((mesh.h, tau, N, sampled_defect(problem, mesh, N)))
    rep.order = fit_order([r[0] for r in rep.rows], [r[3] for r in rep.rows])
    return rep


def defect_coupled_ladder(problem: ProblemSpec, ns=(8, 16, 32), inv_taus=(40, 80, 160)) -> DefectReport:
    """Simultaneous (h, tau) ladder sampled at n = N/2, fitted against h."""
    rep = DefectReport(varied="h")
    for nm, k in zip(ns, inv_taus):
        mesh = crisscross_unit_square(nm)
        N = int(round(problem.T * k))
        tau = problem.T / N
        rep.rows.append((mesh.h, tau, N // 2, compute_defect(problem, mesh, tau, N // 2)))
    rep.order = fit_order([r[0] for r in rep.rows], [r[3] for r in rep.rows])
    return rep


def defect_tau_ladder(problem: ProblemSpec, n_mesh: int = 64, taus=(0.02, 0.01, 0.005)) -> DefectReport:
    """Fixed fine mesh, tau halving; worst defect over n in {2, N/2, N}."""
    mesh = crisscross_unit_square(n_mesh)
    space = P1Space(mesh)
    rep = DefectReport(varied="tau")
    for tau in taus:
        N = int(round(problem.T / tau))
        rep.rows.append((mesh.h, tau, N, sampled_defect(problem, mesh, N, space)))
    rep.order = fit_order([r[1] for r in rep.rows], [r[3] for r in rep.rows])
    return rep


def ritz_length_deviation(problem: ProblemSpec, ns=(8, 16, 32), t: float = 0.0):
    """max_z ||R_h m(t)| - 1| per level, with the fitted order in h."""
    hs, devs = [], []
    for nm in ns:
        mesh = crisscross_unit_square(nm)
        (m,) = ritz_states(problem, P1Space(mesh), [t])
        hs.append(mesh.h)
        devs.append(float(np.max(np.abs(np.linalg.norm(m, axis=1) - 1.0))))
    return hs, devs, fit_order(hs, devs)


# -- operator studies ----------------------------------------------------------

def _smooth_unit(x):
    a = 1.3 * x[..., 0] + 0.7 * x[..., 1] ** 2
    b = np.sin(2.0 * x[..., 1]) + 0.4 * x[..., 0]
    u = np.stack([np.cos(a) * np.cos(b), np.sin(a) * np.cos(b), np.sin(b)], axis=-1)
    return u


def _smooth_vector(x):
    return np.stack([np.sin(3 * x[..., 0]) + x[..., 1], np.cos(2 * x[..., 1]) * x[..., 0],
                     np.exp(0.5 * x[..., 0] - x[..., 1])], axis=-1)


def projected_field(space: P1Space, u: np.ndarray, v: np.ndarray, rule):
    """Values (M, Q, 3) and gradients (M, Q, 3, 2) of P(u_h) v_h at quadrature points."""
    uq, vq = space.evaluate(u, rule), space.evaluate(v, rule)
    gu, gv = space.gradient(u), space.gradient(v)  # (M, 3, 2)
    # gradient of v - (u.v) u / |u|^2 on each element
    s = np.sum(uq * uq, axis=-1)[..., None]
    uv = np.sum(uq * vq, axis=-1)[..., None]
    d_uv = np.einsum("eqc,ecd->eqd", vq, gu) + np.einsum("eqc,ecd->eqd", uq, gv)
    d_s = 2.0 * np.einsum("eqc,ecd->eqd", uq, gu)
    grad = (gv[:, None] - uq[..., None] * (d_uv / s)[:, :, None, :]
            - (uv / s)[..., None] * gu[:, None]
            + (uv / s ** 2)[..., None] * uq[..., None] * d_s[:, :, None, :])
    return project_pointwise(uq, vq), grad


def projection_difference(space: P1Space, u: np.ndarray, v: np.ndarray, rule=None):
    """L2 and H1-seminorm of P(u_h) v_h - I_h[P(u_h) v_h] for P1 fields u_h, v_h."""
    rule = rule or triangle_rule(ERROR_DEGREE)
    val, grad = projected_field(space, u, v, rule)
    w = discrete_project(u, v)
    diff = val - space.evaluate(w, rule)
    gdiff = grad - space.gradient(w)[:, None]
    l2 = space.integrate(np.sum(diff ** 2, axis=-1), rule)
    semi = space.integrate(np.sum(gdiff ** 2, axis=(-2, -1)), rule)
    return np.sqrt(l2), np.sqrt(semi)


def projection_approximation_study(ns=(8, 16, 32, 64)) -> dict:
    hs, l2s, h1s = [], [], []
    for nm in ns:
        mesh = crisscross_unit_square(nm)
        space = P1Space(mesh)
        u = normalize_at_nodes(_smooth_unit(mesh.vertices))
        v = _smooth_vector(mesh.vertices)
        l2, h1 = projection_difference(space, u, v)
        hs.append(mesh.h)
        l2s.append(l2)
        h1s.append(h1)
    return dict(h=hs, l2=l2s, h1=h1s, order_l2=pairwise_orders(hs, l2s)[-1],
                order_h1=pairwise_orders(hs, h1s)[-1])


def _ritz_test_function(x):
    return np.cos(np.pi * x[..., 0]) * np.sin(2.0 * x[..., 1]) + x[..., 0] * x[..., 1] ** 2


def _ritz_test_gradient(x):
    gx = -np.pi * np.sin(np.pi * x[..., 0]) * np.sin(2.0 * x[..., 1]) + x[..., 1] ** 2
    gy = 2.0 * np.cos(np.pi * x[..., 0]) * np.cos(2.0 * x[..., 1]) + 2.0 * x[..., 0] * x[..., 1]
    return np.stack([gx, gy], axis=-1)


def ritz_study(ns=(8, 16, 32, 64)) -> dict:
    """H1 error order of the Ritz projection and its mean defect."""
    hs, h1s, mean_err = [], [], []
    rule = triangle_rule(ERROR_DEGREE)
    for nm in ns:
        mesh = crisscross_unit_square(nm)
        space = P1Space(mesh)
        r = ritz_project(space, _ritz_test_function, _ritz_test_gradient, rule)
        _, _, h1 = error_norms(space, r, _ritz_test_function, _ritz_test_gradient, rule)
        mean_v = space.integrate(_ritz_test_function(space.quadrature_points(rule)), rule)
        mean_r = float(np.sum(space.mass @ r))
        hs.append(mesh.h)
        h1s.append(h1)
        mean_err.append(abs(mean_r - mean_v) / abs(mean_v))
    return dict(h=hs, h1=h1s, order_h1=pairwise_orders(hs, h1s)[-1], mean_error=max(mean_err))


def normalization_lipschitz(samples: int = 20000, seed: int = 0, n_mesh: int = 8) -> dict:
    """Empirical Lipschitz constants of u -> u/|u| on fields with 1/2 <= |u| <= 2.

    Returns the worst pointwise ratio over random pairs and the L2 ratio for
    random P1 field pairs, with normalization applied pointwise at quadrature
    points.
    """
    rng = np.random.default_rng(seed)

    def draw(k):
        d = rng.normal(size=(k, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        return d * rng.uniform(0.5, 2.0, size=(k, 1))

    u, w = draw(samples), draw(samples)
    # pairs close together probe the local constant, where the bound is tight
    near = u + 0.01 * rng.normal(size=u.shape)
    near = near / np.linalg.norm(near, axis=1)[:, None] * np.clip(np.linalg.norm(near, axis=1), 0.5, 2.0)[:, None]
    ratios = []
    for a, b in ((u, w), (u, near)):
        num = np.linalg.norm(normalize_at_nodes(a) - normalize_at_nodes(b), axis=1)
        den = np.linalg.norm(a - b, axis=1)
        ok = den > 0
        ratios.append(np.max(num[ok] / den[ok]))
    pointwise = float(max(ratios))

    mesh = crisscross_unit_square(n_mesh)
    space = P1Space(mesh)
    rule = triangle_rule(4)
    l2_ratio = 0.0
    for _ in range(20):
        # nodal values of one sign pattern keep |u_h| >= 1/2 inside elements
        a = np.abs(draw(mesh.num_vertices)) + 0.0
        b = np.abs(draw(mesh.num_vertices))
        aq, bq = space.evaluate(a, rule), space.evaluate(b, rule)
        la, lb = np.linalg.norm(aq, axis=-1), np.linalg.norm(bq, axis=-1)
        if la.min() < 0.5 or lb.min() < 0.5:
            continue
        num = space.integrate(np.sum((aq / la[..., None] - bq / lb[..., None]) ** 2, axis=-1), rule)
        den = space.integrate(np.sum((aq - bq) ** 2, axis=-1), rule)
        l2_ratio = max(l2_ratio, float(np.sqrt(num / den)))
    return dict(pointwise=pointwise, l2=l2_ratio)


# -- analytic constants --------------------------------------------------------

def kappa(j: int) -> float:
    return 1.0 - 3.0 ** (-(j + 1))


def bdf2_constants_check(num_coeffs: int = 51) -> dict:
    """Eigenvalues of G and the delta * kappa convolution for j = 0..num_coeffs-1."""
    eig = np.linalg.eigvalsh(G_MATRIX)
    expected = np.array([(3.0 - 2.0 * np.sqrt(2.0)) / 4.0, (3.0 + 2.0 * np.sqrt(2.0)) / 4.0])
    k = np.array([kappa(j) for j in range(num_coeffs)])
    conv = np.array([sum(BDF2_DELTA[i] * k[j - i] for i in range(3) if j - i >= 0)
                     for j in range(num_coeffs)])
    target = np.zeros(num_coeffs)
    target[0] = 1.0
    return dict(
        eigenvalues=eig,
        eigen_error=float(np.max(np.abs(eig - expected))),
        positive=bool(np.all(eig > 0)),
        kappa=k,
        convolution=conv,
        convolution_error=float(np.max(np.abs(conv - target))),
    )


# -- suite --------------------------------------------------------------------

def run_verify_suite(problem: ProblemSpec, quick: bool = False) -> list:
    """Rows of (check, value, threshold, passed) for the CLI table."""
    rows = []

    def add(name, value, threshold, passed):
        rows.append(dict(check=name, value=float(value), threshold=threshold, passed=bool(passed)))

    c = bdf2_constants_check()
    add("G_eigenvalues", c["eigen_error"], "<=1e-12", c["eigen_error"] <= 1e-12 and c["positive"])
    add("kappa_delta_convolution", c["convolution_error"], "<=1e-14", c["convolution_error"] <= 1e-14)

    ns = (8, 16, 32) if quick else (8, 16, 32, 64)
    p = projection_approximation_study(ns)
    add("projection_order_L2", p["order_l2"], "2+-0.2", abs(p["order_l2"] - 2) <= 0.2)
    add("projection_order_H1", p["order_h1"], "1+-0.2", abs(p["order_h1"] - 1) <= 0.2)
    r = ritz_study(ns)
    add("ritz_order_H1", r["order_h1"], "1+-0.15", abs(r["order_h1"] - 1) <= 0.15)
    add("ritz_mean_error", r["mean_error"], "<=1e-11", r["mean_error"] <= 1e-11)
    nl = normalization_lipschitz()
    add("normalization_lipschitz", max(nl["pointwise"], nl["l2"]), "<=4", max(nl["pointwise"], nl["l2"]) <= 4)

    if problem.exact is not None:
        dh = defect_h_ladder(problem)
        add("defect_order_h", dh.order, ">=0.9", dh.order >= 0.9)
        dt = defect_tau_ladder(problem, n_mesh=32 if quick else 64)
        add("defect_order_tau", dt.order, ">=1.7", dt.order >= 1.7)
    return rows
