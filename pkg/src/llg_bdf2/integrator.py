"""Linearly implicit BDF2 tangent-plane integrator for LLG.

Each step solves one linear system for the discrete time derivative ``v`` in
the nodal tangent space of the anchor field (``m^0`` in the first step, the
extrapolation ``2 m^j - m^{j-1}`` afterwards). The tangent space is
parametrised by a two-vector frame per node, so the constraint holds to
round-off and the reduced system has 2N unknowns. Nodal lengths are never
renormalised.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import sparse as sparse_la
from .fem import ERROR_DEGREE, P1Space, error_norms, triangle_rule
from .mesh import TriMesh
from .problems import ProblemSpec
from .tangent import TangentFrame, build_frame, normalize_at_nodes

PREDICTOR_TOL = 1e-10


class InvariantViolation(RuntimeError):
    """A discrete invariant that the scheme guarantees was violated."""


@dataclass
class SimConfig:
    alpha: float
    lambda_ex_sq: float
    T: float
    num_steps: int
    error_degree: int = ERROR_DEGREE
    solver: str = "auto"
    gmres_tol: float = 1e-12
    gmres_restart: int = 50
    deterministic: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.lambda_ex_sq > 0:
            raise ValueError("lambda_ex_sq must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.num_steps < 2:
            raise ValueError("BDF2 needs at least two steps")

    @property
    def tau(self) -> float:
        return self.T / self.num_steps

    @classmethod
    def for_problem(cls, problem: ProblemSpec, num_steps: int, **kw) -> "SimConfig":
        return cls(alpha=problem.alpha, lambda_ex_sq=problem.lambda_sq, T=problem.T,
                   num_steps=num_steps, **kw)


@dataclass
class StepRecord:
    step: int
    time: float
    energy: float
    dirichlet: float  # ||grad m^j||^2
    min_length: float
    max_length: float
    min_length_growth: float = 0.0  # min over nodes of |m^j|^2 - |m^{j-1}|^2
    min_predictor_length: float = float("nan")
    tangent_residual: float = 0.0
    identity_residual: float = 0.0
    solver_iterations: int = 0
    solver_residual: float = 0.0
    err_l2: Optional[float] = None
    err_h1: Optional[float] = None


@dataclass
class Trajectory:
    tau: float
    records: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)
    m_final: Optional[np.ndarray] = None
    m_prev: Optional[np.ndarray] = None
    v_final: Optional[np.ndarray] = None
    wall_time: float = 0.0

    @property
    def num_steps(self) -> int:
        return len(self.records) - 1

    def max_error(self, norm: str = "h1") -> float:
        """Maximum over j = 1..N of the recorded error."""
        vals = [getattr(r, f"err_{norm}") for r in self.records[1:]]
        if any(v is None for v in vals):
            raise ValueError("trajectory carries no errors")
        return max(vals)

    def final_error(self, norm: str = "h1") -> float:
        return getattr(self.records[-1], f"err_{norm}")

    def state(self, j: int) -> np.ndarray:
        if j == self.num_steps and self.m_final is not None:
            return self.m_final
        if j == self.num_steps - 1 and self.m_prev is not None:
            return self.m_prev
        try:
            return self.checkpoints[j]
        except KeyError:
            raise KeyError(f"state {j} was not retained") from None


def nodal_forcing(problem: ProblemSpec, mesh: TriMesh, t: float) -> np.ndarray:
    return np.asarray(problem.f(mesh.vertices, t), dtype=float)


def initial_field(problem: ProblemSpec, mesh: TriMesh) -> np.ndarray:
    return normalize_at_nodes(problem.m0(mesh.vertices))


def energy(space: P1Space, m: np.ndarray, f: np.ndarray, lambda_sq: float) -> float:
    K, M = space.stiffness, space.mass
    ex = sum(m[:, c] @ (K @ m[:, c]) for c in range(3))
    zeeman = sum(f[:, c] @ (M @ m[:, c]) for c in range(3))
    return 0.5 * lambda_sq * ex - zeeman


def dirichlet(space: P1Space, m: np.ndarray) -> float:
    K = space.stiffness
    return float(sum(m[:, c] @ (K @ m[:, c]) for c in range(3)))


def step_operator(space: P1Space, mhat: np.ndarray, alpha: float, grad_coeff: float) -> sp.csr_matrix:
    """Full 3N operator alpha*M + C(mhat) + grad_coeff*K on node-major fields."""
    return sparse_la.as_csr(alpha * space.mass3 + space.cross_matrix(mhat) + grad_coeff * space.stiffness3)


def reduced_system(space: P1Space, mhat: np.ndarray, alpha: float, grad_coeff: float):
    frame = build_frame(mhat)
    A = step_operator(space, mhat, alpha, grad_coeff)
    B = frame.basis
    return sparse_la.as_csr(B.T @ A @ B), frame


def solve_tangent(space: P1Space, mhat, rhs, alpha, grad_coeff, config: SimConfig):
    """Find v in T_h(mhat) with a(v, phi) = rhs(phi) for all phi in T_h(mhat).

    ``rhs`` is the assembled functional as an (N, 3) array.
    """
    Ar, frame = reduced_system(space, mhat, alpha, grad_coeff)
    br = frame.restrict(rhs)
    info = {}
    x = sparse_la.solve(Ar, br, method=config.solver, tol=config.gmres_tol,
                        restart=config.gmres_restart, info=info)
    v = frame.expand(x)
    return v, frame, info


def _apply3(A, u):
    return np.column_stack([A @ u[:, c] for c in range(3)])


def first_step(space: P1Space, m0: np.ndarray, f1: np.ndarray, config: SimConfig):
    """Projection-free tangent-plane Euler step; returns (v0, m1, info)."""
    lam, tau = config.lambda_ex_sq, config.tau
    rhs = _apply3(space.mass, f1) - lam * _apply3(space.stiffness, m0)
    v0, frame, info = solve_tangent(space, m0, rhs, config.alpha, lam * tau, config)
    m1 = m0 + tau * v0
    info["tangent_residual"] = float(np.max(np.abs(np.sum(m0 * v0, axis=1))))
    return v0, m1, info


def bdf2_step(space: P1Space, m_j: np.ndarray, m_jm1: np.ndarray, f_jp1: np.ndarray,
              config: SimConfig):
    """One predictor-corrector BDF2 step; returns (v_j, m_{j+1}, info)."""
    lam, tau = config.lambda_ex_sq, config.tau
    mhat = 2.0 * m_j - m_jm1
    plen = np.linalg.norm(mhat, axis=1)
    if plen.min() < 1.0 - PREDICTOR_TOL:
        z = int(np.argmin(plen))
        raise InvariantViolation(f"predictor length {plen[z]:.17g} < 1 at node {z}")
    rhs = _apply3(space.mass, f_jp1) - (lam / 3.0) * _apply3(space.stiffness, 4.0 * m_j - m_jm1)
    v, frame, info = solve_tangent(space, mhat, rhs, config.alpha, (2.0 / 3.0) * lam * tau, config)
    m_next = (4.0 / 3.0) * m_j - (1.0 / 3.0) * m_jm1 + (2.0 / 3.0) * tau * v
    info["tangent_residual"] = float(np.max(np.abs(np.sum(mhat * v, axis=1))))
    info["min_predictor_length"] = float(plen.min())
    return v, m_next, info


def nodal_identity_residual(m_next, m_j, m_jm1) -> float:
    """max_z | |m^{j+1}|^2 - 4/3 |m^j|^2 + 1/3 |m^{j-1}|^2 - |m^{j+1} - 2 m^j + m^{j-1}|^2 |."""
    sq = lambda u: np.sum(u * u, axis=1)
    d2 = m_next - 2.0 * m_j + m_jm1
    r = sq(m_next) - (4.0 / 3.0) * sq(m_j) + (1.0 / 3.0) * sq(m_jm1) - sq(d2)
    return float(np.max(np.abs(r)))


def _record(space, problem, config, j, m, f, rule, prev=None, info=None) -> StepRecord:
    t = j * config.tau
    lengths = np.linalg.norm(m, axis=1)
    rec = StepRecord(
        step=j,
        time=t,
        energy=energy(space, m, f, config.lambda_ex_sq),
        dirichlet=dirichlet(space, m),
        min_length=float(lengths.min()),
        max_length=float(lengths.max()),
    )
    if prev is not None:
        rec.min_length_growth = float(np.min(lengths ** 2 - np.sum(prev * prev, axis=1)))
    if info:
        rec.tangent_residual = info.get("tangent_residual", 0.0)
        rec.identity_residual = info.get("identity_residual", 0.0)
        rec.min_predictor_length = info.get("min_predictor_length", float("nan"))
        rec.solver_iterations = int(info.get("iterations", 0))
        rec.solver_residual = float(info.get("residual", 0.0))
    if problem.exact is not None:
        ex = problem.exact
        l2, _, h1 = error_norms(space, m, lambda x: ex.m(x, t), lambda x: ex.grad_m(x, t), rule)
        rec.err_l2, rec.err_h1 = float(l2), float(h1)
    return rec


def run_simulation(problem: ProblemSpec, mesh: TriMesh, config: SimConfig,
                   checkpoints=(), keep_all: bool = False,
                   on_record: Optional[Callable[[StepRecord], None]] = None,
                   space: Optional[P1Space] = None) -> Trajectory:
    """First step followed by N-1 BDF2 steps.

    Only the two latest states are kept, plus the step indices listed in
    ``checkpoints`` (or every state with ``keep_all``).
    """
    start = time.perf_counter()
    space = space or P1Space(mesh)
    rule = triangle_rule(config.error_degree)
    tau, N = config.tau, config.num_steps
    keep = set(checkpoints)
    traj = Trajectory(tau=tau)

    def emit(rec):
        traj.records.append(rec)
        if on_record is not None:
            on_record(rec)

    def retain(j, m):
        if keep_all or j in keep:
            traj.checkpoints[j] = m.copy()

    m0 = initial_field(problem, mesh)
    f = nodal_forcing(problem, mesh, 0.0)
    emit(_record(space, problem, config, 0, m0, f, rule))
    retain(0, m0)

    f1 = nodal_forcing(problem, mesh, tau)
    try:
        v, m1, info = first_step(space, m0, f1, config)
    except sparse_la.SolverError as exc:
        raise sparse_la.SolverError(f"step 1: {exc}", exc.residual) from exc
    sq = lambda u: np.sum(u * u, axis=1)
    info["identity_residual"] = float(np.max(np.abs(sq(m1) - sq(m0) - tau ** 2 * sq(v))))
    emit(_record(space, problem, config, 1, m1, f1, rule, prev=m0, info=info))
    retain(1, m1)

    m_prev, m_cur = m0, m1
    for j in range(1, N):
        f_next = nodal_forcing(problem, mesh, (j + 1) * tau)
        try:
            v, m_next, info = bdf2_step(space, m_cur, m_prev, f_next, config)
        except sparse_la.SolverError as exc:
            raise sparse_la.SolverError(f"step {j + 1}: {exc}", exc.residual) from exc
        except InvariantViolation as exc:
            raise InvariantViolation(f"step {j + 1}: {exc}") from exc
        info["identity_residual"] = nodal_identity_residual(m_next, m_cur, m_prev)
        emit(_record(space, problem, config, j + 1, m_next, f_next, rule, prev=m_cur, info=info))
        retain(j + 1, m_next)
        m_prev, m_cur = m_cur, m_next

    traj.m_final, traj.m_prev, traj.v_final = m_cur, m_prev, v
    traj.wall_time = time.perf_counter() - start
    return traj


def eta_indicators(trajectory: Trajectory):
    """(eta_0, eta_n): first- and last-step jumps of the Dirichlet energy."""
    recs = trajectory.records
    if len(recs) < 2:
        raise ValueError("need at least two states")
    eta0 = recs[1].dirichlet - recs[0].dirichlet
    etan = recs[-2].dirichlet - recs[-1].dirichlet
    return eta0, etan


def interpolate_in_time(trajectory: Trajectory, t: float) -> np.ndarray:
    """Piecewise affine in time blend of the two states bracketing ``t``."""
    tau, N = trajectory.tau, trajectory.num_steps
    T = tau * N
    if t < 0.0 or t > T * (1 + 1e-14):
        raise ValueError(f"t = {t} outside [0, {T}]")
    s = t / tau
    j = min(int(np.floor(s + 1e-12)), N)
    if abs(s - round(s)) <= 1e-12:
        return trajectory.state(int(round(s))).copy()
    theta = s - j
    return theta * trajectory.state(j + 1) + (1.0 - theta) * trajectory.state(j)


# tolerance for the machine-precision laws checked on every run
INVARIANT_TOL = 1e-11


def invariant_summary(trajectory: Trajectory) -> dict:
    """Worst values of the per-step invariant diagnostics over a trajectory."""
    recs = trajectory.records[1:]
    preds = [r.min_predictor_length for r in recs if np.isfinite(r.min_predictor_length)]
    return dict(
        identity_residual=max(r.identity_residual for r in recs),
        tangent_residual=max(r.tangent_residual for r in recs),
        min_length=min(r.min_length for r in trajectory.records),
        max_length=max(r.max_length for r in trajectory.records),
        min_length_growth=min(r.min_length_growth for r in recs),
        min_predictor_length=min(preds) if preds else float("nan"),
    )


def check_invariants(trajectory: Trajectory, tol: float = INVARIANT_TOL) -> dict:
    """Raise InvariantViolation if a run broke a law the scheme guarantees."""
    s = invariant_summary(trajectory)
    problems = []
    if s["identity_residual"] > tol:
        problems.append(f"nodal identity residual {s['identity_residual']:.3e}")
    if s["tangent_residual"] > tol:
        problems.append(f"tangent residual {s['tangent_residual']:.3e}")
    if s["min_length"] < 1.0 - 10 * tol:
        problems.append(f"nodal length {s['min_length']!r} below 1")
    if s["min_length_growth"] < -10 * tol:
        problems.append(f"nodal length decreased by {-s['min_length_growth']:.3e}")
    if s["min_predictor_length"] < 1.0 - PREDICTOR_TOL:
        problems.append(f"predictor length {s['min_predictor_length']!r} below 1")
    if problems:
        raise InvariantViolation("; ".join(problems))
    return s
