"""Benchmark problems on the unit square.

Functions of space take points of shape ``(..., 2)``; vector values have a
trailing axis of length 3 and gradients a trailing ``(3, 2)`` block.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .tangent import project_pointwise

Field = Callable[..., np.ndarray]


@dataclass(frozen=True)
class ExactBundle:
    m: Field  # (x, t) -> (..., 3)
    dt_m: Field
    grad_m: Field  # (x, t) -> (..., 3, 2)
    lap_m: Field


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    m0: Field  # x -> (..., 3)
    f: Field  # (x, t) -> (..., 3)
    alpha: float
    lambda_sq: float
    T: float
    exact: Optional[ExactBundle] = None

    def with_params(self, alpha=None, lambda_sq=None, T=None) -> "ProblemSpec":
        """Override physical parameters.

        Manufactured problems are rebuilt so that the forcing stays consistent.
        """
        alpha = self.alpha if alpha is None else alpha
        lambda_sq = self.lambda_sq if lambda_sq is None else lambda_sq
        T = self.T if T is None else T
        if (alpha, lambda_sq, T) == (self.alpha, self.lambda_sq, self.T):
            return self
        return get_problem(self.name, alpha=alpha, lambda_sq=lambda_sq, T=T)


def f_from_exact(bundle: ExactBundle, alpha: float, lambda_sq: float) -> Field:
    """Forcing for which ``bundle.m`` solves LLG exactly."""

    def f(x, t):
        m = bundle.m(x, t)
        dm = bundle.dt_m(x, t)
        return alpha * dm + np.cross(m, dm) - lambda_sq * bundle.lap_m(x, t)

    return f


def _problem_from_exact(name, bundle, alpha, lambda_sq, T) -> ProblemSpec:
    return ProblemSpec(
        name=name,
        m0=lambda x: bundle.m(x, 0.0),
        f=f_from_exact(bundle, alpha, lambda_sq),
        alpha=alpha,
        lambda_sq=lambda_sq,
        T=T,
        exact=bundle,
    )


# -- cubic profile rotating in time ---------------------------------------

def cubic_bundle(T: float) -> ExactBundle:
    omega = 3.0 * np.pi / T

    def parts(x):
        x1 = np.asarray(x)[..., 0]
        p = x1 ** 3 - 1.5 * x1 ** 2 + 0.25
        dp = 3.0 * x1 ** 2 - 3.0 * x1
        ddp = 6.0 * x1 - 3.0
        q = np.sqrt(1.0 - p ** 2)
        return p, dp, ddp, q

    def m(x, t):
        p, _, _, q = parts(x)
        s, c = np.sin(omega * t), np.cos(omega * t)
        return np.stack([-p * s, q, -p * c], axis=-1)

    def dt_m(x, t):
        p, _, _, _ = parts(x)
        s, c = np.sin(omega * t), np.cos(omega * t)
        return np.stack([-p * omega * c, np.zeros_like(p), p * omega * s], axis=-1)

    def grad_m(x, t):
        p, dp, _, q = parts(x)
        s, c = np.sin(omega * t), np.cos(omega * t)
        g = np.zeros(p.shape + (3, 2))
        g[..., 0, 0] = -dp * s
        g[..., 1, 0] = -p * dp / q
        g[..., 2, 0] = -dp * c
        return g

    def lap_m(x, t):
        p, dp, ddp, q = parts(x)
        s, c = np.sin(omega * t), np.cos(omega * t)
        qpp = -(dp ** 2 + p * ddp) / q - p ** 2 * dp ** 2 / q ** 3
        return np.stack([-ddp * s, qpp, -ddp * c], axis=-1)

    return ExactBundle(m, dt_m, grad_m, lap_m)


def problem_cubic(alpha=0.2, lambda_sq=1.0, T=0.2) -> ProblemSpec:
    return _problem_from_exact("cubic", cubic_bundle(T), alpha, lambda_sq, T)


# -- compactly supported bump ----------------------------------------------

def bump_bundle(T: float, D: float = 400.0, chi: float = 0.1) -> ExactBundle:
    """Bump of radius 1/2 around the center; ``chi`` shifts the pole of g(t) = (T+chi)/(T+chi-t)."""

    def g(t):
        return (T + chi) / (T + chi - t)

    def dg(t):
        return (T + chi) / (T + chi - t) ** 2

    def core(x, t):
        x = np.asarray(x, dtype=float)
        y = x - 0.5
        d = np.sum(y ** 2, axis=-1)
        a = 0.25 - d
        gt = g(t)
        # exp(-g/a) underflows well before a -> 0; treat that band as outside
        inside = a > gt / 700.0
        a_safe = np.where(inside, a, 1.0)
        E = np.where(inside, D * np.exp(-gt / a_safe), 0.0)
        return y, d, a_safe, E, gt, inside

    def m(x, t):
        y, d, _, E, _, _ = core(x, t)
        Q = np.maximum(0.0, 1.0 - E ** 2 * d)
        return np.stack([E * y[..., 0], E * y[..., 1], np.sqrt(Q)], axis=-1)

    def dt_m(x, t):
        y, d, a, E, _, _ = core(x, t)
        dE = -E * dg(t) / a
        Q = np.maximum(0.0, 1.0 - E ** 2 * d)
        dQ = -2.0 * E * dE * d
        return np.stack([dE * y[..., 0], dE * y[..., 1], dQ / (2.0 * np.sqrt(Q))], axis=-1)

    def _spatial(x, t):
        y, d, a, E, gt, _ = core(x, t)
        gradE = (E * (-2.0 * gt / a ** 2))[..., None] * y
        lapE = E * (4.0 * gt ** 2 * d / a ** 4 - 2.0 * gt * (2.0 / a ** 2 + 4.0 * d / a ** 3))
        Q = np.maximum(0.0, 1.0 - E ** 2 * d)
        gradQ = -(2.0 * (E * d)[..., None] * gradE + 2.0 * (E ** 2)[..., None] * y)
        lapQ = -((2.0 * np.sum(gradE ** 2, axis=-1) + 2.0 * E * lapE) * d
                 + 8.0 * E * np.sum(gradE * y, axis=-1) + 4.0 * E ** 2)
        return y, E, gradE, lapE, Q, gradQ, lapQ

    def grad_m(x, t):
        y, E, gradE, _, Q, gradQ, _ = _spatial(x, t)
        G = np.zeros(E.shape + (3, 2))
        G[..., 0, :] = gradE * y[..., 0:1]
        G[..., 0, 0] += E
        G[..., 1, :] = gradE * y[..., 1:2]
        G[..., 1, 1] += E
        G[..., 2, :] = gradQ / (2.0 * np.sqrt(Q))[..., None]
        return G

    def lap_m(x, t):
        y, E, gradE, lapE, Q, gradQ, lapQ = _spatial(x, t)
        sq = np.sqrt(Q)
        l3 = lapQ / (2.0 * sq) - np.sum(gradQ ** 2, axis=-1) / (4.0 * Q * sq)
        return np.stack([y[..., 0] * lapE + 2.0 * gradE[..., 0],
                         y[..., 1] * lapE + 2.0 * gradE[..., 1],
                         l3], axis=-1)

    return ExactBundle(m, dt_m, grad_m, lap_m)


def problem_bump(alpha=0.2, lambda_sq=1.0, T=0.2, chi=0.1, D=400.0) -> ProblemSpec:
    name = "bump" if chi == 0.1 else f"bump-chi:{chi:g}"
    return _problem_from_exact(name, bump_bundle(T, D, chi), alpha, lambda_sq, T)


# -- reference-only problems -------------------------------------------------

def problem_pulse(alpha=0.25, lambda_sq=1.0, T=1.0) -> ProblemSpec:
    def m0(x):
        x = np.asarray(x, dtype=float)
        s = 4.0 * x[..., 0] + 4.0 * x[..., 1]
        u = np.stack([np.full_like(s, 0.2), np.sin(s), np.cos(s)], axis=-1)
        return u / np.linalg.norm(u, axis=-1, keepdims=True)

    def f(x, t):
        shape = np.asarray(x).shape[:-1]
        out = np.zeros(shape + (3,))
        out[..., 2] = 1.0 / np.cosh(10.0 * (t - 0.5))
        return out

    return ProblemSpec("pulse", m0, f, alpha, lambda_sq, T)


def problem_radial_field(alpha=0.2, lambda_sq=1.0, T=0.2) -> ProblemSpec:
    def m0(x):
        shape = np.asarray(x).shape[:-1]
        out = np.zeros(shape + (3,))
        out[..., 1] = 1.0
        return out

    def f(x, t):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        out = np.zeros(x.shape[:-1] + (3,))
        at0 = r == 0.0
        r = np.where(at0, 1.0, r)
        out[..., 0] = np.where(at0, 1.0 / np.sqrt(2.0), x[..., 0] / r)
        out[..., 1] = np.where(at0, 1.0 / np.sqrt(2.0), x[..., 1] / r)
        return out

    return ProblemSpec("radial", m0, f, alpha, lambda_sq, T)


def constant_bundle(direction=(0.0, 0.0, 1.0)) -> ExactBundle:
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)

    def m(x, t):
        return np.broadcast_to(e, np.asarray(x).shape[:-1] + (3,)).copy()

    def zero(x, t):
        return np.zeros(np.asarray(x).shape[:-1] + (3,))

    def zero_grad(x, t):
        return np.zeros(np.asarray(x).shape[:-1] + (3, 2))

    return ExactBundle(m, zero, zero_grad, zero)


def problem_constant(alpha=0.2, lambda_sq=1.0, T=0.2, field_strength=1.0,
                     direction=(0.0, 0.0, 1.0)) -> ProblemSpec:
    """Equilibrium: constant m with an applied field parallel to it."""
    bundle = constant_bundle(direction)
    e = bundle.m(np.zeros((1, 2)), 0.0)[0]

    def f(x, t):
        return field_strength * np.broadcast_to(e, np.asarray(x).shape[:-1] + (3,)).copy()

    return ProblemSpec("constant", lambda x: bundle.m(x, 0.0), f, alpha, lambda_sq, T, bundle)


def get_problem(name: str, **params) -> ProblemSpec:
    """Look up a problem by CLI identifier (``cubic``, ``bump``, ``bump-chi:<v>``, ``pulse``, ``radial``, ``constant``)."""
    params = {k: v for k, v in params.items() if v is not None}
    if name == "cubic":
        return problem_cubic(**params)
    if name == "bump":
        return problem_bump(**params)
    if name.startswith("bump-chi:"):
        return problem_bump(chi=float(name.split(":", 1)[1]), **params)
    if name == "pulse":
        return problem_pulse(**params)
    if name == "radial":
        return problem_radial_field(**params)
    if name == "constant":
        return problem_constant(**params)
    raise KeyError(f"unknown problem {name!r}")


PROBLEM_IDS = ("cubic", "bump", "bump-chi:<value>", "pulse", "radial", "constant")


# -- validation --------------------------------------------------------------

class BundleError(AssertionError):
    pass


def validate_bundle(spec: ProblemSpec, samples: int = 500, seed: int = 0,
                    step: float = 1e-6, fd_tol: float = 1e-5) -> dict:
    """Check the hand-derived calculus of a manufactured problem.

    Samples interior points and times, then compares the supplied derivatives
    with central finite differences and evaluates the LLG residual of the
    synthesized forcing. Raises ``BundleError`` on any violation.
    """
    if spec.exact is None:
        raise BundleError(f"problem {spec.name!r} has no exact solution")
    b = spec.exact
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.01, 0.99, size=(samples, 2))
    t = rng.uniform(0.0, spec.T, size=samples)
    # bump parameters are not sampled beyond T
    t = np.minimum(t, spec.T - 2 * step)
    t = np.maximum(t, 2 * step)

    def at(fn, xx, tt):
        return np.stack([fn(xx[i:i + 1], tt[i])[0] for i in range(len(tt))])

    m = at(b.m, x, t)
    dm = at(b.dt_m, x, t)
    gm = at(b.grad_m, x, t)
    lm = at(b.lap_m, x, t)
    report = {}
    report["unit_length"] = float(np.max(np.abs(np.linalg.norm(m, axis=1) - 1.0)))
    report["orthogonality"] = float(np.max(np.abs(np.sum(m * dm, axis=1))))

    def rel(fd, ex):
        return float(np.max(np.abs(fd - ex) / np.maximum(np.abs(ex), 1.0)))

    fd_t = (at(b.m, x, t + step) - at(b.m, x, t - step)) / (2 * step)
    report["fd_dt"] = rel(fd_t, dm)
    fd_g = np.zeros_like(gm)
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        fd_g[..., k] = (at(b.m, x + e, t) - at(b.m, x - e, t)) / (2 * step)
    report["fd_grad"] = rel(fd_g, gm)
    # Laplacian as the divergence of the supplied gradient
    fd_l = np.zeros_like(lm)
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        fd_l += (at(b.grad_m, x + e, t)[..., k] - at(b.grad_m, x - e, t)[..., k]) / (2 * step)
    report["fd_lap"] = rel(fd_l, lm)
    f = at(spec.f, x, t)
    heff = spec.lambda_sq * lm + f
    res = spec.alpha * dm + np.cross(m, dm) - project_pointwise(m, heff)
    report["llg_residual"] = float(np.max(np.abs(res)))

    limits = {"unit_length": 1e-12, "orthogonality": 1e-10, "fd_dt": fd_tol,
              "fd_grad": fd_tol, "fd_lap": fd_tol, "llg_residual": 1e-10}
    failed = {k: v for k, v in report.items() if v > limits[k]}
    if failed:
        raise BundleError(f"{spec.name}: bundle validation failed: {failed}")
    return report
