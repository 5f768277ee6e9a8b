"""Sphere-constraint geometry on nodal fields.

The discrete tangent space of an anchor field ``mhat`` consists of P1 fields
whose nodal values are orthogonal to ``mhat`` at every node. ``TangentFrame``
realises it as a coefficient space with two unknowns per node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class ZeroVectorError(ValueError):
    def __init__(self, node, what="field"):
        super().__init__(f"{what} vanishes at node {node}")
        self.node = node


def _check_nonzero(u: np.ndarray, what: str) -> np.ndarray:
    lengths = np.linalg.norm(u, axis=-1)
    bad = np.flatnonzero(np.atleast_1d(lengths) == 0.0)
    if bad.size:
        raise ZeroVectorError(int(bad[0]), what)
    return lengths


def normalize_at_nodes(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    lengths = _check_nonzero(u, "field")
    return u / lengths[..., None]


def project_pointwise(u, v) -> np.ndarray:
    """(I - u u^T / |u|^2) v, broadcasting over leading axes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lengths = _check_nonzero(u, "anchor")
    return v - (np.sum(u * v, axis=-1) / lengths ** 2)[..., None] * u


def discrete_project(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Nodal tangential projection: the interpolant of P(u) v."""
    return project_pointwise(u, v)


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal pair (t1, t2) per node spanning the plane orthogonal to ``anchor``."""

    anchor: np.ndarray
    t1: np.ndarray
    t2: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.anchor.shape[0]

    @cached_property
    def basis(self) -> sp.csr_matrix:
        """Injection B from 2N frame coefficients to 3N node-major values."""
        n = self.num_nodes
        rows = np.repeat(np.arange(3 * n), 2)
        cols = np.tile(np.array([0, 1]), 3 * n) + 2 * np.repeat(np.arange(n), 6)
        vals = np.stack([self.t1, self.t2], axis=2).ravel()  # (n, 3, 2) node-major
        return sp.csr_matrix((vals, (rows, cols)), shape=(3 * n, 2 * n))

    def expand(self, coeffs: np.ndarray) -> np.ndarray:
        c = np.asarray(coeffs).reshape(-1, 2)
        return c[:, :1] * self.t1 + c[:, 1:] * self.t2

    def restrict(self, v: np.ndarray) -> np.ndarray:
        """B^T v for a node-major field of shape (N, 3)."""
        v = np.asarray(v)
        return np.column_stack([np.sum(self.t1 * v, axis=1), np.sum(self.t2 * v, axis=1)]).ravel()


def build_frame(mhat: np.ndarray) -> TangentFrame:
    """Frame from the coordinate axis least aligned with ``mhat`` (ties: lowest axis)."""
    mhat = np.asarray(mhat, dtype=float)
    lengths = _check_nonzero(mhat, "anchor")
    k = np.argmin(np.abs(mhat), axis=1)
    e = np.zeros_like(mhat)
    e[np.arange(len(k)), k] = 1.0
    t1 = np.cross(e, mhat)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(mhat, t1) / lengths[:, None]
    # one Gram-Schmidt sweep trims the round-off of the cross products
    t2 -= np.sum(t2 * t1, axis=1)[:, None] * t1
    t2 /= np.linalg.norm(t2, axis=1)[:, None]
    return TangentFrame(mhat, t1, t2)
