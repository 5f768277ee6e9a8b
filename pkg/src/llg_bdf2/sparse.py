"""Sparse storage and linear solvers for the per-step systems.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted, no
duplicate column indices). The functions here add the contracts the solver
relies on: dimension checks, residual checks and explicit failures.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_LIMIT = 20_000


class SolverError(RuntimeError):
    """Raised when a linear solve fails or misses its residual target."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A: sp.csr_matrix):
    """Structural invariants of a CSR matrix."""
    nrows = A.shape[0]
    if A.indptr.shape[0] != nrows + 1 or A.indptr[0] != 0 or A.indptr[-1] != A.nnz:
        raise ValueError("row offsets inconsistent with dimensions")
    if np.any(np.diff(A.indptr) < 0):
        raise ValueError("row offsets not monotone")
    for i in range(nrows):
        cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
        if np.any(np.diff(cols) <= 0):
            raise ValueError(f"column indices not strictly increasing in row {i}")
        if cols.size and (cols[0] < 0 or cols[-1] >= A.shape[1]):
            raise ValueError(f"column index out of range in row {i}")


def spmv(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def _rel_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


def solve_direct(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Sparse LU (SuperLU) with threshold partial pivoting.

    The per-step matrices are structurally symmetric, so a minimum-degree
    ordering on A + A^T with diagonal-preferring pivoting keeps the fill low.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {b.shape}")
    if not np.any(b):
        return np.zeros_like(b)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SolverError(f"direct solve failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= 1e-14 * piv.max():
        raise SolverError(f"matrix singular to tolerance (pivot ratio {piv.min() / piv.max():.2e})")
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("direct solve produced non-finite values")
    res = _rel_residual(A, x, b)
    if res > tol:
        raise SolverError(f"direct solve residual {res:.3e} above {tol:.1e}", res)
    return x


def solve_gmres(
    A: sp.spmatrix,
    b: np.ndarray,
    tol: float = 1e-12,
    restart: int = 50,
    maxiter: int = 200,
    info: dict | None = None,
) -> np.ndarray:
    """Restarted GMRES with a Jacobi preconditioner.

    ``maxiter`` counts restart cycles. When ``info`` is given, it receives the
    number of inner iterations and the achieved relative residual.
    """
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {b.shape}")
    if not np.any(b):
        if info is not None:
            info.update(iterations=0, residual=0.0)
        return np.zeros_like(b)
    d = A.diagonal()
    if np.any(d == 0):
        raise SolverError("Jacobi preconditioner needs a nonzero diagonal")
    Minv = spla.LinearOperator(A.shape, matvec=lambda y: y / d, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x = None
    # scipy stops on the preconditioned residual; restart until the true one passes
    for _ in range(5):
        x, flag = spla.gmres(
            A, b, x0=x, rtol=tol, atol=0.0, restart=restart, maxiter=maxiter, M=Minv,
            callback=cb, callback_type="pr_norm",
        )
        res = _rel_residual(A, x, b)
        if res <= tol:
            break
    if info is not None:
        info.update(iterations=count[0], residual=res)
    if res > tol:
        raise SolverError(f"GMRES did not converge: relative residual {res:.3e}", res)
    return x


def solve(A, b, method: str = "auto", tol: float = 1e-12, restart: int = 50, info=None):
    """Dispatch: direct below ``DIRECT_LIMIT`` unknowns, GMRES above."""
    if method == "auto":
        method = "direct" if A.shape[0] < DIRECT_LIMIT else "gmres"
    if method == "direct":
        x = solve_direct(A, b)
        if info is not None:
            info.update(iterations=1, residual=_rel_residual(A, x, b))
        return x
    if method == "gmres":
        return solve_gmres(A, b, tol=tol, restart=restart, info=info)
    raise ValueError(f"unknown solver {method!r}")
