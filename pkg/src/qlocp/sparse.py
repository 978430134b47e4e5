"""Thin CSR layer over scipy.sparse: assembly, transpose, products and solves."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT_LIMIT = 300_000


class SolverError(RuntimeError):
    """Raised when a linear solve fails; carries the residual reached."""

    def __init__(self, msg: str, residual: float = np.nan):
        super().__init__(f"{msg} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class SolverOptions:
    method: str = "auto"  # "lu", "bicgstab" or "auto"
    rtol: float = 1e-12
    maxiter: int = 5000


def from_triplets(rows, cols, vals, n: int) -> sp.csr_matrix:
    """Finalized CSR matrix: duplicates summed, indices sorted, explicit zeros dropped."""
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def matvec(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {x.shape}")
    return A @ x


def transpose(A: sp.csr_matrix) -> sp.csr_matrix:
    At = A.transpose().tocsr()
    At.sort_indices()
    return At


def same_triples(A: sp.spmatrix, B: sp.spmatrix) -> bool:
    """True iff A and B hold identical (row, col, value) triples."""
    A, B = sp.csr_matrix(A), sp.csr_matrix(B)
    A.sort_indices()
    B.sort_indices()
    return (A.shape == B.shape and np.array_equal(A.indptr, B.indptr)
            and np.array_equal(A.indices, B.indices) and np.array_equal(A.data, B.data))


def solve(A: sp.spmatrix, b: np.ndarray, opts: SolverOptions | None = None) -> np.ndarray:
    opts = opts or SolverOptions()
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or b.shape[0] != n:
        raise ValueError("solve needs a square matrix matching the right-hand side")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    method = opts.method
    if method == "auto":
        method = "lu" if n <= DIRECT_LIMIT else "bicgstab"
    A = sp.csc_matrix(A)
    if method == "lu":
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"sparse LU failed: {exc}") from exc
    elif method == "bicgstab":
        d = A.diagonal()
        if np.any(d == 0):
            raise SolverError("zero diagonal entry, Jacobi preconditioner unavailable")
        M = sp.diags(1.0 / d)
        x, info = spla.bicgstab(A, b, rtol=opts.rtol, atol=0.0, maxiter=opts.maxiter, M=M)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / bnorm
            raise SolverError(f"BiCGStab stopped with info={info}", res)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    res = np.linalg.norm(A @ x - b) / bnorm
    if not np.isfinite(res):
        raise SolverError("singular system", res)
    if res > max(opts.rtol, 1e-8):
        log.warning("linear solve residual %.3e above tolerance %.1e", res, opts.rtol)
    return x
