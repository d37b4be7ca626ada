"""Compressed-row symmetric matrices and preconditioned conjugate gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .errors import BreakdownNonSPD, DimensionMismatch, NotConverged


@dataclass(frozen=True)
class SparseSym:
    """CSR storage: ``indptr`` (n+1,), ``indices`` sorted per row, ``data``."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n: int

    @classmethod
    def from_scipy(cls, m) -> "SparseSym":
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.indptr, m.indices, m.data, m.shape[0])

    @classmethod
    def from_dense(cls, a) -> "SparseSym":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=float)))

    @classmethod
    def identity(cls, n: int) -> "SparseSym":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    @property
    def nnz(self) -> int:
        return len(self.data)

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def todense(self) -> np.ndarray:
        return self.csr.toarray()

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"matrix is {self.n}x{self.n}, vector has shape {x.shape}")
        return self.csr @ x

    def symmetry_defect(self) -> float:
        """max |M_ij - M_ji| / max |M_ij|."""
        m = self.csr
        diff = abs(m - m.T)
        top = np.abs(self.data).max() if self.nnz else 1.0
        return float(diff.max() / top) if diff.nnz else 0.0


@dataclass
class SolveStats:
    iterations: int
    residual: float
    converged: bool
    history: list | None = None


def _dot(a, b):
    # pairwise summation, independent of BLAS threading
    return float(np.sum(a * b))


def default_max_iter(n: int) -> int:
    return int(50 * math.sqrt(n) + 1000)


@numba.njit(cache=True)
def _seq_dot(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


@numba.njit(cache=True)
def _cg_update(x, r, z, p, ap, inv_diag, step):
    """x += step p, r -= step Ap, z = D^-1 r; returns (r.r, r.z)."""
    rr = 0.0
    rz = 0.0
    for i in range(x.shape[0]):
        x[i] += step * p[i]
        ri = r[i] - step * ap[i]
        r[i] = ri
        zi = ri * inv_diag[i]
        z[i] = zi
        rr += ri * ri
        rz += ri * zi
    return rr, rz


@numba.njit(cache=True)
def _cg_direction(p, z, beta):
    for i in range(p.shape[0]):
        p[i] = z[i] + beta * p[i]


def cg_solve(m: SparseSym, b, tol: float = 1e-12, max_iter: int | None = None,
             preconditioner: str | None = "jacobi", x0=None, check: bool = False,
             record: bool = False):
    """Preconditioned CG for an SPD matrix.

    Stops when ||b - M x||_2 <= tol * ||b||_2.  Returns ``(x, SolveStats)``;
    on hitting ``max_iter`` the best iterate is returned with
    ``converged=False`` unless ``check`` is set, in which case
    :class:`NotConverged` carries it.
    """
    b = np.ascontiguousarray(b, dtype=float)
    if b.shape != (m.n,):
        raise DimensionMismatch(f"matrix is {m.n}x{m.n}, rhs has shape {b.shape}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = default_max_iter(m.n)
    if preconditioner in (None, "none"):
        inv_diag = np.ones(m.n)
    elif preconditioner == "jacobi":
        diag = m.diagonal()
        if np.any(diag <= 0):
            raise BreakdownNonSPD("non-positive diagonal entry")
        inv_diag = 1.0 / diag
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    bnorm = math.sqrt(_dot(b, b))
    if bnorm == 0.0:
        return np.zeros(m.n), SolveStats(0, 0.0, True, [] if record else None)
    x = np.zeros(m.n) if x0 is None else np.array(x0, dtype=float)
    a = m.csr
    r = b - a @ x
    z = r * inv_diag
    p = z.copy()
    rz = _seq_dot(r, z)
    rr = _seq_dot(r, r)
    target_sq = (tol * bnorm) ** 2
    best_x, best_rr = x.copy(), rr
    history = [] if record else None
    it = 0
    while rr > target_sq and it < max_iter:
        ap = a @ p
        pap = _seq_dot(p, ap)
        if not pap > 0.0:
            raise BreakdownNonSPD(f"p^T M p = {pap:.3e} at iteration {it}")
        rr, rz_new = _cg_update(x, r, z, p, ap, inv_diag, rz / pap)
        it += 1
        if record:
            history.append(math.sqrt(rr) / bnorm)
        if rr < best_rr:
            best_rr = rr
            best_x[:] = x
        _cg_direction(p, z, rz_new / rz)
        rz = rz_new
    if rr > best_rr:
        x, rr = best_x, best_rr
    rel = math.sqrt(rr) / bnorm
    converged = rel <= tol
    stats = SolveStats(int(it), rel, converged, history)
    if check and not converged:
        raise NotConverged(f"CG stopped after {it} iterations at relative residual {rel:.3e}",
                           x=x, stats=stats)
    return x, stats


def dense_cholesky_solve(m: SparseSym, b):
    """Reference direct solve for small systems (n <= 2000); test oracle only."""
    if m.n > 2000:
        raise ValueError("dense oracle limited to n <= 2000")
    import scipy.linalg as la

    c = la.cho_factor(m.todense())
    return la.cho_solve(c, np.asarray(b, dtype=float))
