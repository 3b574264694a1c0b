"""Sparse storage, assembly builder, and linear solvers.

Matrices are scipy CSR; vectors are 1-D numpy arrays.  The solvers wrap
scipy.sparse.linalg but enforce the residual contract ||Ax - b|| <= tol*||b||
on every accepted return and raise typed errors otherwise.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SparseMatrix = sp.csr_matrix
FieldVector = np.ndarray


class SolverError(RuntimeError):
    """Base class for linear solver failures."""


class NotConverged(SolverError):
    def __init__(self, method: str, iters: int, residual: float):
        self.method = method
        self.iters = iters
        self.residual = residual
        super().__init__(f"{method} did not converge: iters={iters}, residual={residual:.3e}")


class SingularMatrix(SolverError):
    pass


class CooBuilder:
    """Triplet accumulator; duplicate (i, j) entries sum on finalization."""

    def __init__(self, nrows: int, ncols: int):
        self.nrows = nrows
        self.ncols = ncols
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, values) -> None:
        self._rows.append(np.asarray(rows, dtype=np.int64).ravel())
        self._cols.append(np.asarray(cols, dtype=np.int64).ravel())
        self._vals.append(np.asarray(values, dtype=float).ravel())

    def finalize(self) -> SparseMatrix:
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.empty(0, dtype=np.int64)
            vals = np.empty(0)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(self.nrows, self.ncols)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


def _residual_norm(A, x, b) -> float:
    return float(np.linalg.norm(b - A @ x))


def _check_contract(method, A, x, b, tol_rel, iters):
    if not np.all(np.isfinite(x)):
        raise NotConverged(method, iters, float("inf"))
    bnorm = float(np.linalg.norm(b))
    res = _residual_norm(A, x, b)
    if res > tol_rel * bnorm and bnorm > 0.0:
        raise NotConverged(method, iters, res)
    return x


def solve_cg(A: SparseMatrix, b: FieldVector, tol_rel: float = 1e-10,
             max_iter: int = 5000, x0: FieldVector | None = None,
             info: dict | None = None) -> FieldVector:
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    ``info``, when given, receives {"iterations": n} on return.
    """
    b = np.asarray(b, dtype=float)
    if np.linalg.norm(b) == 0.0:
        if info is not None:
            info["iterations"] = 0
        return np.zeros_like(b)
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        # Jacobi needs a positive diagonal; fall back to the identity.
        M = None
    else:
        inv = 1.0 / diag
        M = spla.LinearOperator(A.shape, matvec=lambda v: inv * v)
    iters = 0

    def cb(_xk):
        nonlocal iters
        iters += 1

    with np.errstate(divide="ignore", invalid="ignore"):  # breakdown is caught below
        x, flag = spla.cg(A, b, x0=x0, rtol=tol_rel, atol=0.0, maxiter=max_iter,
                          M=M, callback=cb)
    if info is not None:
        info["iterations"] = iters
    if flag != 0:
        raise NotConverged("cg", iters, _residual_norm(A, x, b))
    return _check_contract("cg", A, x, b, tol_rel, iters)


def solve_gmres(A: SparseMatrix, b: FieldVector, tol_rel: float = 1e-8,
                restart: int = 50, max_iter: int = 2000,
                x0: FieldVector | None = None,
                info: dict | None = None) -> FieldVector:
    """Restarted GMRES with diagonal (Jacobi) scaling."""
    b = np.asarray(b, dtype=float)
    if np.linalg.norm(b) == 0.0:
        if info is not None:
            info["iterations"] = 0
        return np.zeros_like(b)
    diag = A.diagonal()
    if np.any(diag == 0.0):
        M = None
    else:
        inv = 1.0 / diag
        M = spla.LinearOperator(A.shape, matvec=lambda v: inv * v)
    iters = 0

    def cb(_rk):
        nonlocal iters
        iters += 1

    maxouter = max(1, max_iter // restart)
    with np.errstate(divide="ignore", invalid="ignore"):  # breakdown is caught below
        x, flag = spla.gmres(A, b, x0=x0, rtol=tol_rel, atol=0.0, restart=restart,
                             maxiter=maxouter, M=M, callback=cb, callback_type="pr_norm")
    if info is not None:
        info["iterations"] = iters
    if flag != 0:
        raise NotConverged("gmres", iters, _residual_norm(A, x, b))
    return _check_contract("gmres", A, x, b, tol_rel, iters)


def solve_lu(A: SparseMatrix, b: FieldVector) -> FieldVector:
    """Sparse LU direct solve; raises SingularMatrix on rank deficiency."""
    b = np.asarray(b, dtype=float)
    try:
        lu = spla.splu(sp.csc_matrix(A))
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("LU produced non-finite solution")
    return x


def apply_dirichlet(A: SparseMatrix, b: FieldVector, dofs, values):
    """Eliminate Dirichlet dofs symmetrically; returns new (A, b).

    Constrained rows become identity rows with b[d] = value.  The coupling
    columns are folded into b (b -= A[:, d] * value on unconstrained rows) and
    zeroed, so an SPD matrix stays SPD.  Re-applying the same constraints is a
    no-op.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if dofs.size != np.unique(dofs).size:
        raise ValueError("Dirichlet dofs must be unique")
    if dofs.size and (dofs.min() < 0 or dofs.max() >= A.shape[0]):
        raise IndexError("Dirichlet dof out of range")
    if dofs.size != values.size:
        raise ValueError("dofs and values must have equal length")

    n = A.shape[0]
    b = np.array(b, dtype=float, copy=True)
    if dofs.size == 0:
        return A.copy(), b

    constrained = np.zeros(n, dtype=bool)
    constrained[dofs] = True

    xfix = np.zeros(n)
    xfix[dofs] = values
    correction = A @ xfix
    b[~constrained] -= correction[~constrained]
    b[dofs] = values

    keep = sp.diags(np.where(constrained, 0.0, 1.0), format="csr")
    A_mod = keep @ A @ keep + sp.diags(constrained.astype(float), format="csr")
    A_mod = sp.csr_matrix(A_mod)
    A_mod.sum_duplicates()
    A_mod.sort_indices()
    return A_mod, b


def export_matrix_market(A: SparseMatrix, path) -> None:
    """Dump an assembled system in MatrixMarket coordinate format."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(A))
