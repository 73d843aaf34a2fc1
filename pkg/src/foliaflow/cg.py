"""Preconditioned conjugate gradient for symmetric positive definite operators."""
from __future__ import annotations

from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """CG stopped before reaching the requested relative residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def conjugate_gradient(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-8,
    maxiter: int | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, int, float]:
    """Solve ``A x = b`` for SPD ``A`` given as a matvec.

    Returns ``(x, iterations, relative_residual)``. Raises
    :class:`ConvergenceError` if ``||b - A x|| / ||b|| > tol`` after
    ``maxiter`` iterations (default ``10 * len(b)``).
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = r @ z
    relres = np.linalg.norm(r) / bnorm
    it = 0
    while relres > tol and it < maxiter:
        ap = matvec(p)
        pap = p @ ap
        if pap <= 0:
            raise ConvergenceError(
                f"operator is not positive definite (p^T A p = {pap:.3e})", relres, it
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        it += 1
        relres = np.linalg.norm(r) / bnorm
        z = precond(r) if precond is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if relres > tol:
        raise ConvergenceError(
            f"CG did not converge in {it} iterations (relative residual {relres:.3e})", relres, it
        )
    return x, it, relres
