"""Small dense linear-algebra kernel.

Conjugate gradient for SPD systems (batched over independent systems),
Gaussian log-densities via Cholesky, and a symmetric eigendecomposition
used when constructing measurement matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "CgReport",
    "conjugate_gradient_solve",
    "gaussian_log_pdf",
    "spd_eigendecomposition",
]


@dataclass(frozen=True)
class CgReport:
    iterations: int
    residual_norm: float
    converged: bool


def conjugate_gradient_solve(
    apply_operator: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-4,
    max_iter: int | None = None,
):
    """Solve SPD systems A x = rhs with plain conjugate gradient.

    ``rhs`` may be a single vector of shape (m,) or a batch (n, m) of
    independent right-hand sides; ``apply_operator`` must map the same
    shape, acting on the last axis.  Convergence is a relative residual
    test against max(1, ||rhs||) per system.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = np.asarray(rhs, dtype=np.float64)
    single = rhs.ndim == 1
    b = rhs[None, :] if single else rhs
    m = b.shape[-1]
    if max_iter is None:
        max_iter = 10 * m

    def op(v: np.ndarray) -> np.ndarray:
        out = apply_operator(v[0] if single else v)
        return np.asarray(out)[None, :] if single else np.asarray(out)

    thresh = tol * np.maximum(1.0, np.linalg.norm(b, axis=-1))
    x = np.zeros_like(b)
    r = b - op(x)
    p = r.copy()
    rs = np.einsum("...i,...i->...", r, r)
    iterations = 0
    for _ in range(max_iter):
        res = np.sqrt(rs)
        if np.all(res <= thresh):
            break
        ap = op(p)
        pap = np.einsum("...i,...i->...", p, ap)
        # systems already converged get a neutral step
        safe = np.where(pap > 0, pap, 1.0)
        step = np.where(res > thresh, rs / safe, 0.0)
        x = x + step[..., None] * p
        r = r - step[..., None] * ap
        rs_new = np.einsum("...i,...i->...", r, r)
        beta = np.where(rs > 0, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        p = r + beta[..., None] * p
        rs = rs_new
        iterations += 1
        if not np.all(np.isfinite(x)):
            raise ValueError(
                "non-finite CG iterate: operator is likely not SPD or is "
                "severely ill-conditioned"
            )
    res = np.sqrt(rs)
    report = CgReport(
        iterations=iterations,
        residual_norm=float(np.max(res)),
        converged=bool(np.all(res <= thresh)),
    )
    return (x[0] if single else x), report


def gaussian_log_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """log N(x; mean, cov) via Cholesky; raises LinAlgError if cov not SPD."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    k = x.shape[0]
    if mean.shape[0] != k or cov.shape != (k, k):
        raise ValueError("dimension mismatch in gaussian_log_pdf")
    chol = np.linalg.cholesky(cov)
    z = solve_triangular(chol, x - mean, lower=True)
    return float(
        -0.5 * z @ z - np.sum(np.log(np.diag(chol))) - 0.5 * k * np.log(2.0 * np.pi)
    )


def spd_eigendecomposition(g: np.ndarray):
    """Eigendecomposition of a small symmetric matrix, sorted descending."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("expected a square matrix")
    scale = np.linalg.norm(g)
    if not np.allclose(g, g.T, atol=1e-10 * max(scale, 1.0)):
        raise ValueError("matrix is not symmetric")
    evals, evecs = np.linalg.eigh(g)
    order = np.argsort(evals)[::-1]
    return evals[order], evecs[:, order]
