"""
Dense least squares via a thin QR factorization.
"""

from __future__ import annotations
import logging

import numpy as np

from raincdf.errors import RankError, ShapeError

logger = logging.getLogger(__name__)

# Relative pivot magnitude below which A is treated as rank deficient
RANK_TOL = 1e-12


def solve_least_squares(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Return x minimizing ||Ax - b||_2.

    Args:
        A: m x n design matrix, m >= n >= 1, full column rank
        b: right-hand side of length m

    Raises:
        ShapeError: on incompatible or underdetermined shapes
        RankError: when a pivot of R falls below RANK_TOL times the largest
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise ShapeError(f"incompatible shapes A{A.shape}, b{b.shape}")
    m, n = A.shape
    if not m >= n >= 1:
        raise ShapeError(f"need m >= n >= 1, got A{A.shape}")

    Q, R = np.linalg.qr(A, mode="reduced")
    pivots = np.abs(np.diag(R))
    if pivots.max() == 0.0 or pivots.min() < RANK_TOL * pivots.max():
        raise RankError(
            f"design matrix is rank deficient (pivot ratio "
            f"{pivots.min() / max(pivots.max(), np.finfo(float).tiny):.3e})"
        )

    # R is upper triangular; back-substitute
    x = np.linalg.solve(R, Q.T @ b)
    logger.debug(f"[LinAlg] Solved {m}x{n} least squares, residual {np.linalg.norm(A @ x - b):.6g}")
    return x
