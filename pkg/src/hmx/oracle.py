"""Dense reference arithmetic used by tests and the acceptance suite.

Deliberately naive: full matrices, textbook operations, no attention to
performance. Nothing here is used on benchmark paths.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

__all__ = ["dense_matvec", "dense_solve", "frobenius_error", "ORACLE_CAP"]

ORACLE_CAP = 4096

# pivot smaller than this times ||A||_inf counts as singular
_SINGULAR_RTOL = 1e-14


def dense_matvec(a, x) -> np.ndarray:
    """Plain FP64 matrix-vector product."""
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or x.shape != (a.shape[1],):
        raise ValueError(f"shape mismatch: {a.shape} @ {x.shape}")
    return a @ x


def dense_solve(a, b, cap: int = ORACLE_CAP) -> np.ndarray:
    """Solve a @ x = b by LU with partial pivoting.

    Raises on non-square input, on systems above the oracle cap, and on
    numerical singularity (a pivot below 1e-14 * ||a||_inf).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"dense_solve requires a square matrix, got {a.shape}")
    if b.shape != (a.shape[0],):
        raise ValueError(f"shape mismatch: {a.shape} vs b {b.shape}")
    if a.shape[0] > cap:
        raise ValueError(f"N={a.shape[0]} exceeds the oracle cap of {cap}")

    with warnings.catch_warnings():
        # the explicit pivot check below supersedes scipy's warning
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a)
    pivot_floor = _SINGULAR_RTOL * np.linalg.norm(a, np.inf)
    if np.min(np.abs(np.diag(lu))) < pivot_floor:
        raise np.linalg.LinAlgError(
            f"matrix is numerically singular (pivot below {pivot_floor:.3e})"
        )
    return scipy.linalg.lu_solve((lu, piv), b)


def frobenius_error(a, b) -> float:
    """Relative Frobenius distance ||a - b||_F / ||a||_F; 0 when both are zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = np.linalg.norm(a)
    diff = np.linalg.norm(a - b)
    if denom == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / denom)
