"""BiCGSTAB with scheme-precision matvecs and an FP64 convergence check.

Every operator application inside the iteration uses the prepared
scheme; vector updates and dot products run in FP64. Convergence is
only declared once the recurrence residual estimate passes the
tolerance AND an independent FP64 matvec against the master H-matrix
confirms the true relative residual is below it. If the recurrence
converges but the FP64 check disagrees, the solve stops and reports
non-convergence with the measured residual, since further iterations
on a low-precision operator cannot repair the gap.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .compress import HMatrixF64
from .matvec import matvec, matvec_threaded
from .precision import PrecisionScheme, SchemeHMatrix, prepare_scheme

__all__ = ["SolverConfig", "SolverReport", "bicgstab", "true_residual"]

#: scalar magnitudes below this are treated as exact breakdown
_BREAKDOWN_EPS = 1e-300


@dataclass
class SolverConfig:
    tol: float = 1e-6
    max_iter: int = 1000
    threads: int = 1

    def __post_init__(self):
        if not (self.tol > 0.0):
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class SolverReport:
    scheme: str
    converged: bool
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    true_residual: float | None = None
    wall_time_s: float = 0.0
    breakdown: str | None = None


def true_residual(h64: HMatrixF64, x, b) -> float:
    """Relative residual ||b - A x|| / ||b|| via a full-FP64 matvec."""
    b = np.asarray(b, dtype=np.float64)
    sh = prepare_scheme(h64, PrecisionScheme(1, "double"))
    r = b - matvec(sh, np.asarray(x, dtype=np.float64))
    nb = float(np.linalg.norm(b))
    nr = float(np.linalg.norm(r))
    if nb == 0.0:
        return 0.0 if nr == 0.0 else float("inf")
    return nr / nb


def bicgstab(sh: SchemeHMatrix, h64: HMatrixF64, b, cfg: SolverConfig | None = None):
    """Solve A x = b with the scheme operator; returns (x, SolverReport).

    Starts from x = 0 with shadow residual fixed to r0. Breakdown
    (vanishing rho or omega) is reported, not raised. The residual
    history holds the initial entry plus one entry per completed
    iteration; an early exit on the intermediate residual s counts as a
    full iteration.
    """
    if cfg is None:
        cfg = SolverConfig()
    b = np.asarray(b, dtype=np.float64)
    n = sh.n
    if b.shape != (n,):
        raise ValueError(f"right-hand side shape {b.shape} does not match {n}")

    if cfg.threads > 1:
        mv = lambda w: matvec_threaded(sh, w, cfg.threads)
    else:
        mv = lambda w: matvec(sh, w)

    t0 = time.perf_counter()
    label = sh.scheme.label
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        # zero data: x = 0 is exact
        return np.zeros(n), SolverReport(
            scheme=label, converged=True, iterations=0,
            residual_history=[0.0], true_residual=0.0,
            wall_time_s=time.perf_counter() - t0)

    x = np.zeros(n)
    r = b - mv(x)
    r_hat = r.copy()
    history = [float(np.linalg.norm(r)) / nb]

    converged = False
    breakdown = None
    true_res = None
    iterations = 0
    rho_prev = alpha = omega = 1.0
    v = p = None

    for i in range(1, cfg.max_iter + 1):
        rho = float(r_hat @ r)
        if abs(rho) < _BREAKDOWN_EPS:
            breakdown = f"rho vanished ({rho:.3e}) at iteration {i}"
            break
        if i == 1:
            p = r.copy()
        else:
            beta = (rho / rho_prev) * (alpha / omega)
            p = r + beta * (p - omega * v)
        v = mv(p)
        denom = float(r_hat @ v)
        if abs(denom) < _BREAKDOWN_EPS:
            breakdown = f"shadow projection vanished ({denom:.3e}) at iteration {i}"
            break
        alpha = rho / denom

        s = r - alpha * v
        s_rel = float(np.linalg.norm(s)) / nb
        if s_rel < cfg.tol:
            x = x + alpha * p
            history.append(s_rel)
            iterations = i
            true_res = true_residual(h64, x, b)
            converged = true_res < cfg.tol
            break

        t = mv(s)
        tt = float(t @ t)
        if tt == 0.0:
            breakdown = f"stabilization direction vanished at iteration {i}"
            break
        omega = float(t @ s) / tt

        x = x + alpha * p + omega * s
        r = s - omega * t
        rel = float(np.linalg.norm(r)) / nb
        history.append(rel)
        iterations = i

        if rel < cfg.tol:
            true_res = true_residual(h64, x, b)
            converged = true_res < cfg.tol
            break
        if abs(omega) < _BREAKDOWN_EPS:
            breakdown = f"omega vanished ({omega:.3e}) at iteration {i}"
            break
        rho_prev = rho

    return x, SolverReport(
        scheme=label,
        converged=converged,
        iterations=iterations,
        residual_history=history,
        true_residual=true_res,
        wall_time_s=time.perf_counter() - t0,
        breakdown=breakdown,
    )
