"""H-matrix times vector under a precision scheme.

The computation precision of every product follows from the operand
dtypes: FP32 times FP32 accumulates in FP32, while mixing an FP32
matrix with an FP64 vector promotes to an FP64 product. The kernels
below therefore encode each scheme's pipeline purely through which
representation of x they gather and when they round intermediates.

All accumulation into the result vector happens in FP64 regardless of
scheme.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .precision import (
    DensePayload,
    FactorPayload,
    ScaledPayload,
    SchemeHMatrix,
    SplitLowRank,
)

__all__ = ["SourceVector", "matvec", "matvec_threaded", "block_mul_dense",
           "block_mul_lowrank"]


class SourceVector:
    """FP64 source vector with a lazily built FP32 shadow copy.

    The shadow is created at most once per instance, on first access;
    schemes that read FP64 sources never pay for it.
    """

    def __init__(self, values):
        master = np.ascontiguousarray(values, dtype=np.float64)
        if master.ndim != 1:
            raise ValueError("source vector must be one-dimensional")
        self.master = master
        self._shadow = None

    @property
    def shadow(self) -> np.ndarray:
        if self._shadow is None:
            self._shadow = self.master.astype(np.float32)
        return self._shadow

    def __len__(self):
        return self.master.shape[0]


def block_mul_dense(values: np.ndarray, x_slice: np.ndarray) -> np.ndarray:
    """One dense block product; dtype promotion sets the precision."""
    return values @ x_slice


def block_mul_lowrank(pay, x_slice: np.ndarray, x_slice32=None) -> np.ndarray:
    """One low-rank block product, following the payload's pipeline.

    `x_slice` is the FP64 gather; `x_slice32` the FP32 shadow gather,
    present only for single-source schemes.
    """
    if isinstance(pay, FactorPayload):
        if pay.u.dtype == np.float32:
            if x_slice32 is not None:
                z = pay.vt @ x_slice32            # FP32 accumulation
            else:
                # mixed: FP64 product, rounded once into the FP32 intermediate
                z = (pay.vt @ x_slice).astype(np.float32)
            return pay.u @ z
        return pay.u @ (pay.vt @ x_slice)

    if isinstance(pay, ScaledPayload):
        if pay.u.dtype == np.float32 and x_slice32 is not None:
            z = pay.vt @ x_slice32.astype(np.float64)
        else:
            z = pay.vt @ x_slice                   # promotes to FP64 if vt is FP32
        z *= pay.diag
        return pay.u @ z

    assert isinstance(pay, SplitLowRank)
    out = None
    if pay.diag_hi.size:
        z = pay.vt_hi @ x_slice
        z *= pay.diag_hi
        out = pay.u_hi @ z
    if pay.diag_lo.size:
        z = pay.vt_lo @ x_slice                    # FP32 factor, FP64 product
        z *= pay.diag_lo
        lo = pay.u_lo @ z
        out = lo if out is None else out + lo
    if out is None:
        out = np.zeros(pay.u_hi.shape[0])
    return out


def _apply_block(pay, blk, xp, xp32, yp):
    rs, re = blk.row_start, blk.row_end
    cs, ce = blk.col_start, blk.col_end
    if isinstance(pay, DensePayload):
        if pay.values.dtype == np.float32 and xp32 is not None:
            yp[rs:re] += block_mul_dense(pay.values, xp32[cs:ce])
        else:
            yp[rs:re] += block_mul_dense(pay.values, xp[cs:ce])
    else:
        xs32 = xp32[cs:ce] if xp32 is not None else None
        yp[rs:re] += block_mul_lowrank(pay, xp[cs:ce], xs32)


def _gather(sh: SchemeHMatrix, x):
    src = x.master if isinstance(x, SourceVector) else np.asarray(x, dtype=np.float64)
    if src.shape != (sh.n,):
        raise ValueError(f"vector shape {src.shape} does not match matrix size {sh.n}")
    perm = sh.base.permutation
    xp = src[perm]
    xp32 = xp.astype(np.float32) if sh.scheme.reads_fp32_source else None
    return xp, xp32


def _check_finite(sh, yp, xp, xp32):
    if np.all(np.isfinite(yp)):
        return
    # rescan per block only on failure, to name the offender
    for k, (blk, pay) in enumerate(sh.items()):
        probe = np.zeros(sh.n)
        _apply_block(pay, blk, xp, xp32, probe)
        if not np.all(np.isfinite(probe)):
            raise FloatingPointError(
                f"non-finite matvec contribution from block {k} rows "
                f"[{blk.row_start},{blk.row_end}) cols [{blk.col_start},{blk.col_end})"
            )
    raise FloatingPointError("non-finite matvec result after summation")


def matvec(sh: SchemeHMatrix, x) -> np.ndarray:
    """Multiply the prepared H-matrix by x, returning an FP64 vector."""
    xp, xp32 = _gather(sh, x)
    yp = np.zeros(sh.n)
    for blk, pay in sh.items():
        _apply_block(pay, blk, xp, xp32, yp)
    _check_finite(sh, yp, xp, xp32)
    y = np.empty(sh.n)
    y[sh.base.permutation] = yp
    return y


def _flop_estimate(pay, blk) -> int:
    m = blk.row_end - blk.row_start
    n = blk.col_end - blk.col_start
    if isinstance(pay, DensePayload):
        return 2 * m * n
    if isinstance(pay, FactorPayload) or isinstance(pay, ScaledPayload):
        r = pay.u.shape[1]
        return 2 * r * (m + n)
    return 2 * (pay.diag_hi.size + pay.diag_lo.size) * (m + n)


def matvec_threaded(sh: SchemeHMatrix, x, threads: int = 1) -> np.ndarray:
    """Deterministic multi-threaded matvec.

    Blocks are dealt round-robin by descending flop estimate to static
    per-worker lists; each worker accumulates into a private FP64
    vector and the partials are summed in worker order, so the result
    is reproducible for a fixed thread count. threads=1 takes the
    sequential path and is bit-identical to `matvec`.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1:
        return matvec(sh, x)

    xp, xp32 = _gather(sh, x)
    blocks = sh.base.partition.blocks
    payloads = sh.payloads
    cost = np.array([_flop_estimate(p, b) for b, p in sh.items()])
    order = np.argsort(-cost, kind="stable")
    chunks = [order[w::threads] for w in range(threads)]

    def run(indices):
        y_local = np.zeros(sh.n)
        for i in indices:
            _apply_block(payloads[i], blocks[i], xp, xp32, y_local)
        return y_local

    with ThreadPoolExecutor(max_workers=threads) as pool:
        partials = list(pool.map(run, chunks))
    yp = partials[0]
    for part in partials[1:]:
        yp += part

    _check_finite(sh, yp, xp, xp32)
    y = np.empty(sh.n)
    y[sh.base.permutation] = yp
    return y
