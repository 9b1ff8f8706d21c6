"""H-matrix assembly: ACA low-rank compression plus dense leaf storage.

Admissible blocks are factored as `u @ vt` by adaptive cross
approximation with partial pivoting, touching only a small number of
block rows and columns. Inadmissible blocks are filled densely. All
masters are FP64; precision schemes cast afterwards, never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .partition import (
    DEFAULT_ETA,
    DEFAULT_LEAF_SIZE,
    Block,
    BlockPartition,
    build_block_partition,
    build_cluster_tree,
)

__all__ = [
    "DenseBlockF64",
    "LowRankBlockF64",
    "BuildReport",
    "HMatrixF64",
    "aca_approximate",
    "build_hmatrix",
    "densify",
]

DEFAULT_ACA_TOL = 1e-8
DENSIFY_CAP = 4096

_FOUR_PI = 4.0 * math.pi
_EPS64 = float(np.finfo(np.float64).eps)


@dataclass
class DenseBlockF64:
    """Dense FP64 storage of one block."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)


@dataclass
class LowRankBlockF64:
    """Rank-r factors: `u` is rows x r, `vt` is r x cols.

    `fallback` marks factors produced by the dense ACA fallback (exact
    full-rank representation); the builder stores those blocks densely.
    """

    u: np.ndarray
    vt: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.vt = np.ascontiguousarray(self.vt, dtype=np.float64)
        if self.u.ndim != 2 or self.vt.ndim != 2 or self.u.shape[1] != self.vt.shape[0]:
            raise ValueError(
                f"inconsistent factor shapes {self.u.shape} x {self.vt.shape}"
            )
        if self.rank > min(self.u.shape[0], self.vt.shape[1]):
            raise ValueError("rank exceeds min(rows, cols)")

    @property
    def rank(self) -> int:
        return self.u.shape[1]


def aca_approximate(entry_fn, n_rows: int, n_cols: int,
                    tol: float = DEFAULT_ACA_TOL,
                    max_rank: int | None = None) -> LowRankBlockF64:
    """Adaptive cross approximation with partial pivoting.

    Parameters
    ----------
    entry_fn : callable
        `entry_fn(i, j)` returns block entries for integer scalars or
        broadcastable numpy index arrays (0-based, block-relative).
    n_rows, n_cols : int
        Block dimensions, both >= 1.
    tol : float
        Relative stopping tolerance: iteration ends once the latest
        cross satisfies ||u_k|| * ||v_k|| <= tol * ||A_k||_F, where
        ||A_k||_F is the running Frobenius estimate of the accumulated
        approximant (cross terms included).
    max_rank : int, optional
        Rank budget; defaults to min(n_rows, n_cols). Hitting the
        budget returns the factors achieved so far.

    Pivot rows start at row 0 and then follow the largest entry of the
    most recent residual column, skipping rows already consumed. When
    every row has been consumed without meeting the tolerance, the full
    remainder is evaluated row by row: a negligible remainder means the
    block was exactly reproduced; otherwise the block is evaluated
    densely and returned flagged (`fallback=True`), never silently.
    """
    if n_rows < 1 or n_cols < 1:
        raise ValueError("block must be at least 1x1")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    budget = min(n_rows, n_cols)
    if max_rank is not None:
        if max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        budget = min(budget, int(max_rank))

    all_rows = np.arange(n_rows, dtype=np.intp)
    all_cols = np.arange(n_cols, dtype=np.intp)

    cap = max(min(budget, 16), 1)
    u_store = np.empty((n_rows, cap), dtype=np.float64)
    vt_store = np.empty((cap, n_cols), dtype=np.float64)
    rank = 0

    row_used = np.zeros(n_rows, dtype=bool)
    col_used = np.zeros(n_cols, dtype=bool)
    frob_sq = 0.0  # ||A_k||_F^2 of the accumulated approximant
    max_seen = 0.0  # largest |entry| met so far; sets the zero-pivot scale
    converged = False
    i_star: int | None = 0

    def residual_row(i: int) -> np.ndarray:
        row = np.asarray(entry_fn(i, all_cols), dtype=np.float64).reshape(n_cols)
        if rank:
            row = row - u_store[i, :rank] @ vt_store[:rank, :]
        return row

    while rank < budget and i_star is not None:
        row = residual_row(i_star)
        row_used[i_star] = True
        max_seen = max(max_seen, float(np.max(np.abs(row))))

        # pivot columns already consumed hold exact zeros in the true
        # residual; mask them so roundoff there cannot be selected
        masked = np.where(col_used, 0.0, row)
        j_star = int(np.argmax(np.abs(masked)))
        pivot = float(masked[j_star])
        if abs(pivot) <= _EPS64 * max_seen:
            remaining = np.flatnonzero(~row_used)
            i_star = int(remaining[0]) if remaining.size else None
            continue

        v_new = row / pivot
        col = np.asarray(entry_fn(all_rows, j_star), dtype=np.float64).reshape(n_rows)
        if rank:
            col = col - u_store[:, :rank] @ vt_store[:rank, j_star]
        u_new = col
        col_used[j_star] = True

        if rank == cap:
            cap = min(2 * cap, budget)
            u_store = np.concatenate(
                [u_store, np.empty((n_rows, cap - rank))], axis=1)
            vt_store = np.concatenate(
                [vt_store, np.empty((cap - rank, n_cols))], axis=0)
        u_store[:, rank] = u_new
        vt_store[rank, :] = v_new

        u_norm = float(np.linalg.norm(u_new))
        v_norm = float(np.linalg.norm(v_new))
        cross = 0.0
        if rank:
            cross = 2.0 * float(
                (u_store[:, :rank].T @ u_new) @ (vt_store[:rank, :] @ v_new))
        frob_sq = max(frob_sq + (u_norm * v_norm) ** 2 + cross, 0.0)
        rank += 1

        if u_norm * v_norm <= tol * math.sqrt(frob_sq):
            converged = True
            break

        candidates = np.abs(u_new)
        candidates[row_used] = -1.0
        i_star = int(np.argmax(candidates))
        if candidates[i_star] < 0.0:
            i_star = None

    u = np.ascontiguousarray(u_store[:, :rank])
    vt = np.ascontiguousarray(vt_store[:rank, :])

    if not converged and rank < budget:
        # ran out of pivot rows: measure the true remainder exactly
        rem_sq = 0.0
        for i in range(n_rows):
            r = np.asarray(entry_fn(i, all_cols), dtype=np.float64).reshape(n_cols)
            if rank:
                r = r - u[i, :] @ vt
            rem_sq += float(r @ r)
        if math.sqrt(rem_sq) > tol * math.sqrt(frob_sq):
            full = np.asarray(
                entry_fn(all_rows[:, None], all_cols[None, :]),
                dtype=np.float64).reshape(n_rows, n_cols)
            if n_cols <= n_rows:
                return LowRankBlockF64(full, np.eye(n_cols), fallback=True)
            return LowRankBlockF64(np.eye(n_rows), full, fallback=True)

    return LowRankBlockF64(u, vt)


@dataclass
class BuildReport:
    """Aggregate compression statistics for one built H-matrix."""

    n: int
    dense_blocks: int
    lowrank_blocks: int
    fallback_blocks: int
    rank_histogram: dict[int, int]
    stored_scalars: int
    compression_ratio: float
    aca_tol: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "dense_blocks": self.dense_blocks,
            "lowrank_blocks": self.lowrank_blocks,
            "fallback_blocks": self.fallback_blocks,
            "rank_histogram": {str(k): v for k, v in sorted(self.rank_histogram.items())},
            "stored_scalars": self.stored_scalars,
            "compression_ratio": self.compression_ratio,
            "aca_tol": self.aca_tol,
        }


@dataclass
class HMatrixF64:
    """FP64 master H-matrix: partition plus one payload per block."""

    partition: BlockPartition
    payloads: list  # DenseBlockF64 | LowRankBlockF64, aligned with blocks
    report: BuildReport | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def permutation(self) -> np.ndarray:
        return self.partition.tree.permutation

    def items(self):
        return zip(self.partition.blocks, self.payloads)


def _permuted_entry_fn(pcent, parea, row0: int, col0: int):
    """Kernel entries for one block, in block-relative permuted indices."""

    def fn(i, j):
        gi = np.asarray(i, dtype=np.intp) + row0
        gj = np.asarray(j, dtype=np.intp) + col0
        diff = pcent[gi] - pcent[gj]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            off_diag = parea[gj] / (_FOUR_PI * dist)
        self_term = 0.5 * np.sqrt(parea[gi] / math.pi)
        return np.where(gi == gj, self_term, off_diag)

    return fn


def _fill_dense_block(pcent, parea, blk: Block) -> np.ndarray:
    r0, r1, c0, c1 = blk.row_start, blk.row_end, blk.col_start, blk.col_end
    diff = pcent[r0:r1, None, :] - pcent[None, c0:c1, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = parea[None, c0:c1] / (_FOUR_PI * dist)
    lo, hi = max(r0, c0), min(r1, c1)
    if lo < hi:  # ranges overlap: patch the self terms
        g = np.arange(lo, hi)
        vals[g - r0, g - c0] = 0.5 * np.sqrt(parea[g] / math.pi)
    return vals


def build_hmatrix(mesh, partition: BlockPartition | None = None,
                  aca_tol: float = DEFAULT_ACA_TOL,
                  max_rank: int | None = None,
                  leaf_size: int = DEFAULT_LEAF_SIZE,
                  eta: float = DEFAULT_ETA) -> HMatrixF64:
    """Compress the kernel matrix of `mesh` into an FP64 H-matrix.

    A cluster tree and block partition are built on demand when
    `partition` is not supplied. ACA dense fallbacks are counted in the
    build report; they do not fail the build.
    """
    if partition is None:
        tree = build_cluster_tree(mesh, leaf_size=leaf_size)
        partition = build_block_partition(tree, eta=eta)

    perm = partition.tree.permutation
    pcent = np.ascontiguousarray(mesh.centroids[perm])
    parea = np.ascontiguousarray(mesh.areas[perm])

    # coincident centroids make the kernel singular; refuse early
    order = np.lexsort(pcent.T)
    dup = np.all(pcent[order[1:]] == pcent[order[:-1]], axis=1)
    if np.any(dup):
        raise ValueError("mesh has coincident panel centroids")

    payloads = []
    fallbacks = 0
    rank_hist: dict[int, int] = {}
    for blk in partition.blocks:
        if blk.admissible:
            fn = _permuted_entry_fn(pcent, parea, blk.row_start, blk.col_start)
            lr = aca_approximate(fn, blk.rows, blk.cols, tol=aca_tol,
                                 max_rank=max_rank)
            if lr.fallback:
                fallbacks += 1
                payloads.append(DenseBlockF64(lr.u @ lr.vt))
            else:
                payloads.append(lr)
                rank_hist[lr.rank] = rank_hist.get(lr.rank, 0) + 1
        else:
            payloads.append(DenseBlockF64(_fill_dense_block(pcent, parea, blk)))

    stored = sum(
        p.values.size if isinstance(p, DenseBlockF64) else p.u.size + p.vt.size
        for p in payloads
    )
    n = partition.n
    report = BuildReport(
        n=n,
        dense_blocks=sum(isinstance(p, DenseBlockF64) for p in payloads),
        lowrank_blocks=sum(isinstance(p, LowRankBlockF64) for p in payloads),
        fallback_blocks=fallbacks,
        rank_histogram=rank_hist,
        stored_scalars=int(stored),
        compression_ratio=float(stored) / float(n * n),
        aca_tol=aca_tol,
    )
    return HMatrixF64(partition=partition, payloads=payloads, report=report)


def densify(h: HMatrixF64, cap: int = DENSIFY_CAP) -> np.ndarray:
    """Expand the H-matrix into a dense FP64 matrix in original index order."""
    n = h.n
    if n > cap:
        raise ValueError(f"densify of N={n} exceeds the cap of {cap}")
    out = np.zeros((n, n), dtype=np.float64)
    for blk, pay in h.items():
        vals = pay.values if isinstance(pay, DenseBlockF64) else pay.u @ pay.vt
        out[blk.row_start:blk.row_end, blk.col_start:blk.col_end] = vals
    perm = h.permutation
    result = np.empty_like(out)
    result[np.ix_(perm, perm)] = out
    return result
