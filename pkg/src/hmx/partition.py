"""Cluster tree over panel centroids and the admissible block partition.

The tree recursively bisects index ranges at the median coordinate of
the longest bounding-box axis. The partition walks pairs of tree nodes
and emits a block either when the pair is geometrically admissible
(eligible for low-rank storage) or when both nodes are leaves. Together
the emitted blocks tile the N x N index square exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClusterNode",
    "ClusterTree",
    "Block",
    "BlockPartition",
    "build_cluster_tree",
    "build_block_partition",
    "is_admissible",
    "dump_partition",
]

DEFAULT_LEAF_SIZE = 32
DEFAULT_ETA = 2.0


@dataclass
class ClusterNode:
    """A contiguous range [start, end) of permuted indices with its bbox."""

    start: int
    end: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    left: "ClusterNode | None" = None
    right: "ClusterNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def size(self) -> int:
        return self.end - self.start

    @property
    def diameter(self) -> float:
        """Euclidean length of the bounding-box diagonal."""
        return float(np.linalg.norm(self.bbox_max - self.bbox_min))


def node_distance(a: ClusterNode, b: ClusterNode) -> float:
    """Euclidean distance between two axis-aligned bounding boxes."""
    gap = np.maximum(0.0, np.maximum(a.bbox_min - b.bbox_max,
                                     b.bbox_min - a.bbox_max))
    return float(np.linalg.norm(gap))


@dataclass
class ClusterTree:
    root: ClusterNode
    permutation: np.ndarray  # maps permuted index -> original panel index
    leaf_size: int

    @property
    def n(self) -> int:
        return self.root.end


def build_cluster_tree(mesh, leaf_size: int = DEFAULT_LEAF_SIZE) -> ClusterTree:
    """Median-bisection cluster tree over `mesh.centroids`.

    Splits are taken along the longest bounding-box axis at the median,
    with coordinate ties broken by original panel index, so the result
    is deterministic for a given mesh.
    """
    points = np.asarray(mesh.centroids, dtype=np.float64)
    n = points.shape[0]
    if n < 1:
        raise ValueError("cannot build a tree over an empty mesh")
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")

    perm = np.arange(n, dtype=np.int64)

    def build(start: int, end: int) -> ClusterNode:
        pts = points[perm[start:end]]
        node = ClusterNode(start, end, pts.min(axis=0), pts.max(axis=0))
        if end - start > leaf_size:
            axis = int(np.argmax(node.bbox_max - node.bbox_min))
            # secondary key = original index, for deterministic ties
            order = np.lexsort((perm[start:end], pts[:, axis]))
            perm[start:end] = perm[start:end][order]
            mid = start + (end - start) // 2
            node.left = build(start, mid)
            node.right = build(mid, end)
        return node

    root = build(0, n)
    perm.setflags(write=False)
    return ClusterTree(root=root, permutation=perm, leaf_size=leaf_size)


@dataclass(frozen=True)
class Block:
    """Half-open row/col ranges in permuted indices, plus admissibility."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int
    admissible: bool

    @property
    def rows(self) -> int:
        return self.row_end - self.row_start

    @property
    def cols(self) -> int:
        return self.col_end - self.col_start


@dataclass
class BlockPartition:
    blocks: list[Block]
    n: int
    tree: ClusterTree = field(repr=False)

    @property
    def admissible_blocks(self) -> list[Block]:
        return [b for b in self.blocks if b.admissible]

    def coverage_count(self) -> int:
        """Sum of block areas; equals n*n iff the tiling is exact."""
        return sum(b.rows * b.cols for b in self.blocks)


def is_admissible(s: ClusterNode, t: ClusterNode, eta: float) -> bool:
    """min(diam_s, diam_t) <= eta * dist(s, t), requiring positive distance.

    Overlapping ranges have distance 0 and are therefore never admissible.
    """
    dist = node_distance(s, t)
    return dist > 0.0 and min(s.diameter, t.diameter) <= eta * dist


def build_block_partition(tree: ClusterTree, eta: float = DEFAULT_ETA) -> BlockPartition:
    """Dual traversal from (root, root) emitting admissible and leaf blocks."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    blocks: list[Block] = []

    def visit(s: ClusterNode, t: ClusterNode) -> None:
        if is_admissible(s, t, eta):
            blocks.append(Block(s.start, s.end, t.start, t.end, True))
            return
        if s.is_leaf and t.is_leaf:
            blocks.append(Block(s.start, s.end, t.start, t.end, False))
            return
        for sc in (s.left, s.right) if not s.is_leaf else (s,):
            for tc in (t.left, t.right) if not t.is_leaf else (t,):
                visit(sc, tc)

    visit(tree.root, tree.root)
    return BlockPartition(blocks=blocks, n=tree.n, tree=tree)


def dump_partition(partition: BlockPartition, path) -> None:
    """One line per block: `i_s i_e j_s j_e admissible(0|1)`."""
    with open(path, "w", encoding="ascii") as fh:
        for b in partition.blocks:
            fh.write(f"{b.row_start} {b.row_end} {b.col_start} {b.col_end} "
                     f"{1 if b.admissible else 0}\n")
