"""Cluster tree and block partition tests."""

import numpy as np
import pytest

from hmx.partition import (
    ClusterNode,
    build_block_partition,
    build_cluster_tree,
    dump_partition,
    is_admissible,
    node_distance,
)
from hmx.problem import axis_centers, build_sphere_mesh


def make_tree(spheres=1, refinement=1, leaf_size=32):
    mesh = build_sphere_mesh(axis_centers(spheres, 3.0), refinement=refinement)
    return build_cluster_tree(mesh, leaf_size=leaf_size)


def collect_leaves(node):
    if node.is_leaf:
        return [node]
    return collect_leaves(node.left) + collect_leaves(node.right)


def test_tree_covers_all_indices_once():
    tree = make_tree(spheres=3, refinement=1)
    leaves = collect_leaves(tree.root)
    spans = sorted((lf.start, lf.end) for lf in leaves)
    cursor = 0
    for start, end in spans:
        assert start == cursor
        cursor = end
    assert cursor == tree.n
    assert sorted(tree.permutation.tolist()) == list(range(tree.n))


def test_leaf_sizes_bounded():
    tree = make_tree(spheres=3, refinement=1, leaf_size=16)
    for leaf in collect_leaves(tree.root):
        assert 1 <= leaf.size <= 16


def test_median_split_balance():
    tree = make_tree(spheres=1, refinement=2)

    def walk(node):
        if node.is_leaf:
            return
        assert abs(node.left.size - node.right.size) <= 1
        walk(node.left)
        walk(node.right)

    walk(tree.root)


def test_bboxes_contain_their_points():
    mesh = build_sphere_mesh(axis_centers(2, 3.0), refinement=1)
    tree = build_cluster_tree(mesh)
    pts = mesh.centroids[tree.permutation]

    def walk(node):
        chunk = pts[node.start:node.end]
        assert np.all(chunk >= node.bbox_min - 1e-14)
        assert np.all(chunk <= node.bbox_max + 1e-14)
        if not node.is_leaf:
            walk(node.left)
            walk(node.right)

    walk(tree.root)


def test_tree_build_is_deterministic():
    t1 = make_tree(spheres=3, refinement=1)
    t2 = make_tree(spheres=3, refinement=1)
    assert np.array_equal(t1.permutation, t2.permutation)


def box(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return ClusterNode(start=0, end=1, bbox_min=lo, bbox_max=hi)


def test_node_distance_known_boxes():
    a = box([0, 0, 0], [1, 1, 1])
    b = box([3, 0, 0], [4, 1, 1])
    assert node_distance(a, b) == pytest.approx(2.0)
    c = box([3, 5, 0], [4, 6, 1])
    assert node_distance(a, c) == pytest.approx(np.hypot(2.0, 4.0))


def test_admissibility_requires_separation():
    a = box([0, 0, 0], [1, 1, 1])
    far = box([3, 3, 3], [4, 4, 4])
    touching = box([1, 0, 0], [2, 1, 1])
    overlapping = box([0.5, 0, 0], [1.5, 1, 1])
    assert is_admissible(a, far, eta=2.0)
    # zero distance can never be admissible, whatever eta
    assert not is_admissible(a, touching, eta=1e9)
    assert not is_admissible(a, overlapping, eta=1e9)


def test_admissibility_eta_monotone():
    a = box([0, 0, 0], [1, 1, 1])
    b = box([1.5, 0, 0], [2.5, 1, 1])
    # diam = sqrt(3), dist = 0.5: admissible iff eta >= sqrt(3)/0.5
    assert not is_admissible(a, b, eta=3.0)
    assert is_admissible(a, b, eta=3.5)


def partition_for(spheres, refinement, leaf_size=32, eta=2.0):
    mesh = build_sphere_mesh(axis_centers(spheres, 3.0), refinement=refinement)
    tree = build_cluster_tree(mesh, leaf_size=leaf_size)
    return build_block_partition(tree, eta=eta)


def test_partition_tiles_the_matrix_exactly():
    part = partition_for(spheres=1, refinement=1)
    n = part.n
    cover = np.zeros((n, n), dtype=np.int32)
    for blk in part.blocks:
        cover[blk.row_start:blk.row_end, blk.col_start:blk.col_end] += 1
    assert np.all(cover == 1)


def test_partition_area_identity():
    part = partition_for(spheres=3, refinement=1)
    total = sum((b.row_end - b.row_start) * (b.col_end - b.col_start)
                for b in part.blocks)
    assert total == part.n**2


def test_inadmissible_blocks_are_leaf_sized():
    part = partition_for(spheres=2, refinement=1, leaf_size=16)
    for blk in part.blocks:
        if not blk.admissible:
            assert blk.row_end - blk.row_start <= 16
            assert blk.col_end - blk.col_start <= 16


def test_admissible_blocks_exist_for_separated_spheres():
    part = partition_for(spheres=3, refinement=1)
    assert len(part.admissible_blocks) > 0
    assert any(not b.admissible for b in part.blocks)


def test_higher_eta_admits_more():
    loose = partition_for(spheres=3, refinement=1, eta=4.0)
    strict = partition_for(spheres=3, refinement=1, eta=0.5)
    frac_loose = len(loose.admissible_blocks) / len(loose.blocks)
    frac_strict = len(strict.admissible_blocks) / len(strict.blocks)
    assert frac_loose > frac_strict


def test_dump_partition_format(tmp_path):
    part = partition_for(spheres=1, refinement=1)
    path = tmp_path / "blocks.txt"
    dump_partition(part, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(part.blocks)
    for line, blk in zip(lines, part.blocks):
        i_s, i_e, j_s, j_e, flag = (int(v) for v in line.split())
        assert (i_s, i_e, j_s, j_e) == (blk.row_start, blk.row_end,
                                        blk.col_start, blk.col_end)
        assert flag == int(blk.admissible)


def test_leaf_size_validation():
    mesh = build_sphere_mesh(axis_centers(1, 3.0), refinement=0)
    with pytest.raises(ValueError):
        build_cluster_tree(mesh, leaf_size=0)


class _PointCloud:
    """Minimal stand-in for a mesh: the tree only reads `.centroids`."""

    def __init__(self, points):
        self.centroids = np.asarray(points, dtype=np.float64)


def test_four_collinear_points_split_at_median():
    cloud = _PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                         [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    tree = build_cluster_tree(cloud, leaf_size=2)
    root = tree.root
    assert not root.is_leaf
    assert root.left.is_leaf and root.right.is_leaf
    assert (root.left.start, root.left.end) == (0, 2)
    assert (root.right.start, root.right.end) == (2, 4)
    assert np.array_equal(tree.permutation, [0, 1, 2, 3])


def test_single_point_tree():
    tree = build_cluster_tree(_PointCloud([[1.0, 2.0, 3.0]]), leaf_size=32)
    assert tree.root.is_leaf
    assert (tree.root.start, tree.root.end) == (0, 1)
    assert np.array_equal(tree.permutation, [0])


def test_distant_spheres_compress_to_one_offdiagonal_block():
    # Gap of 8 sphere radii: the whole inter-sphere coupling is admissible
    # at the first level where the clusters separate.
    mesh = build_sphere_mesh(axis_centers(2, 10.0), refinement=0)
    part = build_block_partition(build_cluster_tree(mesh), eta=2.0)
    upper = [b for b in part.blocks
             if b.row_start == 0 and b.row_end == 20
             and b.col_start == 20 and b.col_end == 40]
    assert len(upper) == 1
    assert upper[0].admissible
