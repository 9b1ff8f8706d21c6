"""BiCGSTAB solver tests."""

import numpy as np
import pytest

from hmx.compress import DenseBlockF64, HMatrixF64, build_hmatrix
from hmx.partition import Block, BlockPartition, ClusterNode, ClusterTree
from hmx.precision import prepare_scheme
from hmx.problem import axis_centers, build_sphere_mesh, right_hand_side
from hmx.solver import SolverConfig, bicgstab, true_residual


def dense_as_hmatrix(values):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    pts = np.zeros((n, 3))
    node = ClusterNode(start=0, end=n, bbox_min=pts.min(0), bbox_max=pts.max(0))
    tree = ClusterTree(root=node, permutation=np.arange(n), leaf_size=n)
    part = BlockPartition(blocks=[Block(0, n, 0, n, admissible=False)],
                          n=n, tree=tree)
    return HMatrixF64(partition=part, payloads=[DenseBlockF64(values)])


@pytest.fixture(scope="module")
def problem():
    mesh = build_sphere_mesh(axis_centers(3, 3.0), refinement=1)
    h = build_hmatrix(mesh)
    return h, right_hand_side(mesh)


def test_identity_converges_immediately():
    h = dense_as_hmatrix(np.eye(8))
    b = np.arange(1.0, 9.0)
    x, report = bicgstab(prepare_scheme(h, "m1-double"), h, b)
    assert report.converged
    assert report.iterations <= 1
    assert np.allclose(x, b, rtol=1e-12)
    assert report.residual_history[0] == 1.0
    assert report.true_residual < 1e-12


def test_small_dense_system():
    rng = np.random.default_rng(51)
    a = rng.normal(size=(20, 20)) + 20.0 * np.eye(20)
    h = dense_as_hmatrix(a)
    b = rng.normal(size=20)
    x, report = bicgstab(prepare_scheme(h, "m1-double"), h, b,
                         SolverConfig(tol=1e-10))
    assert report.converged
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-10


def test_bem_problem_converges(problem):
    h, b = problem
    x, report = bicgstab(prepare_scheme(h, "m2-mixed"), h, b)
    assert report.converged
    assert report.true_residual < 1e-6
    assert report.breakdown is None
    assert report.scheme == "m2-mixed"
    assert len(report.residual_history) == report.iterations + 1
    assert report.residual_history[0] == 1.0  # x0 = 0, so r0 = b
    assert report.wall_time_s > 0.0


def test_history_and_report_without_convergence(problem):
    h, b = problem
    x, report = bicgstab(prepare_scheme(h, "m1-double"), h, b,
                         SolverConfig(tol=1e-15, max_iter=3))
    assert not report.converged
    assert report.iterations == 3
    assert len(report.residual_history) == 4
    # the recurrence tolerance was never met, so no confirmation ran
    assert report.true_residual is None
    assert report.breakdown is None


def test_zero_rhs_short_circuits(problem):
    h, _ = problem
    x, report = bicgstab(prepare_scheme(h, "m1-double"), h, np.zeros(h.n))
    assert report.converged
    assert report.iterations == 0
    assert report.residual_history == [0.0]
    assert report.true_residual == 0.0
    assert np.all(x == 0.0)


def test_breakdown_reported_not_raised():
    h = dense_as_hmatrix(np.zeros((6, 6)))
    b = np.ones(6)
    x, report = bicgstab(prepare_scheme(h, "m1-double"), h, b)
    assert not report.converged
    assert report.breakdown is not None
    assert "vanished" in report.breakdown


def test_shape_mismatch(problem):
    h, b = problem
    with pytest.raises(ValueError):
        bicgstab(prepare_scheme(h, "m1-double"), h, b[:-1])


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(threads=0)


def test_threaded_solve_converges_same_problem(problem):
    h, b = problem
    sh = prepare_scheme(h, "m1-single")
    x1, r1 = bicgstab(sh, h, b, SolverConfig(threads=1))
    x2, r2 = bicgstab(sh, h, b, SolverConfig(threads=2))
    assert r1.converged and r2.converged
    # thread partials sum in a different order, so solutions agree only
    # to solver tolerance, not bitwise
    assert np.linalg.norm(x1 - x2) / np.linalg.norm(x1) < 1e-5


def test_true_residual_manual_check():
    a = np.diag([2.0, 4.0])
    h = dense_as_hmatrix(a)
    b = np.array([2.0, 4.0])
    x = np.array([1.0, 1.0])
    assert true_residual(h, x, b) == 0.0
    x_off = np.array([1.0, 0.5])        # residual (0, 2), ||b|| = sqrt(20)
    assert true_residual(h, x_off, b) == pytest.approx(2.0 / np.sqrt(20.0))


def test_true_residual_zero_rhs():
    h = dense_as_hmatrix(np.eye(3))
    assert true_residual(h, np.zeros(3), np.zeros(3)) == 0.0


def test_scaled_identity_halves_rhs():
    h = dense_as_hmatrix(2.0 * np.eye(10))
    b = np.ones(10)
    x, report = bicgstab(prepare_scheme(h, "m1-double"), h, b)
    assert report.converged
    assert np.allclose(x, 0.5 * np.ones(10), rtol=1e-14)


def test_solution_matches_dense_factorization(problem):
    from hmx.oracle import dense_solve
    from hmx.problem import assemble_dense

    h, b = problem
    mesh = build_sphere_mesh(axis_centers(3, 3.0), refinement=1)
    x_ref = dense_solve(assemble_dense(mesh), b)
    cfg = SolverConfig(tol=1e-8, max_iter=200)
    x, report = bicgstab(prepare_scheme(h, "m1-double"), h, b, cfg)
    assert report.converged
    rel = np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref)
    assert rel <= 1e-5


def test_lower_precision_never_speeds_convergence(problem):
    h, b = problem
    _, rep64 = bicgstab(prepare_scheme(h, "m1-double"), h, b)
    _, rep32 = bicgstab(prepare_scheme(h, "m1-single"), h, b)
    assert rep64.converged and rep32.converged
    assert rep32.iterations >= rep64.iterations


def test_true_residual_at_exact_solution_hits_compression_floor(problem):
    from hmx.oracle import dense_solve
    from hmx.problem import assemble_dense

    h, b = problem
    mesh = build_sphere_mesh(axis_centers(3, 3.0), refinement=1)
    x_ref = dense_solve(assemble_dense(mesh), b)
    # only the block-compression error is left; default tolerance is 1e-8
    assert true_residual(h, x_ref, b) <= 1e-6


def test_true_residual_from_zero_guess_is_one(problem):
    h, b = problem
    assert true_residual(h, np.zeros(b.shape[0]), b) == 1.0
