"""Mixed-precision hierarchical matrices with a BEM benchmark harness."""

from .bench import (
    BenchConfig,
    BenchRecord,
    emit_report,
    read_report,
    run_matvec_bench,
    run_solver_bench,
)
from .compress import (
    BuildReport,
    DenseBlockF64,
    HMatrixF64,
    LowRankBlockF64,
    aca_approximate,
    build_hmatrix,
    densify,
)
from .matvec import SourceVector, block_mul_dense, block_mul_lowrank, matvec, matvec_threaded
from .oracle import dense_matvec, dense_solve, frobenius_error
from .partition import (
    Block,
    BlockPartition,
    ClusterNode,
    ClusterTree,
    build_block_partition,
    build_cluster_tree,
    dump_partition,
    is_admissible,
)
from .precision import (
    PrecisionScheme,
    ScaledLowRank,
    SchemeHMatrix,
    SplitLowRank,
    parse_scheme,
    payload_bytes,
    prepare_scheme,
    scale_decompose,
    split_indices,
    storage_table,
)
from .problem import (
    PanelMesh,
    assemble_dense,
    axis_centers,
    build_sphere_mesh,
    export_mesh,
    kernel_entry,
    right_hand_side,
)
from .solver import SolverConfig, SolverReport, bicgstab, true_residual

__version__ = "0.1.0"

__all__ = [
    "BenchConfig", "BenchRecord", "emit_report", "read_report",
    "run_matvec_bench", "run_solver_bench",
    "BuildReport", "DenseBlockF64", "HMatrixF64", "LowRankBlockF64",
    "aca_approximate", "build_hmatrix", "densify",
    "SourceVector", "block_mul_dense", "block_mul_lowrank",
    "matvec", "matvec_threaded",
    "dense_matvec", "dense_solve", "frobenius_error",
    "Block", "BlockPartition", "ClusterNode", "ClusterTree",
    "build_block_partition", "build_cluster_tree", "dump_partition",
    "is_admissible",
    "PrecisionScheme", "ScaledLowRank", "SchemeHMatrix", "SplitLowRank",
    "parse_scheme", "payload_bytes", "prepare_scheme", "scale_decompose",
    "split_indices", "storage_table",
    "PanelMesh", "assemble_dense", "axis_centers", "build_sphere_mesh",
    "export_mesh", "kernel_entry", "right_hand_side",
    "SolverConfig", "SolverReport", "bicgstab", "true_residual",
    "__version__",
]
