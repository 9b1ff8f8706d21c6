"""Test geometry and kernel for the electrostatics benchmark problem.

Conductive spheres are triangulated by icosahedron subdivision and the
resulting panels carry a Laplace single-layer collocation kernel: entry
(i, j) is the potential induced at the centroid of panel i by a unit
surface-charge density on panel j under one-point quadrature. The
diagonal uses the analytic self-integral of a flat disc of equal area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Panel",
    "PanelMesh",
    "axis_centers",
    "build_sphere_mesh",
    "kernel_entry",
    "kernel_entries",
    "right_hand_side",
    "assemble_dense",
    "export_mesh",
]

#: refuse to build meshes larger than this many panels
DEFAULT_PANEL_CAP = 200_000

#: dense assembly refuses above this dimension (O(N^2) memory)
DENSE_ORACLE_CAP = 4096


@dataclass(frozen=True)
class Panel:
    """One triangular panel: centroid, area and its vertex indices."""

    centroid: np.ndarray
    area: float
    vertex_indices: tuple[int, int, int]


class PanelMesh:
    """Immutable triangle mesh over one or more spheres.

    Attributes
    ----------
    vertices : (V, 3) float64
        Shared vertex coordinates.
    triangles : (N, 3) int64
        Vertex indices per panel.
    centroids : (N, 3) float64
        Arithmetic mean of each panel's three vertices.
    areas : (N,) float64
        Flat triangle areas, all positive.
    sphere_ids : (N,) int64
        Index of the sphere owning each panel.
    voltages : (S,) float64
        Excitation voltage per sphere.
    """

    def __init__(self, vertices, triangles, sphere_ids, voltages):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.sphere_ids = np.ascontiguousarray(sphere_ids, dtype=np.int64)
        self.voltages = np.ascontiguousarray(voltages, dtype=np.float64)

        corners = self.vertices[self.triangles]  # (N, 3, 3)
        self.centroids = corners.mean(axis=1)
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        self.areas = 0.5 * np.linalg.norm(cross, axis=1)

        if self.n < 1:
            raise ValueError("mesh must contain at least one panel")
        if not np.all(self.areas > 0.0):
            raise ValueError("mesh contains degenerate (zero-area) panels")

        # writes after construction would invalidate derived quantities
        for arr in (self.vertices, self.triangles, self.sphere_ids,
                    self.voltages, self.centroids, self.areas):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.triangles.shape[0]

    @property
    def panels(self) -> list[Panel]:
        """Panel views (convenience accessor, not used on hot paths)."""
        return [
            Panel(self.centroids[i], float(self.areas[i]), tuple(self.triangles[i]))
            for i in range(self.n)
        ]


# icosahedron with unit circumradius, the classic 12-vertex table
_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTICES = [
    (-1.0, _PHI, 0.0), (1.0, _PHI, 0.0), (-1.0, -_PHI, 0.0), (1.0, -_PHI, 0.0),
    (0.0, -1.0, _PHI), (0.0, 1.0, _PHI), (0.0, -1.0, -_PHI), (0.0, 1.0, -_PHI),
    (_PHI, 0.0, -1.0), (_PHI, 0.0, 1.0), (-_PHI, 0.0, -1.0), (-_PHI, 0.0, 1.0),
]
_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


@lru_cache(maxsize=8)
def _unit_sphere(refinement: int):
    """Vertices/faces of a unit sphere after `refinement` subdivision rounds."""
    verts = [np.array(v) / np.linalg.norm(v) for v in _ICO_VERTICES]
    faces = list(_ICO_FACES)
    for _ in range(refinement):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint_cache.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)  # project back onto the sphere
                verts.append(m)
                idx = len(verts) - 1
                midpoint_cache[key] = idx
            return idx

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = next_faces

    v = np.array(verts)
    f = np.array(faces, dtype=np.int64)
    v.setflags(write=False)
    f.setflags(write=False)
    return v, f


def axis_centers(count: int, spacing: float) -> list[tuple[float, float, float]]:
    """Sphere centers on the x-axis, `spacing` apart, starting at the origin."""
    return [(k * spacing, 0.0, 0.0) for k in range(count)]


def build_sphere_mesh(centers, radius=1.0, refinement=0, voltages=None,
                      max_panels=DEFAULT_PANEL_CAP) -> PanelMesh:
    """Build the multi-sphere icosphere test mesh.

    Parameters
    ----------
    centers : sequence of 3-vectors
        Sphere centers. Spheres must be pairwise non-intersecting.
    radius : float
        Common sphere radius, > 0.
    refinement : int
        Subdivision rounds; each sphere gets 20 * 4**refinement panels.
    voltages : sequence of float, optional
        Per-sphere excitation. Defaults to 1.0 everywhere.
    max_panels : int
        Size cap; exceeding it raises instead of allocating.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if centers.ndim != 2 or centers.shape[1] != 3 or centers.shape[0] < 1:
        raise ValueError("centers must be a nonempty sequence of 3-vectors")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if refinement < 0:
        raise ValueError("refinement must be >= 0")

    n_spheres = centers.shape[0]
    if voltages is None:
        voltages = np.ones(n_spheres)
    voltages = np.asarray(voltages, dtype=np.float64)
    if voltages.shape != (n_spheres,):
        raise ValueError("need exactly one voltage per sphere")

    for a in range(n_spheres):
        for b in range(a + 1, n_spheres):
            if np.linalg.norm(centers[a] - centers[b]) <= 2.0 * radius:
                raise ValueError(
                    f"spheres {a} and {b} intersect or touch "
                    f"(center distance must exceed 2*radius = {2.0 * radius})"
                )

    panels_per_sphere = 20 * 4 ** refinement
    total = n_spheres * panels_per_sphere
    if total > max_panels:
        raise ValueError(
            f"refinement {refinement} with {n_spheres} spheres needs {total} "
            f"panels, above the cap of {max_panels}"
        )

    unit_v, unit_f = _unit_sphere(refinement)
    all_vertices = []
    all_faces = []
    sphere_ids = np.repeat(np.arange(n_spheres, dtype=np.int64), panels_per_sphere)
    offset = 0
    for center in centers:
        all_vertices.append(unit_v * radius + center)
        all_faces.append(unit_f + offset)
        offset += unit_v.shape[0]

    return PanelMesh(
        vertices=np.vstack(all_vertices),
        triangles=np.vstack(all_faces),
        sphere_ids=sphere_ids,
        voltages=voltages,
    )


_FOUR_PI = 4.0 * math.pi


def kernel_entries(mesh: PanelMesh, i, j) -> np.ndarray:
    """Vectorized kernel evaluation with numpy index broadcasting.

    `i` and `j` are integer scalars or broadcastable index arrays; the
    result has the broadcast shape. Off-diagonal entries are
    area_j / (4 pi |c_i - c_j|); coincident indices get the flat-disc
    self term sqrt(area_i / pi) / 2.
    """
    i = np.asarray(i, dtype=np.intp)
    j = np.asarray(j, dtype=np.intp)
    diff = mesh.centroids[i] - mesh.centroids[j]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    same = i == j
    if np.any((dist == 0.0) & ~same):
        raise ValueError("coincident centroids between distinct panels")
    with np.errstate(divide="ignore", invalid="ignore"):
        off_diag = mesh.areas[j] / (_FOUR_PI * dist)
    self_term = 0.5 * np.sqrt(mesh.areas[i] / math.pi)
    return np.where(same, self_term, off_diag)


def kernel_entry(mesh: PanelMesh, i: int, j: int) -> float:
    """Single kernel entry A[i, j]; see `kernel_entries`."""
    return float(kernel_entries(mesh, i, j))


def right_hand_side(mesh: PanelMesh) -> np.ndarray:
    """Excitation vector: b[i] is the voltage of the sphere owning panel i."""
    return mesh.voltages[mesh.sphere_ids].copy()


def assemble_dense(mesh: PanelMesh, cap: int = DENSE_ORACLE_CAP) -> np.ndarray:
    """Assemble the full N x N kernel matrix (oracle use; capped)."""
    n = mesh.n
    if n > cap:
        raise ValueError(f"dense assembly of N={n} exceeds the cap of {cap}")
    idx = np.arange(n)
    return kernel_entries(mesh, idx[:, None], idx[None, :])


def export_mesh(mesh: PanelMesh, path) -> None:
    """Write one line per panel: `cx cy cz area sphere_id`.

    Values are written with 17 significant digits so FP64 round-trips.
    """
    with open(path, "w", encoding="ascii") as fh:
        for c, a, s in zip(mesh.centroids, mesh.areas, mesh.sphere_ids):
            fh.write(f"{c[0]:.17g} {c[1]:.17g} {c[2]:.17g} {a:.17g} {s:d}\n")
