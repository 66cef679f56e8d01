"""Watertight inside/outside testing, coarse voxelization and surface sampling.

The inside test casts parity rays along +x through a 2D bucket index built
over the (y, z) projections of the triangles. Hits that graze an edge,
vertex or an edge-on triangle are re-cast with a deterministically tilted
direction, so results are reproducible for any point farther than ~1e-9
from the surface.

Grid conventions: volumetric arrays are indexed [d, h, w] which map to the
(z, y, x) axes; cell i along an axis of resolution n has its center at
-1 + (i + 0.5) * (2 / n).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CanonicalMesh, DegenerateMeshError, NonWatertightMeshError, find_boundary_edge
from .validate import check_points

__all__ = [
    "CoarseOccupancyVolume",
    "DenseFieldGrid",
    "COARSE_SHAPE",
    "axis_cell_centers",
    "grid_cell_centers",
    "point_in_mesh",
    "voxelize_coarse",
    "sample_surface",
    "icosphere",
    "box_mesh",
    "quad_mesh",
]

COARSE_SHAPE = (32, 48, 32)  # (d, h, w), finer along height

_EDGE_GRAZE = 1e-9
_SURFACE_EPS = 1e-12
_MAX_RECASTS = 8


def axis_cell_centers(n: int) -> np.ndarray:
    """Centers of a uniform n-cell partition of [-1, 1]."""
    return -1.0 + (np.arange(n) + 0.5) * (2.0 / n)


def grid_cell_centers(shape: tuple[int, int, int]) -> np.ndarray:
    """(d*h*w, 3) xyz cell centers in C-order over the (d, h, w) grid."""
    d, h, w = shape
    zs = axis_cell_centers(d)
    ys = axis_cell_centers(h)
    xs = axis_cell_centers(w)
    z, y, x = np.meshgrid(zs, ys, xs, indexing="ij")
    return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


@dataclass(frozen=True)
class CoarseOccupancyVolume:
    """Low-resolution occupancy grid: {0,1} labels or (0,1) probabilities."""

    grid: np.ndarray  # (d, h, w)
    value_kind: str = "labels"  # "labels" | "probabilities"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 3:
            raise ValueError(f"grid must be (d, h, w), got shape {grid.shape}")
        if self.value_kind == "labels":
            if not np.isin(grid, (0.0, 1.0)).all():
                raise ValueError("label volumes may contain only 0 and 1")
        elif self.value_kind == "probabilities":
            if grid.min() <= 0.0 or grid.max() >= 1.0:
                raise ValueError("probability volumes must lie strictly in (0, 1)")
        else:
            raise ValueError(f"unknown value_kind {self.value_kind!r}")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.grid.shape)  # type: ignore[return-value]

    def occupied_fraction(self, threshold: float = 0.5) -> float:
        return float((self.grid > threshold).mean())


@dataclass(frozen=True)
class DenseFieldGrid:
    """Dense occupancy-probability grid the isosurface extractor consumes."""

    values: np.ndarray  # (d, h, w) float32 in [0, 1]

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if values.ndim != 3:
            raise ValueError(f"values must be (d, h, w), got shape {values.shape}")
        if min(values.shape) < 2:
            raise ValueError(f"resolution must be >= 2 per axis, got {values.shape}")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("field values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)  # type: ignore[return-value]

    @property
    def cell_spacing(self) -> tuple[float, float, float]:
        d, h, w = self.values.shape
        return (2.0 / d, 2.0 / h, 2.0 / w)

    def save(self, path: str | Path) -> None:
        """Binary blob: three little-endian int32 dims, then row-major float32."""
        with open(path, "wb") as fh:
            fh.write(np.asarray(self.values.shape, dtype="<i4").tobytes())
            fh.write(self.values.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "DenseFieldGrid":
        raw = Path(path).read_bytes()
        dims = np.frombuffer(raw[:12], dtype="<i4")
        values = np.frombuffer(raw[12:], dtype="<f4").reshape(tuple(dims))
        return cls(values=values.copy())


# --------------------------------------------------------------------------
# Inside/outside testing


class _RayParityTester:
    """Parity ray caster along +x with a (y, z) bucket grid over triangles."""

    def __init__(self, mesh: CanonicalMesh, n_buckets: int = 48):
        edge = find_boundary_edge(mesh.faces)
        if edge is not None:
            raise NonWatertightMeshError(
                f"inside test needs a watertight mesh: boundary edge {edge}"
            )
        self.mesh = mesh
        a, b, c = mesh.face_corners()
        self.a, self.b, self.c = a, b, c
        # yz projections (columns: y, z)
        self.a2 = a[:, 1:]
        self.b2 = b[:, 1:]
        self.c2 = c[:, 1:]
        self.area2 = np.cross(self.b2 - self.a2, self.c2 - self.a2)
        self.edge_len = np.stack(
            [
                np.linalg.norm(self.b2 - self.a2, axis=1),
                np.linalg.norm(self.c2 - self.b2, axis=1),
                np.linalg.norm(self.a2 - self.c2, axis=1),
            ],
            axis=1,
        )
        lo = np.minimum(np.minimum(self.a2, self.b2), self.c2)
        hi = np.maximum(np.maximum(self.a2, self.b2), self.c2)
        self.n = n_buckets
        self.origin = lo.min(axis=0) - 1e-9 if len(lo) else np.zeros(2)
        span = (hi.max(axis=0) - self.origin) if len(hi) else np.ones(2)
        self.inv_size = self.n / np.maximum(span + 1e-9, 1e-12)
        lo_idx = np.clip(((lo - self.origin) * self.inv_size).astype(np.int64), 0, self.n - 1)
        hi_idx = np.clip(((hi - self.origin) * self.inv_size).astype(np.int64), 0, self.n - 1)
        buckets: list[list[int]] = [[] for _ in range(self.n * self.n)]
        for t in range(len(lo_idx)):
            for iy in range(lo_idx[t, 0], hi_idx[t, 0] + 1):
                base = iy * self.n
                for iz in range(lo_idx[t, 1], hi_idx[t, 1] + 1):
                    buckets[base + iz].append(t)
        self.buckets = [np.asarray(b, dtype=np.int64) for b in buckets]

    def _bucket_ids(self, points: np.ndarray) -> np.ndarray:
        idx = ((points[:, 1:] - self.origin) * self.inv_size).astype(np.int64)
        out = np.full(len(points), -1, dtype=np.int64)
        ok = (idx >= 0).all(axis=1) & (idx < self.n).all(axis=1)
        out[ok] = idx[ok, 0] * self.n + idx[ok, 1]
        return out

    def query(self, points: np.ndarray) -> np.ndarray:
        points = check_points(points)
        inside = np.zeros(len(points), dtype=np.int64)
        if self.mesh.is_empty():
            return inside
        ids = self._bucket_ids(points)
        order = np.argsort(ids, kind="stable")
        uncertain: list[int] = []
        pos = 0
        while pos < len(order):
            bucket = ids[order[pos]]
            end = pos
            while end < len(order) and ids[order[end]] == bucket:
                end += 1
            rows = order[pos:end]
            pos = end
            if bucket < 0:
                continue  # outside the mesh footprint: parity 0
            tris = self.buckets[bucket]
            if len(tris) == 0:
                continue
            par, unc = self._parity_group(points[rows], tris)
            inside[rows] = par
            uncertain.extend(rows[unc])
        for row in uncertain:
            inside[row] = self._recast(points[row])
        return inside

    def _parity_group(self, pts: np.ndarray, tris: np.ndarray):
        """Vectorized parity over a (points x candidate triangles) block."""
        p2 = pts[:, None, 1:]  # (P, 1, 2)
        a2, b2, c2 = self.a2[tris], self.b2[tris], self.c2[tris]
        s0 = np.cross(b2 - a2, p2 - a2)
        s1 = np.cross(c2 - b2, p2 - b2)
        s2 = np.cross(a2 - c2, p2 - c2)
        area = self.area2[tris]
        thr = _EDGE_GRAZE * np.maximum(self.edge_len[tris], 1e-15)  # (T, 3)
        sign = np.where(area >= 0.0, 1.0, -1.0)
        t0, t1, t2 = thr[:, 0], thr[:, 1], thr[:, 2]
        strict = (sign * s0 > t0) & (sign * s1 > t1) & (sign * s2 > t2)
        relaxed = (sign * s0 > -t0) & (sign * s1 > -t1) & (sign * s2 > -t2)
        degenerate = np.abs(area) <= 1e-12
        # Degenerate yz projections are edge-on triangles; a point whose
        # projection lands within their thin footprint cannot be classified.
        near_degenerate = degenerate[None, :] & relaxed
        strict = strict & ~degenerate[None, :]
        grazing = (relaxed & ~strict & ~degenerate[None, :]) | near_degenerate

        crossings = np.zeros(len(pts), dtype=np.int64)
        uncertain = grazing.any(axis=1)
        if strict.any():
            pi, ti = np.nonzero(strict)
            tsel = tris[ti]
            lam_c = s0[pi, ti] / area[ti]
            lam_a = s1[pi, ti] / area[ti]
            lam_b = s2[pi, ti] / area[ti]
            x_int = (
                lam_a * self.a[tsel, 0] + lam_b * self.b[tsel, 0] + lam_c * self.c[tsel, 0]
            )
            dx = x_int - pts[pi, 0]
            on_surface = np.abs(dx) <= _SURFACE_EPS
            if on_surface.any():
                uncertain[pi[on_surface]] = True
            hits = dx > _SURFACE_EPS
            np.add.at(crossings, pi[hits], 1)
        return (crossings % 2), uncertain

    def _recast(self, point: np.ndarray) -> int:
        """Full ray cast with tilted directions until no grazing hit remains."""
        a, b, c = self.a, self.b, self.c
        e1 = b - a
        e2 = c - a
        parity = 0
        for attempt in range(1, _MAX_RECASTS + 1):
            tilt = 1e-3 * attempt
            direction = np.array([1.0, tilt, 2.0 * tilt])
            direction /= np.linalg.norm(direction)
            h = np.cross(direction, e2)
            det = np.einsum("ij,ij->i", e1, h)
            ok = np.abs(det) > 1e-14
            inv = np.where(ok, det, 1.0)
            s = point[None, :] - a
            u = np.einsum("ij,ij->i", s, h) / inv
            q = np.cross(s, e1)
            v = (q @ direction) / inv
            t = np.einsum("ij,ij->i", e2, q) / inv
            eps = 1e-9
            hit = ok & (u > eps) & (v > eps) & (u + v < 1.0 - eps) & (t > eps)
            graze = ok & (
                (np.abs(u) <= eps) | (np.abs(v) <= eps) | (np.abs(1.0 - u - v) <= eps)
            ) & (u > -eps) & (v > -eps) & (u + v < 1.0 + eps) & (t > -eps)
            parity = int(hit.sum()) % 2
            if not graze.any():
                return parity
        return parity


def _get_tester(mesh: CanonicalMesh) -> _RayParityTester:
    tester = getattr(mesh, "_ray_tester", None)
    if tester is None:
        tester = _RayParityTester(mesh)
        object.__setattr__(mesh, "_ray_tester", tester)
    return tester


def point_in_mesh(mesh: CanonicalMesh, points: np.ndarray) -> np.ndarray:
    """1 where the point is inside the watertight mesh, else 0.

    The parity index is built once per mesh and cached on the instance, so
    repeated batches against the same mesh are cheap.
    """
    return _get_tester(mesh).query(points)


def voxelize_coarse(
    mesh: CanonicalMesh, shape: tuple[int, int, int] = COARSE_SHAPE
) -> CoarseOccupancyVolume:
    """Label each cell of a (d, h, w) grid by the inside test at its center."""
    centers = grid_cell_centers(shape)
    labels = point_in_mesh(mesh, centers).astype(np.float64)
    return CoarseOccupancyVolume(grid=labels.reshape(shape), value_kind="labels")


def sample_surface(
    mesh: CanonicalMesh, n: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Area-uniform surface samples: (points (n, 3), face normals (n, 3)).

    Faces are chosen proportional to area, positions uniformly within each
    face via folded barycentric coordinates. Deterministic given ``seed``.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if mesh.is_empty() or total <= 0.0:
        raise DegenerateMeshError("cannot sample a zero-area mesh")
    rng = np.random.default_rng(seed)
    face_ids = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    fold = u + v > 1.0
    u[fold] = 1.0 - u[fold]
    v[fold] = 1.0 - v[fold]
    v0, v1, v2 = mesh.face_corners()
    a, b, c = v0[face_ids], v1[face_ids], v2[face_ids]
    points = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    normals = mesh.face_normals()[face_ids]
    return points, normals


# --------------------------------------------------------------------------
# Primitive meshes (test oracles and procedural building blocks)


def icosphere(radius: float = 0.5, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> CanonicalMesh:
    """Subdivided icosahedron projected onto a sphere; watertight by construction."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = np.asarray(verts[i]) + np.asarray(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    varr = np.asarray(verts, dtype=np.float64)
    normals = varr.copy()
    varr = varr * radius + np.asarray(center, dtype=np.float64)
    return CanonicalMesh(
        vertices=varr, faces=np.asarray(faces, dtype=np.int64), vertex_normals=normals
    )


def box_mesh(half_extents=(0.5, 0.5, 0.5), center=(0.0, 0.0, 0.0)) -> CanonicalMesh:
    """Axis-aligned box of 12 triangles with outward winding."""
    hx, hy, hz = half_extents
    cx, cy, cz = center
    corners = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ]
    ) + np.asarray([cx, cy, cz])
    faces = np.array(
        [
            (0, 2, 1), (0, 3, 2),  # z = -hz
            (4, 5, 6), (4, 6, 7),  # z = +hz
            (0, 1, 5), (0, 5, 4),  # y = -hy
            (3, 6, 2), (3, 7, 6),  # y = +hy
            (0, 7, 3), (0, 4, 7),  # x = -hx
            (1, 2, 6), (1, 6, 5),  # x = +hx
        ],
        dtype=np.int64,
    )
    return CanonicalMesh(vertices=corners, faces=faces)


def quad_mesh(half_size: float = 0.5, z: float = 0.0, center=(0.0, 0.0)) -> CanonicalMesh:
    """Camera-facing quad (two triangles, +z normal). Not watertight."""
    cx, cy = center
    verts = np.array(
        [
            [cx - half_size, cy - half_size, z],
            [cx + half_size, cy - half_size, z],
            [cx + half_size, cy + half_size, z],
            [cx - half_size, cy + half_size, z],
        ]
    )
    faces = np.array([(0, 1, 2), (0, 2, 3)], dtype=np.int64)
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    return CanonicalMesh(vertices=verts, faces=faces, vertex_normals=normals)
