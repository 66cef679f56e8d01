"""Canonical coordinate frame, camera model, and shared value types.

Coordinate conventions
----------------------
Everything downstream assumes one fixed frame. Canonical space is the box
[-1, 1]^3 with x pointing image-right, y pointing image-up and z pointing
toward the camera. Image rows grow downward, so a weak-perspective camera
maps canonical y to pixel row as ``row = principal_point.y - scale * y``.
Pixel coordinates are continuous: pixel (col c, row r) covers the square
[c, c+1] x [r, r+1] and has its center at (c + 0.5, r + 0.5).

Occupancy labels are 0 (outside) / 1 (inside) with the surface at the 0.5
level set. A signed convention s (positive inside, surface at 0) maps to
ours by s = 2 * o - 1; the mapping is a monotone bijection with 0.5 <-> 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CanonicalMesh",
    "WeakPerspectiveCamera",
    "QuerySample",
    "ImageSample",
    "MeshTransform",
    "NonWatertightMeshError",
    "DegenerateMeshError",
    "find_boundary_edge",
    "is_watertight",
    "normalize_mesh",
    "project",
    "occupancy_to_signed",
    "signed_to_occupancy",
    "load_obj",
    "save_obj",
]

BOX_TOLERANCE = 1e-6


class NonWatertightMeshError(ValueError):
    """Raised when an operation requires a watertight mesh and the input is not."""


class DegenerateMeshError(ValueError):
    """Raised for empty or zero-extent meshes."""


def _edge_counts(faces: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            counts[key] = counts.get(key, 0) + 1
    return counts


def find_boundary_edge(faces: np.ndarray) -> tuple[int, int] | None:
    """Return one edge not shared by exactly two faces, or None if closed."""
    for edge, count in _edge_counts(np.asarray(faces, dtype=np.int64)).items():
        if count != 2:
            return edge
    return None


def is_watertight(faces: np.ndarray) -> bool:
    return find_boundary_edge(faces) is None


def _compute_vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, renormalized."""
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    face_normals = np.cross(v1 - v0, v2 - v0)  # length = 2 * area
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, faces[:, k], face_normals)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    lengths[lengths == 0.0] = 1.0
    return normals / lengths


@dataclass(frozen=True)
class CanonicalMesh:
    """Watertight triangle mesh living inside the canonical box.

    ``vertices`` is (N, 3) float64, ``faces`` (M, 3) int64 and
    ``vertex_normals`` (N, 3) unit float64. Instances are immutable; the
    arrays are set read-only at construction.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (N, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (M, 3), got {faces.shape}")
        normals = self.vertex_normals
        if normals is None:
            normals = _compute_vertex_normals(vertices, faces)
        normals = np.ascontiguousarray(np.asarray(normals, dtype=np.float64))
        if normals.shape != vertices.shape:
            raise ValueError(
                f"vertex_normals shape {normals.shape} != vertices shape {vertices.shape}"
            )
        for arr in (vertices, faces, normals):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "vertex_normals", normals)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    def is_empty(self) -> bool:
        return self.n_faces == 0

    def face_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            self.vertices[self.faces[:, 0]],
            self.vertices[self.faces[:, 1]],
            self.vertices[self.faces[:, 2]],
        )

    def face_normals(self) -> np.ndarray:
        """Unit normals per face; zero for degenerate faces."""
        v0, v1, v2 = self.face_corners()
        n = np.cross(v1 - v0, v2 - v0)
        lengths = np.linalg.norm(n, axis=1, keepdims=True)
        lengths[lengths == 0.0] = 1.0
        return n / lengths

    def face_areas(self) -> np.ndarray:
        v0, v1, v2 = self.face_corners()
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)

    def validate(self, check_watertight: bool = True, check_box: bool = True) -> None:
        """Check the type invariants, raising on violation."""
        if check_box and self.n_vertices:
            worst = float(np.abs(self.vertices).max())
            if worst > 1.0 + BOX_TOLERANCE:
                raise ValueError(
                    f"vertices leave the canonical box: max |coord| = {worst:.6g}"
                )
        if self.n_vertices:
            lengths = np.linalg.norm(self.vertex_normals, axis=1)
            err = float(np.abs(lengths - 1.0).max())
            if err > 1e-6:
                raise ValueError(f"vertex normals are not unit length (max error {err:.3g})")
        if check_watertight and self.n_faces:
            edge = find_boundary_edge(self.faces)
            if edge is not None:
                raise NonWatertightMeshError(
                    f"mesh is not watertight: edge {edge} is not shared by exactly two faces"
                )


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    """Scaled orthographic camera: depth is ignored by the projection.

    ``scale`` is in image units per canonical unit, ``principal_point`` is
    (px, py) in pixels and ``image_size`` is (width, height).
    """

    scale: float
    principal_point: tuple[float, float]
    image_size: tuple[int, int]

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"camera scale must be positive, got {self.scale}")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise ValueError(f"image_size components must be >= 1, got {self.image_size}")

    @property
    def width(self) -> int:
        return int(self.image_size[0])

    @property
    def height(self) -> int:
        return int(self.image_size[1])


@dataclass(frozen=True)
class QuerySample:
    """A query point in canonical coordinates with its {0, 1} occupancy label."""

    position: np.ndarray
    occupancy: int

    def __post_init__(self):
        position = np.asarray(self.position, dtype=np.float64)
        if position.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got shape {position.shape}")
        if np.abs(position).max() > 1.0 + BOX_TOLERANCE:
            raise ValueError(f"position {position} outside the canonical box")
        if self.occupancy not in (0, 1):
            raise ValueError(f"occupancy must be 0 or 1, got {self.occupancy}")
        position.setflags(write=False)
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "occupancy", int(self.occupancy))


@dataclass(frozen=True)
class ImageSample:
    """A rendered color image with its foreground coverage mask."""

    pixels: np.ndarray  # (H, W, 3) float in [0, 1]
    foreground_mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        pixels = np.clip(np.asarray(self.pixels, dtype=np.float64), 0.0, 1.0)
        mask = np.asarray(self.foreground_mask, dtype=bool)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {pixels.shape}")
        if mask.shape != pixels.shape[:2]:
            raise ValueError(
                f"mask shape {mask.shape} does not match image shape {pixels.shape[:2]}"
            )
        pixels.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "foreground_mask", mask)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class MeshTransform:
    """Uniform scale + translation mapping raw coordinates into canonical space.

    canonical = scale * raw + translation. Serialized as one text line of
    four numbers: scale tx ty tz.
    """

    scale: float
    translation: tuple[float, float, float]

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=np.float64) + np.asarray(self.translation)

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.translation)) / self.scale

    def to_line(self) -> str:
        tx, ty, tz = self.translation
        return f"{self.scale!r} {tx!r} {ty!r} {tz!r}"

    @classmethod
    def from_line(cls, line: str) -> "MeshTransform":
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"transform record needs 4 numbers, got {len(parts)}")
        scale, tx, ty, tz = (float(p) for p in parts)
        return cls(scale=scale, translation=(tx, ty, tz))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_line() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MeshTransform":
        return cls.from_line(Path(path).read_text().strip())


def normalize_mesh(
    vertices: np.ndarray,
    faces: np.ndarray,
    padding: float = 0.1,
) -> tuple[CanonicalMesh, MeshTransform]:
    """Fit a raw watertight mesh into the canonical box shrunk by ``padding``.

    A single uniform scale preserves aspect ratio; the bounding-box center
    maps to the origin and the largest half-extent maps to 1 - padding.
    Returns the canonical mesh together with the transform that produced it.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if vertices.size == 0 or faces.size == 0:
        raise DegenerateMeshError("cannot normalize an empty mesh")
    if not 0.0 <= padding < 1.0:
        raise ValueError(f"padding must be in [0, 1), got {padding}")
    edge = find_boundary_edge(faces)
    if edge is not None:
        raise NonWatertightMeshError(
            f"mesh is not watertight: edge {edge} is not shared by exactly two faces"
        )
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    half_extent = float((hi - lo).max()) / 2.0
    if half_extent <= 0.0:
        raise DegenerateMeshError("mesh has zero extent")
    center = (lo + hi) / 2.0
    scale = (1.0 - padding) / half_extent
    translation = tuple(-scale * center)
    transform = MeshTransform(scale=scale, translation=translation)
    mesh = CanonicalMesh(vertices=transform.apply(vertices), faces=faces)
    return mesh, transform


def project(camera: WeakPerspectiveCamera, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project canonical points to pixel coordinates, carrying depth along.

    Accepts a single 3-vector or an (N, 3) batch. Returns (pixel, depth)
    where pixel has the same leading shape with trailing dim 2 and depth is
    the untouched z coordinate. Points may land outside the image.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    px, py = camera.principal_point
    pixel = np.empty((pts.shape[0], 2), dtype=np.float64)
    pixel[:, 0] = px + camera.scale * pts[:, 0]
    pixel[:, 1] = py - camera.scale * pts[:, 1]  # rows grow downward
    depth = pts[:, 2].copy()
    if single:
        return pixel[0], depth[0]
    return pixel, depth


def occupancy_to_signed(occupancy: np.ndarray) -> np.ndarray:
    """Map {0, 1} labels (or [0, 1] probabilities) to the signed convention."""
    return 2.0 * np.asarray(occupancy, dtype=np.float64) - 1.0


def signed_to_occupancy(signed: np.ndarray) -> np.ndarray:
    return (np.asarray(signed, dtype=np.float64) + 1.0) / 2.0


def save_obj(path: str | Path, mesh: CanonicalMesh, write_normals: bool = True) -> None:
    """Write a Wavefront OBJ file (v / vn / f records, 1-indexed)."""
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.8f} {y:.8f} {z:.8f}")
    if write_normals and mesh.n_vertices:
        for x, y, z in mesh.vertex_normals:
            lines.append(f"vn {x:.8f} {y:.8f} {z:.8f}")
        for a, b, c in mesh.faces + 1:
            lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
    else:
        for a, b, c in mesh.faces + 1:
            lines.append(f"f {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path: str | Path) -> CanonicalMesh:
    """Read vertices, faces and optional normals from a Wavefront OBJ file.

    Faces must be triangles; vertex indices may appear as v, v/vt, v//vn or
    v/vt/vn. Normals are recomputed when the file does not carry them.
    """
    vertices: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[int]] = []
    normal_ids: list[list[int]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            vertices.append([float(p) for p in parts[1:4]])
        elif parts[0] == "vn":
            normals.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ValueError(f"only triangle faces are supported: {line!r}")
            vids, nids = [], []
            for token in parts[1:]:
                fields = token.split("/")
                vids.append(int(fields[0]) - 1)
                if len(fields) == 3 and fields[2]:
                    nids.append(int(fields[2]) - 1)
            faces.append(vids)
            if len(nids) == 3:
                normal_ids.append(nids)
    vert_arr = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    face_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    normal_arr = None
    if normals and len(normal_ids) == len(faces):
        # Per-corner normal ids; valid as per-vertex normals only when each
        # vertex always references the same normal, which save_obj guarantees.
        normal_arr = np.zeros((len(vertices), 3), dtype=np.float64)
        src = np.asarray(normals, dtype=np.float64)
        for vids, nids in zip(face_arr, normal_ids):
            normal_arr[vids] = src[nids]
    return CanonicalMesh(vertices=vert_arr, faces=face_arr, vertex_normals=normal_arr)
