"""Software rasterization under the weak-perspective camera.

One z-buffered rasterizer backs both the normal-map metric and the dataset
renderer, so the two always agree on foreground coverage. The camera looks
along -z from +z, hence larger depth wins the z-test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CanonicalMesh, WeakPerspectiveCamera, project

__all__ = ["RasterResult", "rasterize", "mesh_normal_map"]


@dataclass(frozen=True)
class RasterResult:
    """Per-pixel coverage: face id (-1 = background), barycentric weights, depth."""

    face_id: np.ndarray  # (H, W) int64
    bary: np.ndarray  # (H, W, 3) float64
    depth: np.ndarray  # (H, W) float64

    @property
    def mask(self) -> np.ndarray:
        return self.face_id >= 0


def rasterize(mesh: CanonicalMesh, camera: WeakPerspectiveCamera) -> RasterResult:
    """Z-buffer the mesh at pixel centers; no backface culling."""
    height, width = camera.height, camera.width
    face_id = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    depth = np.full((height, width), -np.inf, dtype=np.float64)
    if mesh.is_empty():
        return RasterResult(face_id=face_id, bary=bary, depth=depth)

    pixels, z = project(camera, mesh.vertices)
    tri_px = pixels[mesh.faces]  # (M, 3, 2)
    tri_z = z[mesh.faces]  # (M, 3)

    for f in range(len(mesh.faces)):
        p0, p1, p2 = tri_px[f]
        lo = np.minimum(np.minimum(p0, p1), p2)
        hi = np.maximum(np.maximum(p0, p1), p2)
        c0 = max(int(np.floor(lo[0] - 0.5)), 0)
        c1 = min(int(np.ceil(hi[0] - 0.5)), width - 1)
        r0 = max(int(np.floor(lo[1] - 0.5)), 0)
        r1 = min(int(np.ceil(hi[1] - 0.5)), height - 1)
        if c1 < c0 or r1 < r0:
            continue
        area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
        if abs(area) < 1e-12:
            continue
        cols = np.arange(c0, c1 + 1) + 0.5
        rows = np.arange(r0, r1 + 1) + 0.5
        px, py = np.meshgrid(cols, rows)
        w0 = ((p1[0] - px) * (p2[1] - py) - (p1[1] - py) * (p2[0] - px)) / area
        w1 = ((p2[0] - px) * (p0[1] - py) - (p2[1] - py) * (p0[0] - px)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        zpix = w0 * tri_z[f, 0] + w1 * tri_z[f, 1] + w2 * tri_z[f, 2]
        window = depth[r0 : r1 + 1, c0 : c1 + 1]
        win = inside & (zpix > window)
        if not win.any():
            continue
        window[win] = zpix[win]
        face_id[r0 : r1 + 1, c0 : c1 + 1][win] = f
        sub = bary[r0 : r1 + 1, c0 : c1 + 1]
        sub[win, 0] = w0[win]
        sub[win, 1] = w1[win]
        sub[win, 2] = w2[win]
    return RasterResult(face_id=face_id, bary=bary, depth=depth)


def mesh_normal_map(
    mesh: CanonicalMesh, camera: WeakPerspectiveCamera
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit normals of the frontmost surface plus the coverage mask.

    Normals are barycentric interpolations of the vertex normals of the
    winning face, renormalized; background pixels are zero.
    """
    result = rasterize(mesh, camera)
    normal_map = np.zeros((camera.height, camera.width, 3), dtype=np.float64)
    mask = result.mask
    if mask.any():
        rows, cols = np.nonzero(mask)
        faces = mesh.faces[result.face_id[rows, cols]]  # (K, 3)
        corner_normals = mesh.vertex_normals[faces]  # (K, 3, 3)
        weights = result.bary[rows, cols][:, :, None]  # (K, 3, 1)
        n = (weights * corner_normals).sum(axis=1)
        lengths = np.linalg.norm(n, axis=1, keepdims=True)
        lengths[lengths == 0.0] = 1.0
        normal_map[rows, cols] = n / lengths
    return normal_map, mask
