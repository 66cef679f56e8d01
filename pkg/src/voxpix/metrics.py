"""Reconstruction quality metrics: symmetric/one-way surface distances and
input-view normal errors.

Point-to-triangle distances are exact: the closest point is either the
in-triangle plane projection or lies on one of the three edges, and we take
the minimum over those candidates. The bounding-volume hierarchy only
prunes triangles whose boxes provably cannot beat the current best, so
accelerated queries equal brute force bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import CanonicalMesh, WeakPerspectiveCamera
from .geometry import sample_surface
from .raster import mesh_normal_map
from .validate import check_points

__all__ = [
    "MetricReport",
    "TriangleBVH",
    "point_to_surface",
    "chamfer",
    "psd",
    "normal_errors",
    "report_to_tsv",
    "load_report_tsv",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("record_id", "cd_x1e4", "psd_x1e4", "normal_cosine", "normal_l2", "mask_iou")


@dataclass(frozen=True)
class MetricReport:
    """One evaluation row; cd/psd carry the x10000 table scaling."""

    cd_x1e4: float
    psd_x1e4: float
    normal_cosine: float
    normal_l2: float
    n_points: int
    resolution: tuple[int, int]
    mask_iou: float = float("nan")
    record_id: str = ""

    def row(self) -> tuple:
        return (
            self.record_id,
            self.cd_x1e4,
            self.psd_x1e4,
            self.normal_cosine,
            self.normal_l2,
            self.mask_iou,
        )


def _point_triangle_distance(points: np.ndarray, a, b, c) -> np.ndarray:
    """Exact distances for paired points and triangle corners (all (K, 3))."""
    n = np.cross(b - a, c - a)
    n_len = np.linalg.norm(n, axis=1)
    safe = np.where(n_len > 0.0, n_len, 1.0)
    n_hat = n / safe[:, None]
    to_p = points - a
    plane_off = np.einsum("ij,ij->i", to_p, n_hat)
    proj = points - plane_off[:, None] * n_hat
    # barycentric test of the projection
    area2 = np.where(n_len > 0.0, n_len, 1.0)
    w0 = np.einsum("ij,ij->i", np.cross(b - proj, c - proj), n_hat) / area2
    w1 = np.einsum("ij,ij->i", np.cross(c - proj, a - proj), n_hat) / area2
    w2 = 1.0 - w0 - w1
    inside = (n_len > 0.0) & (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    best = np.where(inside, np.abs(plane_off), np.inf)

    for p0, p1 in ((a, b), (b, c), (c, a)):
        seg = p1 - p0
        seg_len2 = np.einsum("ij,ij->i", seg, seg)
        t = np.einsum("ij,ij->i", points - p0, seg) / np.where(seg_len2 > 0.0, seg_len2, 1.0)
        t = np.clip(t, 0.0, 1.0)
        closest = p0 + t[:, None] * seg
        best = np.minimum(best, np.linalg.norm(points - closest, axis=1))
    return best


class TriangleBVH:
    """Median-split AABB tree answering exact nearest-surface distances."""

    def __init__(self, mesh: CanonicalMesh, leaf_size: int = 8):
        if mesh.is_empty():
            raise ValueError("cannot build a BVH over an empty mesh")
        a, b, c = mesh.face_corners()
        self.tri_a, self.tri_b, self.tri_c = a, b, c
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        centroids = (a + b + c) / 3.0
        n_faces = len(a)
        self.order = np.arange(n_faces)
        self.leaf_size = leaf_size

        bounds_min: list[np.ndarray] = []
        bounds_max: list[np.ndarray] = []
        left: list[int] = []
        right: list[int] = []
        start: list[int] = []
        count: list[int] = []

        def build(lo_i: int, hi_i: int) -> int:
            node = len(bounds_min)
            idx = self.order[lo_i:hi_i]
            bounds_min.append(lo[idx].min(axis=0))
            bounds_max.append(hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(lo_i)
            count.append(hi_i - lo_i)
            if hi_i - lo_i > leaf_size:
                cent = centroids[idx]
                axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
                local = np.argsort(cent[:, axis], kind="stable")
                self.order[lo_i:hi_i] = idx[local]
                mid = lo_i + (hi_i - lo_i) // 2
                left[node] = build(lo_i, mid)
                right[node] = build(mid, hi_i)
                count[node] = 0  # internal
            return node

        import sys

        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 10000))
        try:
            build(0, n_faces)
        finally:
            sys.setrecursionlimit(limit)
        self.bounds_min = np.asarray(bounds_min)
        self.bounds_max = np.asarray(bounds_max)
        self.left = np.asarray(left)
        self.right = np.asarray(right)
        self.start = np.asarray(start)
        self.count = np.asarray(count)
        # Centroid lookup seeds each query with an exact upper bound so the
        # tree traversal prunes from the first level. Purely an accelerator:
        # the bound comes from a real triangle distance.
        self._centroid_tree = cKDTree(centroids)

    def _box_dist2(self, points: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        delta = np.maximum(self.bounds_min[nodes] - points, 0.0)
        delta = np.maximum(delta, points - self.bounds_max[nodes])
        return np.einsum("ij,ij->i", delta, delta)

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Exact Euclidean distance to the nearest triangle, per point."""
        points = check_points(points)
        n = len(points)
        _, seed_tri = self._centroid_tree.query(points)
        best = _point_triangle_distance(
            points, self.tri_a[seed_tri], self.tri_b[seed_tri], self.tri_c[seed_tri]
        )
        pair_p = np.arange(n)
        pair_n = np.zeros(n, dtype=np.int64)
        while len(pair_p):
            lb2 = self._box_dist2(points[pair_p], pair_n)
            keep = lb2 < best[pair_p] ** 2
            pair_p, pair_n = pair_p[keep], pair_n[keep]
            if not len(pair_p):
                break
            is_leaf = self.count[pair_n] > 0
            if is_leaf.any():
                lp, ln = pair_p[is_leaf], pair_n[is_leaf]
                reps = self.count[ln]
                flat_p = np.repeat(lp, reps)
                tri_idx = np.concatenate(
                    [self.order[s : s + k] for s, k in zip(self.start[ln], reps)]
                )
                d = _point_triangle_distance(
                    points[flat_p], self.tri_a[tri_idx], self.tri_b[tri_idx], self.tri_c[tri_idx]
                )
                np.minimum.at(best, flat_p, d)
            ip, inode = pair_p[~is_leaf], pair_n[~is_leaf]
            pair_p = np.concatenate([ip, ip])
            pair_n = np.concatenate([self.left[inode], self.right[inode]])
        return best


def _get_bvh(mesh: CanonicalMesh) -> TriangleBVH:
    bvh = getattr(mesh, "_bvh", None)
    if bvh is None:
        bvh = TriangleBVH(mesh)
        object.__setattr__(mesh, "_bvh", bvh)
    return bvh


def point_to_surface(points: np.ndarray, mesh: CanonicalMesh) -> np.ndarray:
    """Exact point-to-mesh distances; the BVH is cached on the mesh."""
    if mesh.is_empty():
        raise ValueError("point_to_surface needs a non-empty mesh")
    return _get_bvh(mesh).distance(points)


def chamfer(
    mesh_a: CanonicalMesh, mesh_b: CanonicalMesh, n_samples: int = 10000, seed: int = 0
) -> float:
    """Symmetric mean of unsquared sampled point-to-surface distances.

    Both meshes are sampled with the same seed, which makes the value
    symmetric in its arguments by construction.
    """
    pts_a, _ = sample_surface(mesh_a, n_samples, seed)
    pts_b, _ = sample_surface(mesh_b, n_samples, seed)
    d_ab = point_to_surface(pts_a, mesh_b).mean()
    d_ba = point_to_surface(pts_b, mesh_a).mean()
    return 0.5 * float(d_ab + d_ba)


def psd(
    reconstruction: CanonicalMesh,
    ground_truth: CanonicalMesh,
    n_samples: int = 10000,
    seed: int = 0,
) -> float:
    """One-directional distance: ground-truth samples to the reconstruction."""
    pts, _ = sample_surface(ground_truth, n_samples, seed)
    return float(point_to_surface(pts, reconstruction).mean())


def normal_errors(
    reconstruction: CanonicalMesh,
    ground_truth: CanonicalMesh,
    camera: WeakPerspectiveCamera,
) -> tuple[float, float, float]:
    """(cosine error, l2 error, mask IoU) of input-view normal maps.

    Errors are averaged over the intersection of the two foreground masks;
    silhouette mismatch is already captured by the distance metrics.
    """
    n_recon, m_recon = mesh_normal_map(reconstruction, camera)
    n_gt, m_gt = mesh_normal_map(ground_truth, camera)
    both = m_recon & m_gt
    union = m_recon | m_gt
    if not both.any():
        raise ValueError("foreground masks do not overlap; no normals to compare")
    a = n_recon[both]
    b = n_gt[both]
    cosine = float(np.mean(1.0 - np.einsum("ij,ij->i", a, b)))
    l2 = float(np.mean(np.linalg.norm(a - b, axis=1)))
    iou = float(both.sum() / union.sum())
    return cosine, l2, iou


def evaluate_pair(
    reconstruction: CanonicalMesh,
    ground_truth: CanonicalMesh,
    camera: WeakPerspectiveCamera,
    n_samples: int = 10000,
    seed: int = 0,
    record_id: str = "",
) -> MetricReport:
    """All four metrics for one reconstruction/ground-truth pair."""
    cd = chamfer(reconstruction, ground_truth, n_samples=n_samples, seed=seed)
    one_way = psd(reconstruction, ground_truth, n_samples=n_samples, seed=seed)
    cosine, l2, iou = normal_errors(reconstruction, ground_truth, camera)
    return MetricReport(
        cd_x1e4=cd * 1e4,
        psd_x1e4=one_way * 1e4,
        normal_cosine=cosine,
        normal_l2=l2,
        n_points=n_samples,
        resolution=(camera.width, camera.height),
        mask_iou=iou,
        record_id=record_id,
    )


def sentinel_report(record_id: str, resolution: tuple[int, int]) -> MetricReport:
    """Row recording a per-record failure without aborting the run."""
    nan = float("nan")
    return MetricReport(
        cd_x1e4=nan,
        psd_x1e4=nan,
        normal_cosine=nan,
        normal_l2=nan,
        n_points=0,
        resolution=resolution,
        mask_iou=nan,
        record_id=record_id,
    )


def mean_report(reports: list[MetricReport]) -> MetricReport:
    """Arithmetic mean over non-sentinel rows, labelled MEAN."""
    ok = [r for r in reports if not math.isnan(r.cd_x1e4)]
    if not ok:
        return sentinel_report("MEAN", reports[0].resolution if reports else (0, 0))
    return MetricReport(
        cd_x1e4=float(np.mean([r.cd_x1e4 for r in ok])),
        psd_x1e4=float(np.mean([r.psd_x1e4 for r in ok])),
        normal_cosine=float(np.mean([r.normal_cosine for r in ok])),
        normal_l2=float(np.mean([r.normal_l2 for r in ok])),
        n_points=ok[0].n_points,
        resolution=ok[0].resolution,
        mask_iou=float(np.mean([r.mask_iou for r in ok])),
        record_id="MEAN",
    )


def report_to_tsv(reports: list[MetricReport], path: str | Path) -> None:
    """Per-record rows plus a final MEAN row."""
    lines = ["\t".join(REPORT_COLUMNS)]
    for r in reports + [mean_report(reports)]:
        rid, *vals = r.row()
        lines.append("\t".join([str(rid)] + [f"{v:.6f}" for v in vals]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_report_tsv(path: str | Path) -> dict[str, dict[str, float]]:
    rows: dict[str, dict[str, float]] = {}
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split("\t")
    assert tuple(header) == REPORT_COLUMNS, f"unexpected report header {header}"
    for line in lines[1:]:
        parts = line.split("\t")
        rows[parts[0]] = {k: float(v) for k, v in zip(header[1:], parts[1:])}
    return rows
