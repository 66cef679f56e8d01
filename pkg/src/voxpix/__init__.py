"""Single-view mesh reconstruction from fused voxel- and pixel-aligned features."""

from .core import (
    CanonicalMesh,
    ImageSample,
    MeshTransform,
    QuerySample,
    WeakPerspectiveCamera,
    load_obj,
    normalize_mesh,
    project,
    save_obj,
)
from .geometry import (
    CoarseOccupancyVolume,
    DenseFieldGrid,
    point_in_mesh,
    sample_surface,
    voxelize_coarse,
)
from .marching import marching_cubes
from .raster import mesh_normal_map

__version__ = "0.1.0"

__all__ = [
    "CanonicalMesh",
    "ImageSample",
    "MeshTransform",
    "QuerySample",
    "WeakPerspectiveCamera",
    "CoarseOccupancyVolume",
    "DenseFieldGrid",
    "load_obj",
    "save_obj",
    "normalize_mesh",
    "project",
    "point_in_mesh",
    "sample_surface",
    "voxelize_coarse",
    "marching_cubes",
    "mesh_normal_map",
    "__version__",
]
