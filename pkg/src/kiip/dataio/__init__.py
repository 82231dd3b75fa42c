"""File formats: OFF and ASCII PLY meshes/clouds, KVOX grids, JSON dataset manifests,
and direct mesh voxelization."""
from .kvox import format_kvox, parse_kvox, read_kvox, write_kvox
from .manifest import DatasetManifest, ManifestEntry, load_grids, read_manifest, write_manifest
from .off import format_off, normalize_to_box, parse_off, read_off
from .ply import (
    format_ply_cloud,
    format_ply_mesh,
    format_ply_points,
    parse_ply,
    parse_ply_cloud,
    parse_ply_mesh,
    parse_ply_points,
    read_ply_cloud,
    read_ply_mesh,
    read_ply_points,
    write_ply_cloud,
    write_ply_mesh,
    write_ply_points,
)
from .voxelize import SOLID, SURFACE, MeshVoxelization, voxelize_mesh, voxelize_parts


def read_mesh(path):
    """OFF or ASCII PLY, chosen by extension."""
    suffix = str(path).lower().rsplit(".", 1)[-1]
    if suffix == "off":
        return read_off(path)
    if suffix == "ply":
        return read_ply_mesh(path)
    raise ValueError(f"unsupported mesh extension for {path} (use .off or .ply)")
