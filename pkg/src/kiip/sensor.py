"""Simulated depth camera: pinhole ray casting of triangle-mesh scenes into
organized point clouds, plus an axial noise model."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _raycast
from .geometry import RigidTransform, apply, camera_to_gripper

# provenance tags carried per pixel
NO_HIT = -1
SOURCE_OBJECT = 0
SOURCE_FINGERS = 1
SOURCE_BACKGROUND = 2  # background mesh i is tagged SOURCE_BACKGROUND + i

CAMERA_FRAME = "camera"
GRIPPER_FRAME = "gripper"


@dataclass(frozen=True)
class PinholeCamera:
    width: int = 160
    height: int = 120
    fx: float = 240.0
    fy: float = 240.0
    cx: float = 79.5
    cy: float = 59.5
    z_min: float = 0.3
    z_max: float = 3.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("camera must have at least one pixel")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.z_min < self.z_max):
            raise ValueError("need 0 < z_min < z_max")

    def ray_directions(self) -> np.ndarray:
        """(H, W, 3) unnormalized rays with unit z, so hit parameter == depth."""
        u, v = np.meshgrid(np.arange(self.width, dtype=float), np.arange(self.height, dtype=float))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.stack([self.fx * p[..., 0] / p[..., 2] + self.cx, self.fy * p[..., 1] / p[..., 2] + self.cy], axis=-1)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise IndexError(f"face index out of range for {len(v)} vertices")
        if len(f):
            a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
            area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
            f = f[area2 > 1e-20]
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def merge(cls, meshes) -> "TriangleMesh":
        verts, faces, base = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            faces.append(m.faces + base)
            base += len(m.vertices)
        if not verts:
            return cls.empty()
        return cls(np.concatenate(verts), np.concatenate(faces))

    def __len__(self) -> int:
        return len(self.faces)

    def triangles(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        return (
            np.ascontiguousarray(v[self.faces[:, 0]]),
            np.ascontiguousarray(v[self.faces[:, 1]]),
            np.ascontiguousarray(v[self.faces[:, 2]]),
        )

    def transformed(self, t: RigidTransform) -> "TriangleMesh":
        return TriangleMesh(apply(t, self.vertices), self.faces)

    def scaled(self, s: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * s, self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def _soup(self):
        return self.triangles()

    @cached_property
    def bvh(self) -> _raycast.BVH:
        return _raycast.build_bvh(*self._soup)

    def raycast(self, origin, dirs) -> tuple[np.ndarray, np.ndarray]:
        """Nearest hit parameter and face index per ray (inf / -1 on miss)."""
        dirs = np.ascontiguousarray(np.asarray(dirs, dtype=float).reshape(-1, 3))
        t = np.full(len(dirs), np.inf)
        ids = np.full(len(dirs), -1, dtype=np.int64)
        if len(self.faces):
            _raycast.trace(np.asarray(origin, dtype=float), dirs, *self._soup, self.bvh, t, ids)
        return t, ids


@dataclass(frozen=True, eq=False)
class Scene:
    """Grasped object (and optional finger boxes) live in the gripper frame;
    background meshes live in the base frame."""

    grasped_object: TriangleMesh = field(default_factory=TriangleMesh.empty)
    background: tuple = ()
    gripper_pose: RigidTransform = field(default_factory=RigidTransform)
    camera_pose: RigidTransform = field(default_factory=RigidTransform)
    fingers: TriangleMesh | None = None

    def at(self, gripper_pose: RigidTransform, camera_pose: RigidTransform) -> "Scene":
        return replace(self, gripper_pose=gripper_pose, camera_pose=camera_pose)

    def posed_meshes(self):
        """(source tag, mesh, camera->mesh-local transform) for every mesh."""
        cam_to_grip = camera_to_gripper(self.camera_pose, self.gripper_pose)
        yield SOURCE_OBJECT, self.grasped_object, cam_to_grip
        if self.fingers is not None:
            yield SOURCE_FINGERS, self.fingers, cam_to_grip
        for i, mesh in enumerate(self.background):
            yield SOURCE_BACKGROUND + i, mesh, self.camera_pose


@dataclass(frozen=True, eq=False)
class OrganizedPointCloud:
    """Row-major (height, width) lattice of points. Invalid pixels hold NaN."""

    points: np.ndarray
    valid: np.ndarray
    frame_name: str = CAMERA_FRAME
    source: np.ndarray | None = None

    @property
    def height(self) -> int:
        return self.valid.shape[0]

    @property
    def width(self) -> int:
        return self.valid.shape[1]

    @property
    def depth(self) -> np.ndarray:
        return self.points[..., 2]

    def valid_points(self) -> np.ndarray:
        return self.points[self.valid]

    def same_as(self, other: "OrganizedPointCloud") -> bool:
        return (
            self.frame_name == other.frame_name
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.points[self.valid], other.points[other.valid])
        )


def render_depth(scene: Scene, camera: PinholeCamera) -> OrganizedPointCloud:
    """Nearest-hit ray cast per pixel. Hits outside [z_min, z_max] leave the pixel invalid;
    a too-close surface still occludes what is behind it."""
    dirs = camera.ray_directions().reshape(-1, 3)
    depth = np.full(len(dirs), np.inf)
    source = np.full(len(dirs), NO_HIT, dtype=np.int64)
    for tag, mesh, cam_to_local in scene.posed_meshes():
        if len(mesh) == 0:
            continue
        t, _ = mesh.raycast(cam_to_local.translation, dirs @ cam_to_local.rotation.T)
        closer = t < depth
        depth[closer] = t[closer]
        source[closer] = tag
    valid = np.isfinite(depth) & (depth >= camera.z_min) & (depth <= camera.z_max)
    points = np.where(valid[:, None], dirs * np.where(valid, depth, 0.0)[:, None], np.nan)
    source[~valid] = NO_HIT
    shape = (camera.height, camera.width)
    return OrganizedPointCloud(points.reshape(*shape, 3), valid.reshape(shape), CAMERA_FRAME, source.reshape(shape))


@dataclass(frozen=True)
class NoiseModel:
    gaussian_sigma: float = 0.0
    dropout_prob: float = 0.0
    outlier_prob: float = 0.0
    outlier_range: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        for name in ("dropout_prob", "outlier_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.outlier_range < 0:
            raise ValueError("outlier_range must be >= 0")

    @property
    def is_zero(self) -> bool:
        return self.gaussian_sigma == 0 and self.dropout_prob == 0 and self.outlier_prob == 0


def _generator(seed: int, stream: int) -> np.random.Generator:
    # Philox is counter-based: each frame gets its own key, draws are per-pixel in a fixed order
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def add_noise(cloud: OrganizedPointCloud, model: NoiseModel, stream: int = 0) -> OrganizedPointCloud:
    """Axial (along-ray) depth noise, dropouts and outliers. Reproducible per (seed, stream)."""
    if model.is_zero:
        return cloud
    rng = _generator(model.rng_seed, stream)
    shape = cloud.valid.shape
    u_drop = rng.random(shape)
    u_out = rng.random(shape)
    offset = rng.uniform(-model.outlier_range, model.outlier_range, shape)
    gauss = rng.normal(0.0, 1.0, shape) * model.gaussian_sigma

    depth = cloud.depth
    dropped = u_drop < model.dropout_prob
    outlier = ~dropped & (u_out < model.outlier_prob)
    delta = np.where(outlier, offset, gauss)
    with np.errstate(invalid="ignore"):
        new_depth = depth + delta
        valid = cloud.valid & ~dropped & (new_depth > 0)
        scale = np.where(valid, new_depth / depth, np.nan)
    points = cloud.points * scale[..., None]
    source = None
    if cloud.source is not None:
        source = np.where(valid, cloud.source, NO_HIT)
    return OrganizedPointCloud(points, valid, cloud.frame_name, source)


def capture_burst(scene: Scene, camera: PinholeCamera, model: NoiseModel, n: int) -> list[OrganizedPointCloud]:
    """n noisy frames of a static scene; geometry is ray cast once."""
    if n < 1:
        raise ValueError("burst needs n >= 1")
    clean = render_depth(scene, camera)
    return [add_noise(clean, model, stream=i) for i in range(n)]
