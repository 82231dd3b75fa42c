"""Observation schedule and the signal chain that turns bursts of organized
clouds of a grasped object into a 30^3 count grid in the gripper frame.

Per wrist pose: render a burst, take the per-pixel temporal median, move the
points into the gripper frame, crop to a cube in front of the gripper and bin
them. After the last pose the counts are thresholded.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, OutOfBounds, WrongFrame
from .geometry import (
    WRIST_FLEX,
    WRIST_ROLL,
    KinematicChain,
    RigidTransform,
    apply,
    camera_to_gripper,
    fixture_arm_chain,
    fixture_head_chain,
    forward_kinematics,
    invert,
)
from .sensor import (
    CAMERA_FRAME,
    GRIPPER_FRAME,
    NO_HIT,
    SOURCE_OBJECT,
    NoiseModel,
    OrganizedPointCloud,
    PinholeCamera,
    Scene,
    capture_burst,
)

RESOLUTION = 30
DEFAULT_MIN_COUNT = 4
DEFAULT_BURST = 10


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class WristPose:
    roll: float
    pitch: float
    flip: bool = False

    @property
    def roll_joint(self) -> float:
        return self.roll + (math.pi if self.flip else 0.0)


@dataclass(frozen=True)
class WristSchedule:
    poses: tuple = ()

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self):
        return iter(self.poses)

    def __getitem__(self, i):
        return self.poses[i]

    def truncated(self, n: int) -> "WristSchedule":
        return WristSchedule(self.poses[:n])


def default_schedule() -> WristSchedule:
    """13 roll poses over +-180 deg, then 3 pitch poses, then 4 more after a half-turn of roll."""
    rolls = [WristPose(math.radians(a), 0.0) for a in np.linspace(-180.0, 180.0, 13)]
    pitches = [WristPose(0.0, math.radians(a)) for a in (20.0, 40.0, 60.0)]
    flipped = [WristPose(0.0, math.radians(a), True) for a in (0.0, 20.0, 40.0, 60.0)]
    return WristSchedule(tuple(rolls + pitches + flipped))


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class CropBox:
    """Axis-aligned box in the gripper frame. Membership is half-open: min <= p < max."""

    min_corner: np.ndarray = field(default_factory=lambda: np.array([0.0, -0.05, -0.05]))
    max_corner: np.ndarray = field(default_factory=lambda: np.array([0.10, 0.05, 0.05]))

    def __post_init__(self):
        lo = np.array(self.min_corner, dtype=float).reshape(3)
        hi = np.array(self.max_corner, dtype=float).reshape(3)
        if not np.all(hi > lo):
            raise ValueError("crop box needs max > min on every axis")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @classmethod
    def cube(cls, edge: float = 0.10) -> "CropBox":
        h = edge / 2.0
        return cls(np.array([0.0, -h, -h]), np.array([edge, h, h]))

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def center(self) -> np.ndarray:
        return (self.min_corner + self.max_corner) / 2.0

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.min_corner) & (p < self.max_corner), axis=-1)

    def voxel_size(self, resolution: int = RESOLUTION) -> np.ndarray:
        return self.size / resolution

    def voxel_centers(self, resolution: int = RESOLUTION) -> np.ndarray:
        """(res, res, res, 3) centers indexed [ix, iy, iz]."""
        axes = [self.min_corner[k] + (np.arange(resolution) + 0.5) * self.size[k] / resolution for k in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def voxel_index(self, points, resolution: int = RESOLUTION) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        idx = np.floor((p - self.min_corner) * resolution / self.size).astype(np.int64)
        # a point just below max can round up to `resolution`; it still belongs to the last bin
        inside = self.contains(p)
        idx[inside] = np.minimum(idx[inside], resolution - 1)
        return idx


@dataclass(frozen=True, eq=False)
class VoxelCountGrid:
    counts: np.ndarray
    crop: CropBox = field(default_factory=CropBox)

    @classmethod
    def empty(cls, crop: CropBox | None = None, resolution: int = RESOLUTION) -> "VoxelCountGrid":
        return cls(np.zeros((resolution,) * 3, dtype=np.int64), crop or CropBox())

    @property
    def resolution(self) -> int:
        return self.counts.shape[0]

    def __add__(self, other: "VoxelCountGrid") -> "VoxelCountGrid":
        return VoxelCountGrid(self.counts + other.counts, self.crop)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    occupied: np.ndarray
    source_threshold: int = DEFAULT_MIN_COUNT
    crop: CropBox = field(default_factory=CropBox)

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())

    def as_input(self) -> np.ndarray:
        return self.occupied.astype(np.float64)


def accumulate(points, grid: VoxelCountGrid) -> VoxelCountGrid:
    """Bin points into the grid; returns a new grid."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        return grid
    res = grid.resolution
    idx = grid.crop.voxel_index(p, res)
    bad = np.any((idx < 0) | (idx >= res), axis=1)
    if bad.any():
        raise OutOfBounds(f"{int(bad.sum())} point(s) outside the grid, first at {p[bad][0].tolist()}")
    flat = np.ravel_multi_index(idx.T, (res, res, res))
    add = np.bincount(flat, minlength=res**3).reshape(res, res, res)
    return VoxelCountGrid(grid.counts + add, grid.crop)


def threshold(grid: VoxelCountGrid, min_count: int = DEFAULT_MIN_COUNT) -> OccupancyGrid:
    return OccupancyGrid(grid.counts >= min_count, int(min_count), grid.crop)


# ---------------------------------------------------------------------------
# per-view signal chain


def temporal_median(frames: Sequence[OrganizedPointCloud]) -> OrganizedPointCloud:
    """Per-pixel lower median of depth over the valid frames.

    A pixel is valid when at least ceil(n/2) frames saw it. The returned point is the
    observed point whose depth sits at index (k-1)//2 of the k sorted valid depths.
    """
    if not frames:
        raise DimensionMismatch("temporal_median needs at least one frame")
    first = frames[0]
    for f in frames[1:]:
        if f.valid.shape != first.valid.shape:
            raise DimensionMismatch(f"frame is {f.valid.shape}, expected {first.valid.shape}")
        if f.frame_name != first.frame_name:
            raise DimensionMismatch(f"frame {f.frame_name!r} mixed with {first.frame_name!r}")
    n = len(frames)
    valid = np.stack([f.valid for f in frames])
    depth = np.where(valid, np.stack([f.depth for f in frames]), np.inf)
    k = valid.sum(axis=0)
    order = np.argsort(depth, axis=0, kind="stable")
    pick = np.take_along_axis(order, np.maximum(k - 1, 0)[None] // 2, axis=0)[0]
    out_valid = k >= (n + 1) // 2
    out_valid &= k > 0

    points = np.stack([f.points for f in frames])
    rows, cols = np.indices(k.shape)
    chosen = points[pick, rows, cols]
    chosen[~out_valid] = np.nan
    source = None
    if first.source is not None:
        source = np.stack([f.source for f in frames])[pick, rows, cols]
        source[~out_valid] = NO_HIT
    return OrganizedPointCloud(chosen, out_valid, first.frame_name, source)


def to_gripper_frame(
    cloud: OrganizedPointCloud, t_cam_to_grip: RigidTransform, expected_frame: str = CAMERA_FRAME
) -> OrganizedPointCloud:
    if cloud.frame_name != expected_frame:
        raise WrongFrame(f"cloud is in {cloud.frame_name!r}, expected {expected_frame!r}")
    points = apply(t_cam_to_grip, cloud.points)
    points[~cloud.valid] = np.nan
    return OrganizedPointCloud(points, cloud.valid, GRIPPER_FRAME, cloud.source)


def spatial_crop(cloud: OrganizedPointCloud, box: CropBox, with_source: bool = False):
    """Valid points inside the half-open box, as an (N, 3) array (plus source tags)."""
    if cloud.frame_name != GRIPPER_FRAME:
        raise WrongFrame(f"crop expects a {GRIPPER_FRAME!r} cloud, got {cloud.frame_name!r}")
    keep = cloud.valid.copy()
    keep[keep] = box.contains(cloud.points[keep])
    pts = cloud.points[keep]
    if not with_source:
        return pts
    src = cloud.source[keep] if cloud.source is not None else np.full(len(pts), NO_HIT)
    return pts, src


# ---------------------------------------------------------------------------
# the robot and the full scan


@dataclass(frozen=True, eq=False)
class Robot:
    """Arm chain ending at the gripper, head chain ending at the camera optical frame."""

    arm: KinematicChain = field(default_factory=fixture_arm_chain)
    head: KinematicChain = field(default_factory=fixture_head_chain)
    arm_rest: tuple = ()
    head_rest: tuple = ()
    roll_joint: str = WRIST_ROLL
    flex_joint: str = WRIST_FLEX

    def __post_init__(self):
        if not self.arm_rest:
            object.__setattr__(self, "arm_rest", (0.0,) * len(self.arm))
        if not self.head_rest:
            object.__setattr__(self, "head_rest", (0.0,) * len(self.head))

    def arm_state(self, pose: WristPose) -> np.ndarray:
        q = np.array(self.arm_rest, dtype=float)
        q[self.arm.index(self.roll_joint)] += pose.roll_joint
        q[self.arm.index(self.flex_joint)] += pose.pitch
        return q

    def gripper_pose(self, pose: WristPose) -> RigidTransform:
        return forward_kinematics(self.arm, self.arm_state(pose))

    def camera_pose(self, head_state) -> RigidTransform:
        return forward_kinematics(self.head, head_state)


def aim_head(robot: Robot, target_base, head_state=None, iterations: int = 20) -> np.ndarray:
    """Pan/tilt values that put a base-frame point on the optical axis (Newton, numeric Jacobian)."""
    q = np.array(head_state if head_state is not None else robot.head_rest, dtype=float)
    target = np.asarray(target_base, dtype=float)

    def err(q):
        p = apply(invert(robot.camera_pose(q)), target)
        return p[:2] / p[2]

    for _ in range(iterations):
        e = err(q)
        if np.max(np.abs(e)) < 1e-12:
            break
        jac = np.empty((2, len(q)))
        for k in range(len(q)):
            dq = np.zeros(len(q))
            dq[k] = 1e-7
            jac[:, k] = (err(q + dq) - e) / 1e-7
        q = q - np.linalg.lstsq(jac, e, rcond=None)[0]
    return q


FIXED_CAMERA = "fixed"
TRACKING_CAMERA = "tracking"


@dataclass(frozen=True, eq=False)
class KiipConfig:
    crop: CropBox = field(default_factory=CropBox)
    burst: int = DEFAULT_BURST
    min_count: int = DEFAULT_MIN_COUNT
    # fixed: aim the head once at the crop center with the wrist at rest; tracking: re-aim every pose
    camera_mode: str = FIXED_CAMERA

    def __post_init__(self):
        if self.camera_mode not in (FIXED_CAMERA, TRACKING_CAMERA):
            raise ValueError(f"camera_mode must be {FIXED_CAMERA!r} or {TRACKING_CAMERA!r}")
        if self.burst < 1:
            raise ValueError("burst must be >= 1")


@dataclass(frozen=True, eq=False)
class KiipResult:
    counts: VoxelCountGrid
    occupancy: OccupancyGrid
    # counts contributed by anything other than the grasped object (background, fingers)
    foreign_counts: np.ndarray
    manifest: dict


def view_seed(root_seed: int, view: int) -> int:
    return int(np.random.SeedSequence([int(root_seed), int(view)]).generate_state(1)[0])


def run_kiip(
    scene: Scene,
    robot: Robot,
    camera: PinholeCamera,
    noise: NoiseModel,
    schedule: WristSchedule,
    config: KiipConfig | None = None,
) -> KiipResult:
    """Scan a grasped object over a wrist schedule and fuse the views in the gripper frame."""
    config = config or KiipConfig()
    grid = VoxelCountGrid.empty(config.crop)
    foreign = np.zeros_like(grid.counts)
    # aims depend only on the pose itself, so permuting the schedule permutes the views
    rest_grip = robot.gripper_pose(WristPose(0.0, 0.0))
    fixed_q = aim_head(robot, apply(rest_grip, config.crop.center))
    views = []
    for i, pose in enumerate(schedule):
        fk_grip = robot.gripper_pose(pose)
        head_q = fixed_q
        if config.camera_mode == TRACKING_CAMERA:
            head_q = aim_head(robot, apply(fk_grip, config.crop.center))
        fk_cam = robot.camera_pose(head_q)
        seed = view_seed(noise.rng_seed, i)
        frames = capture_burst(
            scene.at(fk_grip, fk_cam),
            camera,
            NoiseModel(noise.gaussian_sigma, noise.dropout_prob, noise.outlier_prob, noise.outlier_range, seed),
            config.burst,
        )
        cloud = to_gripper_frame(temporal_median(frames), camera_to_gripper(fk_cam, fk_grip))
        pts, src = spatial_crop(cloud, config.crop, with_source=True)
        grid = accumulate(pts, grid)
        other = src != SOURCE_OBJECT
        if other.any():
            foreign = accumulate(pts[other], VoxelCountGrid(foreign, config.crop)).counts
        tags, tag_counts = np.unique(src, return_counts=True)
        views.append(
            {
                "index": i,
                "roll_deg": math.degrees(pose.roll),
                "pitch_deg": math.degrees(pose.pitch),
                "flip": pose.flip,
                "seed": seed,
                "head_state": [float(v) for v in head_q],
                "valid_pixels": int(cloud.valid.sum()),
                "retained_points": int(len(pts)),
                "retained_by_source": {str(int(t)): int(c) for t, c in zip(tags, tag_counts)},
            }
        )
    occupancy = threshold(grid, config.min_count)
    manifest = {
        "schedule": [{"roll_deg": math.degrees(p.roll), "pitch_deg": math.degrees(p.pitch), "flip": p.flip} for p in schedule],
        "noise": asdict(noise),
        "seeds": [v["seed"] for v in views],
        "camera": asdict(camera),
        "config": {
            "burst": config.burst,
            "min_count": config.min_count,
            "camera_mode": config.camera_mode,
            "crop_min": config.crop.min_corner.tolist(),
            "crop_max": config.crop.max_corner.tolist(),
        },
        "views": views,
        "total_points": int(grid.counts.sum()),
        "occupied_voxels": occupancy.n_occupied,
    }
    return KiipResult(grid, occupancy, foreign, manifest)
