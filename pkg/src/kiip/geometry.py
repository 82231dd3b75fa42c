"""Rigid-body transforms and serial-chain forward kinematics.

Rotations are 3x3 matrices, translations are meters, joint angles are radians.
All objects are treated as immutable values.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LengthMismatch

ORTHO_TOL = 1e-9


def _polar(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    q = u @ vt
    if np.linalg.det(q) < 0:
        u[:, -1] *= -1
        q = u @ vt
    return q


def orthonormality_error(r: np.ndarray) -> float:
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) element: x -> rotation @ x + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, xyz) -> "RigidTransform":
        return cls(np.eye(3), xyz)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(axis_angle(axis, angle), translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_valid(self, tol: float = ORTHO_TOL) -> bool:
        return (
            orthonormality_error(self.rotation) <= tol
            and np.linalg.det(self.rotation) > 0
            and bool(np.all(np.isfinite(self.translation)))
        )

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __repr__(self) -> str:
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    x, y, z = a
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    s, c = np.sin(angle), np.cos(angle)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rot_x(angle: float) -> np.ndarray:
    return axis_angle((1, 0, 0), angle)


def rot_y(angle: float) -> np.ndarray:
    return axis_angle((0, 1, 0), angle)


def rot_z(angle: float) -> np.ndarray:
    return axis_angle((0, 0, 1), angle)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform that applies ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    if orthonormality_error(r) > ORTHO_TOL:
        r = _polar(r)
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -(rt @ t.translation))


def apply(t: RigidTransform, p) -> np.ndarray:
    """Apply to a single point (3,) or a batch of points (..., 3)."""
    p = np.asarray(p, dtype=float)
    return p @ t.rotation.T + t.translation


def rotation_vector(r: np.ndarray) -> np.ndarray:
    """Axis * angle (log map) of a rotation matrix, angle in [0, pi]."""
    cos_angle = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    if angle < 1e-12:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; read the axis off the symmetric part
        m = (r + np.eye(3)) / 2.0
        col = int(np.argmax(np.diag(m)))
        axis = m[:, col] / np.sqrt(m[col, col])
        return axis * angle
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return w / (2.0 * np.sin(angle)) * angle


# ---------------------------------------------------------------------------
# kinematic chains

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


@dataclass(frozen=True, eq=False)
class Joint:
    kind: str
    axis: np.ndarray
    fixed_offset: RigidTransform = field(default_factory=RigidTransform)
    name: str = ""

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        axis = np.array(self.axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ValueError("joint axis must be nonzero")
        axis = axis / norm
        axis.flags.writeable = False
        object.__setattr__(self, "axis", axis)

    def motion(self, value: float) -> RigidTransform:
        if self.kind == REVOLUTE:
            return RigidTransform(axis_angle(self.axis, value))
        return RigidTransform(np.eye(3), self.axis * value)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Serial chain base -> joints... -> tip_offset -> tip."""

    joints: tuple = ()
    base_frame_name: str = "base"
    tip_frame_name: str = "tip"
    tip_offset: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        names = [self.base_frame_name, self.tip_frame_name] + [j.name for j in self.joints if j.name]
        if len(set(names)) != len(names):
            raise ValueError(f"frame names must be unique: {names}")

    def __len__(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def index(self, name: str) -> int:
        return self.joint_names.index(name)


def forward_kinematics(chain: KinematicChain, state: Sequence[float]) -> RigidTransform:
    """Base->tip pose for the given joint values."""
    values = np.asarray(state, dtype=float).reshape(-1)
    if len(values) != len(chain.joints):
        raise LengthMismatch(f"chain has {len(chain.joints)} joints, state has {len(values)} values")
    t = RigidTransform()
    for joint, value in zip(chain.joints, values):
        t = compose(t, compose(joint.fixed_offset, joint.motion(float(value))))
    return compose(t, chain.tip_offset)


def camera_to_gripper(fk_cam: RigidTransform, fk_grip: RigidTransform) -> RigidTransform:
    """Maps camera-frame points into the gripper frame, given base-frame poses of both."""
    return compose(invert(fk_grip), fk_cam)


# ---------------------------------------------------------------------------
# chain files


def chain_to_dict(chain: KinematicChain) -> dict:
    return {
        "base": chain.base_frame_name,
        "tip": chain.tip_frame_name,
        "joints": [
            {
                "name": j.name,
                "kind": j.kind,
                "axis": j.axis.tolist(),
                "offset_rotation": j.fixed_offset.rotation.tolist(),
                "offset_translation": j.fixed_offset.translation.tolist(),
            }
            for j in chain.joints
        ],
        "tip_offset_rotation": chain.tip_offset.rotation.tolist(),
        "tip_offset_translation": chain.tip_offset.translation.tolist(),
    }


def chain_from_dict(doc: dict) -> KinematicChain:
    joints = []
    for i, j in enumerate(doc.get("joints", [])):
        rot = np.asarray(j.get("offset_rotation", np.eye(3)), dtype=float)
        offset = RigidTransform(rot, j.get("offset_translation", (0, 0, 0)))
        if not offset.is_valid(1e-6):
            raise ValueError(f"joint {i}: offset_rotation is not a proper rotation")
        joints.append(Joint(j["kind"], j["axis"], RigidTransform(_polar(rot), offset.translation), j.get("name", "")))
    tip = RigidTransform(
        _polar(np.asarray(doc.get("tip_offset_rotation", np.eye(3)), dtype=float)),
        doc.get("tip_offset_translation", (0, 0, 0)),
    )
    return KinematicChain(tuple(joints), doc.get("base", "base"), doc.get("tip", "tip"), tip)


def load_chain(path) -> KinematicChain:
    with open(path) as f:
        return chain_from_dict(json.load(f))


def save_chain(chain: KinematicChain, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(chain_to_dict(chain), indent=2))
    tmp.replace(path)


# ---------------------------------------------------------------------------
# fixture robot: 4-DOF arm + 2-DOF wrist, 2-DOF head gimbal on the same base.
# Link offsets are plausible values for a mobile manipulator, not measured ones.
#
# Base frame: x forward, y left, z up. Gripper frame: x is the approach axis.
# At zero joint values the gripper sits ~0.4 m in front of the camera with its
# approach axis pointing left; positive wrist_flex tips the object toward the camera.

WRIST_ROLL = "wrist_roll"
WRIST_FLEX = "wrist_flex"


def fixture_arm_chain() -> KinematicChain:
    return KinematicChain(
        (
            Joint(REVOLUTE, (0, 0, 1), RigidTransform(), "base_yaw"),
            Joint(PRISMATIC, (0, 0, 1), RigidTransform.from_translation((0.10, -0.09, 0.40)), "arm_lift"),
            Joint(REVOLUTE, (0, 1, 0), RigidTransform.from_translation((0.0, 0.0, 0.35)), "arm_flex"),
            Joint(REVOLUTE, (1, 0, 0), RigidTransform.from_translation((0.22, 0.0, 0.20)), "arm_roll"),
            Joint(REVOLUTE, (0, 0, 1), RigidTransform.from_translation((0.13, 0.0, 0.0)), WRIST_FLEX),
            Joint(REVOLUTE, (1, 0, 0), RigidTransform(rot_z(np.pi / 2), (0.0, 0.03, 0.0)), WRIST_ROLL),
        ),
        "base",
        "gripper",
    )


# camera optical frame: z forward, x right, y down (looking along base +x at zero pan/tilt)
_OPTICAL = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def fixture_head_chain() -> KinematicChain:
    return KinematicChain(
        (
            Joint(REVOLUTE, (0, 0, 1), RigidTransform.from_translation((0.05, 0.0, 1.00)), "head_pan"),
            Joint(REVOLUTE, (0, 1, 0), RigidTransform.from_translation((0.0, 0.0, 0.06)), "head_tilt"),
        ),
        "base",
        "camera",
        RigidTransform(_OPTICAL, (0.03, 0.0, 0.0)),
    )
