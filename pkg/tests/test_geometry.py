"""Transforms and forward kinematics against 4x4 homogeneous-matrix oracles."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kiip.errors import LengthMismatch
from kiip.geometry import (
    PRISMATIC,
    REVOLUTE,
    Joint,
    KinematicChain,
    RigidTransform,
    apply,
    camera_to_gripper,
    chain_from_dict,
    chain_to_dict,
    compose,
    fixture_arm_chain,
    fixture_head_chain,
    forward_kinematics,
    invert,
    load_chain,
    rot_z,
    rotation_vector,
    save_chain,
)


# --- oracles: plain 4x4 matrices, rotations from quaternions (not Rodrigues) ---


def quat_matrix(axis, angle):
    a = np.asarray(axis, float) / np.linalg.norm(axis)
    w, (x, y, z) = math.cos(angle / 2), a * math.sin(angle / 2)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def homog(r, t):
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = t
    return m


def random_transform(rng):
    return RigidTransform(quat_matrix(rng.normal(size=3), rng.uniform(-math.pi, math.pi)), rng.normal(size=3))


def random_chain(rng, n):
    joints = []
    for _ in range(n):
        kind = REVOLUTE if rng.random() < 0.6 else PRISMATIC
        joints.append(Joint(kind, rng.normal(size=3), random_transform(rng)))
    return KinematicChain(tuple(joints), "base", "tip", random_transform(rng))


def fk_oracle(chain, q):
    m = np.eye(4)
    for j, v in zip(chain.joints, q):
        off = homog(j.fixed_offset.rotation, j.fixed_offset.translation)
        if j.kind == REVOLUTE:
            motion = homog(quat_matrix(j.axis, v), np.zeros(3))
        else:
            motion = homog(np.eye(3), j.axis * v)
        m = m @ off @ motion
    return m @ homog(chain.tip_offset.rotation, chain.tip_offset.translation)


# --- compose / invert / apply ---


def test_compose_identity():
    assert compose(RigidTransform(), RigidTransform()).allclose(RigidTransform(), 0)


def test_compose_inverse_rotations_cancel():
    t = compose(RigidTransform(rot_z(math.pi / 2)), RigidTransform(rot_z(-math.pi / 2)))
    assert t.allclose(RigidTransform(), 1e-15)


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b = random_transform(rng), random_transform(rng)
        assert np.max(np.abs(compose(a, b).matrix() - a.matrix() @ b.matrix())) <= 1e-12


def test_compose_applies_b_first():
    a = RigidTransform.from_translation((1, 0, 0))
    b = RigidTransform(rot_z(math.pi / 2))
    # b rotates (1,0,0) to (0,1,0), then a shifts it
    np.testing.assert_allclose(apply(compose(a, b), (1, 0, 0)), (1, 1, 0), atol=1e-15)


def test_invert_identity_and_translation():
    assert invert(RigidTransform()).allclose(RigidTransform(), 0)
    t = invert(RigidTransform.from_translation((1, 2, 3)))
    np.testing.assert_array_equal(t.translation, (-1, -2, -3))


def test_invert_round_trip_random_points():
    rng = np.random.default_rng(2)
    for _ in range(100):
        t = random_transform(rng)
        p = rng.normal(size=(50, 3))
        np.testing.assert_allclose(apply(invert(t), apply(t, p)), p, atol=1e-10)
        assert compose(t, invert(t)).allclose(RigidTransform(), 1e-9)


def test_apply_identity_and_rotation():
    np.testing.assert_array_equal(apply(RigidTransform(), (1, 2, 3)), (1, 2, 3))
    np.testing.assert_allclose(apply(RigidTransform(rot_z(math.pi / 2)), (1, 0, 0)), (0, 1, 0), atol=1e-12)


def test_batch_apply_equals_per_point():
    rng = np.random.default_rng(3)
    t = random_transform(rng)
    pts = rng.normal(size=(40, 3))
    batch = apply(t, pts)
    for p, q in zip(pts, batch):
        np.testing.assert_allclose(apply(t, p), q, rtol=0, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_compose_is_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_transform(rng) for _ in range(3))
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), 1e-12)


def test_drifted_rotation_is_reorthonormalized():
    r = rot_z(0.3) * (1 + 1e-6)
    t = compose(RigidTransform(r), RigidTransform())
    assert t.is_valid()


def test_transform_is_immutable():
    t = RigidTransform()
    with pytest.raises(ValueError):
        t.rotation[0, 0] = 2.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
       st.floats(0, math.pi))
def test_rotation_vector_round_trip(axis, angle):
    r = quat_matrix(axis, angle)
    rv = rotation_vector(r)
    np.testing.assert_allclose(quat_matrix(rv, np.linalg.norm(rv)) if np.linalg.norm(rv) else np.eye(3), r, atol=1e-6)


# --- forward kinematics ---


def test_fk_empty_chain_is_identity():
    assert forward_kinematics(KinematicChain(), []).allclose(RigidTransform(), 0)


def test_fk_single_revolute_quarter_turn():
    chain = KinematicChain((Joint(REVOLUTE, (0, 0, 1)),))
    np.testing.assert_allclose(apply(forward_kinematics(chain, [math.pi / 2]), (1, 0, 0)), (0, 1, 0), atol=1e-15)


def test_fk_prismatic_moves_along_axis():
    chain = KinematicChain((Joint(PRISMATIC, (0, 0, 2)),))
    np.testing.assert_allclose(forward_kinematics(chain, [0.25]).translation, (0, 0, 0.25))


def test_fk_five_joint_chains_match_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        chain = random_chain(rng, 5)
        q = rng.uniform(-3, 3, 5)
        assert np.max(np.abs(forward_kinematics(chain, q).matrix() - fk_oracle(chain, q))) <= 1e-10


def test_fk_rejects_wrong_state_length():
    with pytest.raises(LengthMismatch):
        forward_kinematics(fixture_arm_chain(), [0.0] * 5)


def test_joint_axis_is_unit():
    j = Joint(REVOLUTE, (3, 4, 12))
    assert abs(np.linalg.norm(j.axis) - 1) <= 1e-12


def test_duplicate_frame_names_rejected():
    with pytest.raises(ValueError):
        KinematicChain((Joint(REVOLUTE, (0, 0, 1), name="a"), Joint(REVOLUTE, (0, 0, 1), name="a")))


# --- camera_to_gripper ---


def test_camera_to_gripper_trivial_cases():
    rng = np.random.default_rng(5)
    t = random_transform(rng)
    assert camera_to_gripper(t, t).allclose(RigidTransform(), 1e-12)
    assert camera_to_gripper(t, RigidTransform()).allclose(t, 1e-15)


def test_marker_on_gripper_is_pose_independent():
    arm, head = fixture_arm_chain(), fixture_head_chain()
    rng = np.random.default_rng(6)
    marker_grip = np.array([0.05, 0.01, -0.02])
    seen = []
    for _ in range(20):
        fk_grip = forward_kinematics(arm, rng.uniform(-1, 1, len(arm)))
        fk_cam = forward_kinematics(head, rng.uniform(-1, 1, len(head)))
        # the camera observes the marker in its own frame...
        marker_cam = apply(invert(fk_cam), apply(fk_grip, marker_grip))
        # ...and the kinematics move it back to the gripper frame
        seen.append(apply(camera_to_gripper(fk_cam, fk_grip), marker_cam))
    assert np.max(np.abs(np.array(seen) - marker_grip)) <= 1e-9


# --- chain files ---


def test_chain_file_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    chain = random_chain(rng, 4)
    save_chain(chain, tmp_path / "c.json")
    back = load_chain(tmp_path / "c.json")
    q = rng.normal(size=4)
    assert forward_kinematics(back, q).allclose(forward_kinematics(chain, q), 1e-12)


def test_chain_dict_minimal_schema():
    doc = {"base": "b", "tip": "t", "joints": [{"kind": "revolute", "axis": [0, 0, 1],
                                                 "offset_rotation": np.eye(3).tolist(), "offset_translation": [1, 0, 0]}]}
    chain = chain_from_dict(doc)
    np.testing.assert_allclose(forward_kinematics(chain, [0]).translation, (1, 0, 0))
    assert chain_to_dict(chain)["joints"][0]["kind"] == "revolute"


def test_chain_dict_rejects_non_rotation():
    doc = {"joints": [{"kind": "revolute", "axis": [0, 0, 1], "offset_rotation": (2 * np.eye(3)).tolist()}]}
    with pytest.raises(ValueError):
        chain_from_dict(doc)


def test_shipped_chain_files_match_fixtures():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "data" / "chains"
    q = np.linspace(-0.5, 0.5, 6)
    assert forward_kinematics(load_chain(root / "arm.json"), q).allclose(forward_kinematics(fixture_arm_chain(), q), 1e-12)
    assert forward_kinematics(load_chain(root / "head.json"), q[:2]).allclose(forward_kinematics(fixture_head_chain(), q[:2]), 1e-12)
