import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspdiff.trajectory import (HandPose, ObjectDescriptor, Trajectory,
                                  axis_angle_from_quat,
                                  axis_angle_vector_from_pose,
                                  interpolate_trajectory,
                                  pose_from_axis_angle_vector, quat_angle,
                                  quat_from_axis_angle, quat_normalize, slerp,
                                  start_pose_from_end, stub_end_pose_provider)


def random_unit_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


unit_quats = st.builds(
    lambda seed: random_unit_quat(np.random.default_rng(seed)),
    st.integers(0, 2**32 - 1))


class TestSlerp:
    def test_endpoints(self):
        rng = np.random.default_rng(0)
        q0, q1 = random_unit_quat(rng), random_unit_quat(rng)
        np.testing.assert_allclose(slerp(q0, q1, 0.0), q0, atol=1e-12)
        end = slerp(q0, q1, 1.0)
        assert min(np.linalg.norm(end - q1), np.linalg.norm(end + q1)) < 1e-12

    def test_ninety_degree_midpoint(self):
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        q1 = quat_from_axis_angle([0.0, 0.0, math.pi / 2])
        mid = slerp(q0, q1, 0.5)
        expect = np.array([math.cos(math.pi / 8), 0.0, 0.0, math.sin(math.pi / 8)])
        np.testing.assert_allclose(mid, expect, atol=1e-10)

    def test_antipodal_input_reduces_to_constant(self):
        rng = np.random.default_rng(1)
        q0 = random_unit_quat(rng)
        for u in (0.0, 0.3, 0.7, 1.0):
            out = slerp(q0, -q0, u)
            assert min(np.linalg.norm(out - q0), np.linalg.norm(out + q0)) < 1e-9

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            slerp(np.array([2.0, 0, 0, 0]), np.array([1.0, 0, 0, 0]), 0.5)

    @settings(max_examples=60, deadline=None)
    @given(unit_quats, unit_quats, st.floats(0.0, 1.0))
    def test_unit_norm_preserved(self, q0, q1, u):
        assert abs(np.linalg.norm(slerp(q0, q1, u)) - 1.0) < 1e-9

    @settings(max_examples=60, deadline=None)
    @given(unit_quats, unit_quats, st.floats(0.0, 1.0))
    def test_path_symmetry(self, q0, q1, u):
        a = slerp(q0, q1, u)
        b = slerp(q1, q0, 1.0 - u)
        assert min(np.linalg.norm(a - b), np.linalg.norm(a + b)) < 1e-9


class TestStartPose:
    def make_end(self):
        rng = np.random.default_rng(2)
        return HandPose(rng.normal(size=3),
                        random_unit_quat(rng),
                        np.stack([random_unit_quat(rng) for _ in range(15)]),
                        rng.normal(size=10))

    def test_standoff_placement(self):
        end = self.make_end()
        start = start_pose_from_end(end, np.zeros(3), 0.3)
        np.testing.assert_allclose(start.global_translation, [0, 0, 0.3])

    def test_zeroed_articulation_and_copied_fields(self):
        end = self.make_end()
        start = start_pose_from_end(end, [0.1, 0.2, 0.0], 0.25)
        assert np.all(start.joint_rotations == [1.0, 0.0, 0.0, 0.0])
        assert start.shape_params.tobytes() == end.shape_params.tobytes()
        assert start.global_rotation.tobytes() == end.global_rotation.tobytes()

    def test_rejects_non_positive_standoff(self):
        with pytest.raises(ValueError):
            start_pose_from_end(self.make_end(), np.zeros(3), 0.0)

    def test_custom_vertical_axis(self):
        end = self.make_end()
        start = start_pose_from_end(end, np.zeros(3), 0.5, vertical=(0, 2, 0))
        np.testing.assert_allclose(start.global_translation, [0, 0.5, 0])


class TestInterpolation:
    def endpoints(self):
        rng = np.random.default_rng(3)
        start = HandPose(rng.normal(size=3), random_unit_quat(rng),
                         np.stack([random_unit_quat(rng) for _ in range(15)]),
                         rng.normal(size=10))
        end = HandPose(rng.normal(size=3), random_unit_quat(rng),
                       np.stack([random_unit_quat(rng) for _ in range(15)]),
                       rng.normal(size=10))
        return start, end

    def test_two_frames_are_exact_endpoints(self):
        start, end = self.endpoints()
        traj = interpolate_trajectory(start, end, 2)
        traj.validate()
        np.testing.assert_allclose(traj.poses[0].global_translation,
                                   start.global_translation)
        q = traj.poses[1].global_rotation
        assert min(np.linalg.norm(q - end.global_rotation),
                   np.linalg.norm(q + end.global_rotation)) < 1e-12

    def test_identical_endpoints_give_copies(self):
        start, _ = self.endpoints()
        traj = interpolate_trajectory(start, start.copy(), 5)
        for pose in traj.poses:
            np.testing.assert_allclose(pose.global_translation,
                                       start.global_translation, atol=1e-12)
            assert quat_angle(pose.global_rotation, start.global_rotation) < 1e-9

    def test_constant_angular_velocity(self):
        start, _ = self.endpoints()
        end = start.copy()
        end.joint_rotations = start.joint_rotations.copy()
        end.joint_rotations[4] = quat_normalize(quat_from_axis_angle(
            np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])
            * math.radians(80)))
        start.joint_rotations[4] = np.array([1.0, 0.0, 0.0, 0.0])
        traj = interpolate_trajectory(start, end, 5)
        angles = [quat_angle(a.joint_rotations[4], b.joint_rotations[4])
                  for a, b in zip(traj.poses[:-1], traj.poses[1:])]
        np.testing.assert_allclose(angles, math.radians(20), atol=1e-6)
        assert np.ptp(angles) < 1e-6

    def test_unit_norms_across_frames(self):
        start, end = self.endpoints()
        traj = interpolate_trajectory(start, end, 16)
        for pose in traj.poses:
            quats = np.vstack([pose.global_rotation[None], pose.joint_rotations])
            assert np.max(np.abs(np.linalg.norm(quats, axis=1) - 1.0)) < 1e-9

    def test_rejects_single_frame(self):
        start, end = self.endpoints()
        with pytest.raises(ValueError):
            interpolate_trajectory(start, end, 1)


class TestStubProvider:
    def test_deterministic(self):
        obj = ObjectDescriptor("mug", (0.1, 0.0, 0.0), 0.08)
        a = stub_end_pose_provider(7).provide(obj)
        b = stub_end_pose_provider(7).provide(obj)
        assert a.global_translation.tobytes() == b.global_translation.tobytes()
        assert a.joint_rotations.tobytes() == b.joint_rotations.tobytes()

    def test_plausible_ranges(self):
        obj = ObjectDescriptor("bottle", (0.0, 0.1, 0.05), 0.1)
        pose = stub_end_pose_provider(0).provide(obj)
        pose.validate()
        assert np.linalg.norm(pose.global_translation - np.array(obj.center)) <= 0.2
        for q in pose.joint_rotations:
            assert quat_angle(q, np.array([1.0, 0, 0, 0])) <= math.pi / 2 + 1e-9

    def test_different_objects_differ(self):
        provider = stub_end_pose_provider(3)
        a = provider.provide(ObjectDescriptor("mug"))
        b = provider.provide(ObjectDescriptor("can"))
        assert not np.allclose(a.global_translation, b.global_translation)


def test_trajectory_jsonl_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    start = HandPose(rng.normal(size=3), random_unit_quat(rng),
                     np.stack([random_unit_quat(rng) for _ in range(15)]),
                     rng.normal(size=10))
    end = start_pose_from_end(start, np.zeros(3), 0.25)
    traj = interpolate_trajectory(end, start, 6)
    path = tmp_path / "traj.jsonl"
    traj.to_jsonl(path)
    back = Trajectory.from_jsonl(path)
    assert len(back.poses) == 6
    for a, b in zip(traj.poses, back.poses):
        assert a.global_translation.tobytes() == b.global_translation.tobytes()
        assert a.joint_rotations.tobytes() == b.joint_rotations.tobytes()
        assert a.shape_params.tobytes() == b.shape_params.tobytes()


def test_axis_angle_roundtrip():
    rng = np.random.default_rng(6)
    pose = HandPose(rng.normal(size=3), random_unit_quat(rng),
                    np.stack([random_unit_quat(rng) for _ in range(15)]),
                    rng.normal(size=10))
    vec = axis_angle_vector_from_pose(pose)
    assert vec.shape == (48,)
    back = pose_from_axis_angle_vector(vec, pose.global_translation,
                                       pose.shape_params)
    assert quat_angle(back.global_rotation, pose.global_rotation) < 1e-9
    for j in range(15):
        assert quat_angle(back.joint_rotations[j], pose.joint_rotations[j]) < 1e-9


def test_pose_validation_catches_bad_quaternions():
    pose = HandPose.rest()
    pose.global_rotation = np.array([1.0, 0.0, 0.0, 1e-3])
    with pytest.raises(ValueError):
        pose.validate()
