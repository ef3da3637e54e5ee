"""Parametric hand poses and spherically interpolated grasp approaches.

A pose is a global rigid transform, fifteen articulated joint rotations
(three per finger, thumb first) and ten shape coefficients.  Rotations are
unit quaternions in wxyz order; axis-angle import/export is provided for
pose files following the parametric-hand-model convention.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

JOINT_COUNT = 15
SHAPE_DIM = 10
UNIT_TOL = 1e-9
IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def _require_unit(q, tol: float = 1e-6) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if abs(np.linalg.norm(q) - 1.0) > tol:
        raise ValueError(f"quaternion is not unit length: |q| = {np.linalg.norm(q)}")
    return q


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z], dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


def quat_from_axis_angle(axis_angle) -> np.ndarray:
    aa = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(aa)
    if angle < 1e-12:
        return IDENTITY_QUAT.copy()
    axis = aa / angle
    half = angle / 2.0
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


def axis_angle_from_quat(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    if w < 0:  # canonical upper hemisphere
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(max(1.0 - w * w, 0.0))
    if s < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(s, w)
    return angle * np.array([x, y, z]) / s


def quat_angle(q0, q1) -> float:
    """Geodesic rotation angle between two unit quaternions (sign-invariant;
    atan2 form stays accurate near zero)."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    if float(np.dot(q0, q1)) < 0.0:
        q1 = -q1
    # the 4-vector angle is half the rotation angle
    return 4.0 * math.atan2(np.linalg.norm(q0 - q1), np.linalg.norm(q0 + q1))


def slerp(q0, q1, u: float) -> np.ndarray:
    """Constant-angular-velocity interpolation along the shorter great-circle
    arc; falls back to normalized linear interpolation for tiny angles."""
    q0 = _require_unit(q0)
    q1 = _require_unit(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    theta = math.acos(min(dot, 1.0))
    if theta < 1e-6:
        return quat_normalize(q0 + u * (q1 - q0))
    s = math.sin(theta)
    return (math.sin((1.0 - u) * theta) / s) * q0 + (math.sin(u * theta) / s) * q1


@dataclass
class HandPose:
    global_translation: np.ndarray
    global_rotation: np.ndarray
    joint_rotations: np.ndarray  # (JOINT_COUNT, 4)
    shape_params: np.ndarray     # (SHAPE_DIM,)

    def validate(self) -> None:
        if self.global_translation.shape != (3,):
            raise ValueError("global_translation must be a 3-vector")
        if self.global_rotation.shape != (4,):
            raise ValueError("global_rotation must be a wxyz quaternion")
        if self.joint_rotations.shape != (JOINT_COUNT, 4):
            raise ValueError(f"joint_rotations must be ({JOINT_COUNT}, 4)")
        if self.shape_params.shape != (SHAPE_DIM,):
            raise ValueError(f"shape_params must be a {SHAPE_DIM}-vector")
        quats = np.vstack([self.global_rotation[None], self.joint_rotations])
        norms = np.linalg.norm(quats, axis=1)
        if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
            raise ValueError("all quaternions must be unit length")

    def copy(self) -> "HandPose":
        return HandPose(self.global_translation.copy(), self.global_rotation.copy(),
                        self.joint_rotations.copy(), self.shape_params.copy())

    @classmethod
    def rest(cls) -> "HandPose":
        return cls(np.zeros(3), IDENTITY_QUAT.copy(),
                   np.tile(IDENTITY_QUAT, (JOINT_COUNT, 1)), np.zeros(SHAPE_DIM))


@dataclass
class Trajectory:
    poses: list[HandPose]
    frame_times: np.ndarray

    def validate(self) -> None:
        if len(self.poses) != len(self.frame_times):
            raise ValueError("poses and frame_times differ in length")
        if len(self.poses) < 2:
            raise ValueError("a trajectory needs at least two frames")
        t = np.asarray(self.frame_times, dtype=np.float64)
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("frame_times must increase strictly from 0 to 1")
        for pose in self.poses:
            pose.validate()

    def to_jsonl(self, path) -> None:
        lines = []
        for pose, t in zip(self.poses, self.frame_times):
            lines.append(json.dumps({
                "frame_time": float(t),
                "translation": pose.global_translation.tolist(),
                "rotation_wxyz": pose.global_rotation.tolist(),
                "joint_rotations_wxyz": pose.joint_rotations.tolist(),
                "shape": pose.shape_params.tolist(),
            }))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "Trajectory":
        poses, times = [], []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            poses.append(HandPose(
                np.array(rec["translation"], dtype=np.float64),
                np.array(rec["rotation_wxyz"], dtype=np.float64),
                np.array(rec["joint_rotations_wxyz"], dtype=np.float64),
                np.array(rec["shape"], dtype=np.float64)))
            times.append(float(rec["frame_time"]))
        traj = cls(poses, np.array(times))
        traj.validate()
        return traj


def start_pose_from_end(end: HandPose, object_center, standoff: float,
                        vertical=(0.0, 0.0, 1.0)) -> HandPose:
    """Flat-hand start: zeroed articulation, end pose's orientation and shape,
    placed a fixed standoff above the object along the vertical axis."""
    if standoff <= 0:
        raise ValueError("standoff must be positive")
    end.validate()
    up = np.asarray(vertical, dtype=np.float64)
    up = up / np.linalg.norm(up)
    return HandPose(
        np.asarray(object_center, dtype=np.float64) + standoff * up,
        end.global_rotation.copy(),
        np.tile(IDENTITY_QUAT, (JOINT_COUNT, 1)),
        end.shape_params.copy())


def interpolate_trajectory(start: HandPose, end: HandPose, n_frames: int = 16) -> Trajectory:
    """Uniformly timed frames: rotations via slerp, translation and shape via
    linear interpolation."""
    if n_frames < 2:
        raise ValueError("n_frames must be at least 2")
    start.validate()
    end.validate()
    times = np.linspace(0.0, 1.0, n_frames)
    poses = []
    for u in times:
        joints = np.stack([slerp(start.joint_rotations[j], end.joint_rotations[j], u)
                           for j in range(JOINT_COUNT)])
        poses.append(HandPose(
            (1.0 - u) * start.global_translation + u * end.global_translation,
            slerp(start.global_rotation, end.global_rotation, u),
            joints,
            (1.0 - u) * start.shape_params + u * end.shape_params))
    return Trajectory(poses, times)


@dataclass(frozen=True)
class ObjectDescriptor:
    """What the end-pose provider needs to know about the object."""

    name: str
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    extent: float = 0.1


class GraspEndPoseProvider(Protocol):
    def provide(self, obj: ObjectDescriptor) -> HandPose: ...


class StubEndPoseProvider:
    """Deterministic stand-in for a learned grasp generator: plausible-range
    poses keyed by (seed, object)."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def provide(self, obj: ObjectDescriptor) -> HandPose:
        digest = hashlib.sha256(f"{self.seed}:{obj.name}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        center = np.asarray(obj.center, dtype=np.float64)
        offset = rng.uniform(-1.0, 1.0, 3)
        offset = offset / np.linalg.norm(offset) * rng.uniform(0.4, 0.9) * 0.2
        translation = center + offset

        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        global_rotation = quat_from_axis_angle(axis * rng.uniform(0.0, math.pi))
        joints = []
        for _ in range(JOINT_COUNT):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            joints.append(quat_from_axis_angle(axis * rng.uniform(0.0, math.pi / 2)))
        pose = HandPose(translation, quat_normalize(global_rotation),
                        np.stack([quat_normalize(q) for q in joints]),
                        rng.normal(scale=0.5, size=SHAPE_DIM))
        pose.validate()
        return pose


def stub_end_pose_provider(seed: int = 0) -> StubEndPoseProvider:
    return StubEndPoseProvider(seed)


def pose_from_axis_angle_vector(vec: np.ndarray, translation, shape) -> HandPose:
    """48-vector convention: 3 global axis-angle values then 15 * 3 joint
    axis-angle values."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (3 + 3 * JOINT_COUNT,):
        raise ValueError(f"expected a {3 + 3 * JOINT_COUNT}-vector")
    joints = np.stack([quat_from_axis_angle(vec[3 + 3 * j: 6 + 3 * j])
                       for j in range(JOINT_COUNT)])
    return HandPose(np.asarray(translation, dtype=np.float64),
                    quat_from_axis_angle(vec[:3]), joints,
                    np.asarray(shape, dtype=np.float64))


def axis_angle_vector_from_pose(pose: HandPose) -> np.ndarray:
    parts = [axis_angle_from_quat(pose.global_rotation)]
    parts += [axis_angle_from_quat(q) for q in pose.joint_rotations]
    return np.concatenate(parts)
