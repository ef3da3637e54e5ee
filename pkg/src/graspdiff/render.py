"""Structure-condition rendering from 3D state: pinhole projection,
anti-aliased skeleton rasterization, z-buffered triangle rasterization for
depth/segmentation, and normals from depth.

Conventions: camera maps world points via X_cam = R * X_world + t with +z
looking into the scene; pixel (row r, col c) samples the ray through image
coordinates (u, v) = (c, r); normals live in the camera frame and face the
camera (z component <= 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditions import LABEL_BACKGROUND, LABEL_HAND, LABEL_OBJECT
from .trajectory import HandPose, quat_multiply, quat_rotate

NEAR_PLANE = 1e-4

# 21-keypoint hand: wrist then four joints per finger, thumb to little.
HAND_BONES: tuple[tuple[int, int], ...] = tuple(
    (0, 1 + 4 * f) if k == 0 else (k + 4 * f, k + 1 + 4 * f)
    for f in range(5) for k in range(4))

# one fixed color per bone, thumb warm to little cool (values in [0, 1])
SKELETON_PALETTE = np.array([
    (1.00, 0.00, 0.00), (1.00, 0.25, 0.00), (1.00, 0.50, 0.00), (1.00, 0.75, 0.00),
    (1.00, 1.00, 0.00), (0.75, 1.00, 0.00), (0.50, 1.00, 0.00), (0.25, 1.00, 0.00),
    (0.00, 1.00, 0.00), (0.00, 1.00, 0.25), (0.00, 1.00, 0.50), (0.00, 1.00, 0.75),
    (0.00, 1.00, 1.00), (0.00, 0.75, 1.00), (0.00, 0.50, 1.00), (0.00, 0.25, 1.00),
    (0.00, 0.00, 1.00), (0.25, 0.00, 1.00), (0.50, 0.00, 1.00), (0.75, 0.00, 1.00),
], dtype=np.float64)


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def validate(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def to_camera_frame(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.stack([quat_rotate(self.rotation, p) for p in pts]) \
            + self.translation[None, :]

    def ray_directions(self) -> np.ndarray:
        """(H, W, 3) unit-z ray directions through every pixel sample."""
        us, vs = np.meshgrid(np.arange(self.width, dtype=np.float64),
                             np.arange(self.height, dtype=np.float64))
        return np.stack([(us - self.cx) / self.fx, (vs - self.cy) / self.fy,
                         np.ones_like(us)], axis=-1)


def project(points3d, camera: Camera):
    """Pinhole projection.  Returns ((N, 2) pixel coordinates, (N,) bool
    visibility); points at or behind the near plane are flagged invisible and
    get NaN coordinates."""
    camera.validate()
    cam = camera.to_camera_frame(points3d)
    z = cam[:, 2]
    visible = z > NEAR_PLANE
    uv = np.full((len(cam), 2), np.nan)
    uv[visible, 0] = camera.fx * cam[visible, 0] / z[visible] + camera.cx
    uv[visible, 1] = camera.fy * cam[visible, 1] / z[visible] + camera.cy
    return uv, visible


@dataclass
class HandSkeleton:
    joints3d: np.ndarray  # (21, 3) meters
    bones: tuple[tuple[int, int], ...] = HAND_BONES

    def validate(self) -> None:
        if self.joints3d.shape != (21, 3):
            raise ValueError("hand skeleton needs 21 3-D joints")
        children = set()
        for parent, child in self.bones:
            if not (0 <= parent < 21 and 0 <= child < 21):
                raise ValueError("bone index out of range")
            if child in children or child == 0:
                raise ValueError("bone graph must be a tree rooted at the wrist")
            children.add(child)


def _segment_distance_field(xs, ys, p0, p1):
    d = p1 - p0
    len2 = float(d @ d)
    px, py = xs - p0[0], ys - p0[1]
    if len2 < 1e-12:
        return np.hypot(px, py)
    u = np.clip((px * d[0] + py * d[1]) / len2, 0.0, 1.0)
    return np.hypot(px - u * d[0], py - u * d[1])


def rasterize_skeleton(skeleton: HandSkeleton, camera: Camera,
                       line_width: float = 2.0) -> np.ndarray:
    """Anti-aliased colored bone segments plus joint discs on black.

    Coverage ramps linearly from 1 at distance line_width/2 to 0 at distance
    line_width/2 + 1, so rendered pixels lie exactly within that reach of the
    projected segment.  Bones with either endpoint behind the camera are
    skipped.
    """
    camera.validate()
    skeleton.validate()
    image = np.zeros((3, camera.height, camera.width), dtype=np.float64)
    uv, visible = project(skeleton.joints3d, camera)
    half = line_width / 2.0
    reach = half + 1.0
    ys, xs = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)

    def splat(alpha, color):
        a = alpha[None, :, :]
        image[:] = image * (1.0 - a) + color[:, None, None] * a

    for k, (i, j) in enumerate(skeleton.bones):
        if not (visible[i] and visible[j]):
            continue
        dist = _segment_distance_field(xs, ys, uv[i], uv[j])
        alpha = np.clip(reach - dist, 0.0, 1.0)
        alpha[alpha > 1.0 - 1e-12] = 1.0
        splat(alpha, SKELETON_PALETTE[k % len(SKELETON_PALETTE)])
    for k, (i, j) in enumerate(skeleton.bones):
        if not visible[j]:
            continue
        dist = np.hypot(xs - uv[j, 0], ys - uv[j, 1])
        splat(np.clip(reach - dist, 0.0, 1.0),
              SKELETON_PALETTE[k % len(SKELETON_PALETTE)])
    if visible[0]:
        dist = np.hypot(xs - uv[0, 0], ys - uv[0, 1])
        splat(np.clip(reach - dist, 0.0, 1.0), np.ones(3))
    return image.astype(np.float32)


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) meters
    faces: np.ndarray     # (F, 3) vertex indices
    label: int = LABEL_OBJECT

    def validate(self) -> None:
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (F, 3)")
        if self.faces.size and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")
        if self.label not in (LABEL_HAND, LABEL_OBJECT):
            raise ValueError("mesh label must be hand or object")
        for fi, face in enumerate(self.faces):
            a, b, c = self.vertices[face]
            area2 = np.linalg.norm(np.cross(b - a, c - a))
            if area2 < 1e-14:
                raise ValueError(f"face {fi} is degenerate (zero area)")

    def transformed(self, rotation_wxyz, translation) -> "TriangleMesh":
        verts = np.stack([quat_rotate(rotation_wxyz, v) for v in self.vertices])
        return TriangleMesh(verts + np.asarray(translation, dtype=np.float64),
                            self.faces.copy(), self.label)


def rasterize_meshes(meshes: list[TriangleMesh], camera: Camera):
    """Z-buffered rasterization at pixel sample points (u, v) = (col, row).

    Returns (depth, labels): depth in meters with 0 = no surface, labels from
    {background, hand, object} taken from the nearest surface.  Depth is
    perspective-correct (1/Z interpolated over the screen triangle).
    Triangles with any vertex behind the near plane are skipped.
    """
    camera.validate()
    h, w = camera.height, camera.width
    zbuf = np.full((h, w), np.inf)
    labels = np.full((h, w), LABEL_BACKGROUND, dtype=np.int64)

    for mesh in meshes:
        mesh.validate()
        cam = camera.to_camera_frame(mesh.vertices)
        z = cam[:, 2]
        us = camera.fx * cam[:, 0] / np.where(z > NEAR_PLANE, z, 1.0) + camera.cx
        vs = camera.fy * cam[:, 1] / np.where(z > NEAR_PLANE, z, 1.0) + camera.cy
        for face in mesh.faces:
            if np.any(z[face] <= NEAR_PLANE):
                continue
            fx, fy, fz = us[face], vs[face], z[face]
            x_min = max(int(np.floor(fx.min())), 0)
            x_max = min(int(np.ceil(fx.max())), w - 1)
            y_min = max(int(np.floor(fy.min())), 0)
            y_max = min(int(np.ceil(fy.max())), h - 1)
            if x_min > x_max or y_min > y_max:
                continue
            area = ((fx[1] - fx[0]) * (fy[2] - fy[0])
                    - (fx[2] - fx[0]) * (fy[1] - fy[0]))
            if abs(area) < 1e-12:
                continue
            gy, gx = np.mgrid[y_min:y_max + 1, x_min:x_max + 1]
            w0 = ((fx[1] - gx) * (fy[2] - gy) - (fx[2] - gx) * (fy[1] - gy)) / area
            w1 = ((fx[2] - gx) * (fy[0] - gy) - (fx[0] - gx) * (fy[2] - gy)) / area
            w2 = 1.0 - w0 - w1
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if not inside.any():
                continue
            inv_z = w0 / fz[0] + w1 / fz[1] + w2 / fz[2]
            depth = np.where(inv_z > 0, 1.0 / np.maximum(inv_z, 1e-12), np.inf)
            tile = zbuf[y_min:y_max + 1, x_min:x_max + 1]
            closer = inside & (depth < tile)
            tile[closer] = depth[closer]
            labels[y_min:y_max + 1, x_min:x_max + 1][closer] = mesh.label

    depth_map = np.where(np.isfinite(zbuf), zbuf, 0.0).astype(np.float32)
    return depth_map, labels


def depth_to_normal(depth: np.ndarray, camera: Camera) -> np.ndarray:
    """Camera-facing unit normals from central differences of back-projected
    depth.  Returns (3, H, W); zero vector where the pixel or any 4-neighbor
    has no depth (borders included)."""
    camera.validate()
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    valid = depth > 0.0

    us, vs = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    px = (us - camera.cx) * depth / camera.fx
    py = (vs - camera.cy) * depth / camera.fy
    points = np.stack([px, py, depth], axis=-1)

    tx = np.zeros_like(points)
    ty = np.zeros_like(points)
    tx[:, 1:-1] = points[:, 2:] - points[:, :-2]
    ty[1:-1, :] = points[2:, :] - points[:-2, :]

    ok = np.zeros_like(valid)
    ok[1:-1, 1:-1] = (valid[1:-1, 1:-1] & valid[1:-1, 2:] & valid[1:-1, :-2]
                      & valid[2:, 1:-1] & valid[:-2, 1:-1])

    normal = np.cross(tx, ty)
    flip = normal[..., 2] > 0
    normal[flip] *= -1.0
    length = np.linalg.norm(normal, axis=-1)
    ok &= length > 1e-14
    normal[ok] /= length[ok][..., None]
    normal[~ok] = 0.0
    return normal.transpose(2, 0, 1).astype(np.float32)


# -- hand template -----------------------------------------------------------

# rest geometry in the hand frame: palm in the xy plane, fingers along +y
_MCP_OFFSETS = np.array([
    (0.034, 0.030, 0.0),   # thumb
    (0.024, 0.090, 0.0),   # index
    (0.000, 0.095, 0.0),   # middle
    (-0.023, 0.088, 0.0),  # ring
    (-0.044, 0.078, 0.0),  # little
])
_SEGMENT_LENGTHS = np.array([
    (0.036, 0.030, 0.026),
    (0.040, 0.026, 0.020),
    (0.044, 0.028, 0.022),
    (0.040, 0.026, 0.020),
    (0.032, 0.020, 0.018),
])


def hand_skeleton_from_pose(pose: HandPose, scale: float = 1.0) -> HandSkeleton:
    """Rigid-template forward kinematics: each articulated joint rotation acts
    on the segment it precedes; shape parameters scale overall size through
    their first coefficient."""
    pose.validate()
    size = scale * (1.0 + 0.05 * float(pose.shape_params[0]))
    joints = np.zeros((21, 3))
    joints[0] = pose.global_translation
    for f in range(5):
        direction = _MCP_OFFSETS[f] / np.linalg.norm(_MCP_OFFSETS[f])
        base = pose.global_translation + quat_rotate(
            pose.global_rotation, _MCP_OFFSETS[f] * size)
        joints[1 + 4 * f] = base
        rot = pose.global_rotation
        point = base
        for k in range(3):
            rot = quat_multiply(rot, pose.joint_rotations[3 * f + k])
            point = point + quat_rotate(rot, direction * _SEGMENT_LENGTHS[f][k] * size)
            joints[2 + 4 * f + k] = point
    return HandSkeleton(joints)


def bone_prism_mesh(p0: np.ndarray, p1: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Octahedral solid around a segment; returns (vertices, faces)."""
    axis = p1 - p0
    length = np.linalg.norm(axis)
    if length < 1e-9:
        axis = np.array([0.0, 0.0, 1.0])
    else:
        axis = axis / length
    helper = np.array([1.0, 0.0, 0.0])
    if abs(axis @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    mid = (p0 + p1) / 2.0
    ring = [mid + radius * u, mid + radius * v, mid - radius * u, mid - radius * v]
    vertices = np.stack([p0, p1, *ring])
    faces = np.array([
        (0, 2, 3), (0, 3, 4), (0, 4, 5), (0, 5, 2),
        (1, 3, 2), (1, 4, 3), (1, 5, 4), (1, 2, 5),
    ])
    return vertices, faces


def hand_proxy_mesh(skeleton: HandSkeleton, radius: float = 0.008) -> TriangleMesh:
    """Rigid-primitive hand stand-in: one octahedral solid per bone."""
    verts, faces = [], []
    offset = 0
    for i, j in skeleton.bones:
        v, f = bone_prism_mesh(skeleton.joints3d[i], skeleton.joints3d[j], radius)
        verts.append(v)
        faces.append(f + offset)
        offset += len(v)
    mesh = TriangleMesh(np.concatenate(verts), np.concatenate(faces), LABEL_HAND)
    mesh.validate()
    return mesh


# -- primitive object meshes -------------------------------------------------

def box_mesh(center, size, label: int = LABEL_OBJECT) -> TriangleMesh:
    cx, cy, cz = center
    sx, sy, sz = (size, size, size) if np.isscalar(size) else size
    xs = (cx - sx / 2, cx + sx / 2)
    ys = (cy - sy / 2, cy + sy / 2)
    zs = (cz - sz / 2, cz + sz / 2)
    vertices = np.array([(x, y, z) for x in xs for y in ys for z in zs])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
             (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(vertices, np.array(faces), label)


def uv_sphere_mesh(center, radius: float, rings: int = 12, sectors: int = 18,
                   label: int = LABEL_OBJECT) -> TriangleMesh:
    cx, cy, cz = center
    vertices = []
    for r in range(rings + 1):
        phi = np.pi * r / rings
        for s in range(sectors):
            theta = 2 * np.pi * s / sectors
            vertices.append((cx + radius * np.sin(phi) * np.cos(theta),
                             cy + radius * np.sin(phi) * np.sin(theta),
                             cz + radius * np.cos(phi)))
    faces = []
    for r in range(rings):
        for s in range(sectors):
            a = r * sectors + s
            b = r * sectors + (s + 1) % sectors
            c = (r + 1) * sectors + s
            d = (r + 1) * sectors + (s + 1) % sectors
            if r > 0:
                faces.append((a, b, c))
            if r < rings - 1:
                faces.append((b, d, c))
    return TriangleMesh(np.array(vertices), np.array(faces), label)


# -- minimal OBJ-subset mesh files -------------------------------------------

def read_obj(path, label: int = LABEL_OBJECT) -> TriangleMesh:
    """ASCII triangle subset: v and f records; f entries may carry /-suffixes
    and must reference exactly three vertices (1-based)."""
    vertices, faces = [], []
    for lineno, line in enumerate(open(path), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
            vertices.append(tuple(float(p) for p in parts[1:4]))
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: only triangle faces supported")
            faces.append(tuple(int(p.split("/")[0]) - 1 for p in parts[1:4]))
    if not vertices or not faces:
        raise ValueError(f"{path}: no triangle geometry found")
    mesh = TriangleMesh(np.array(vertices, dtype=np.float64),
                        np.array(faces, dtype=np.int64), label)
    mesh.validate()
    return mesh


def write_obj(path, mesh: TriangleMesh) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
