"""Core geometric value types and kernels.

Conventions used throughout the toolkit:

- right-handed coordinates, z up, units in meters
- yaw is a rotation about +z in radians, kept in (-pi, pi]
- a box's ``length`` runs along its heading (yaw), ``width`` across it
- all types are immutable values; every function here is pure

The bird's-eye-view (BEV) intersection of two yaw-rotated rectangles is
computed by Sutherland-Hodgman convex clipping; degenerate (zero-area)
intersections evaluate to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import BehindCameraError

_ROTATION_ATOL = 1e-9
_CLIP_EPS = 1e-12


class ObjectClass(str, Enum):
    CAR = "Car"
    CYCLIST = "Cyclist"
    PEDESTRIAN = "Pedestrian"


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


def wrap_half_angle(angle: float) -> float:
    """Wrap an angle to (-pi/2, pi/2], the period of a 180deg-symmetric box."""
    return 0.5 * math.pi - (0.5 * math.pi - angle) % math.pi


def _frozen_array(value, dtype, shape=None) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose: ``p_out = rotation @ p_in + translation``.

    The rotation must be a proper orthonormal matrix (checked on
    construction).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _frozen_array(self.rotation, float, (3, 3))
        tra = _frozen_array(self.translation, float, (3,))
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(tra)):
            raise ValueError("transform entries must be finite")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-8, rtol=0.0):
            raise ValueError("rotation is not orthonormal")
        if not math.isclose(float(np.linalg.det(rot)), 1.0, abs_tol=1e-8):
            raise ValueError("rotation determinant is not +1 (improper rotation)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return RigidTransform(rot, np.asarray(translation, dtype=float))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to a single (3,) point or an (N, 3) array."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition ``a o b``: applying the result equals applying b, then a."""
    return RigidTransform(a.rotation @ b.rotation,
                          a.rotation @ b.translation + a.translation)


def rotation_angle_deg(rotation: np.ndarray) -> float:
    """Geodesic angle (degrees) of a rotation matrix away from identity."""
    trace = float(np.trace(rotation))
    cos_angle = min(1.0, max(-1.0, (trace - 1.0) / 2.0))
    return math.degrees(math.acos(cos_angle))


def transform_distance(a: RigidTransform, b: RigidTransform):
    """(rotation angle deg, translation distance m) between two poses."""
    rot = a.rotation.T @ b.rotation
    return rotation_angle_deg(rot), float(np.linalg.norm(a.translation - b.translation))


@dataclass(frozen=True)
class PointCloud:
    """One frame of 3D points plus optional per-point attributes.

    ``points`` is (N, 3) float64. Optional per-point arrays must match its
    length: ``intensity`` (float), ``time_index`` (int, which source frame a
    point came from after temporal integration) and ``source_ids`` (int,
    which node a point came from after multi-view fusion). ``timestamp_ns``
    is the frame acquisition time; ``source_node`` the acquiring node for
    single-view clouds.
    """

    points: np.ndarray
    intensity: Optional[np.ndarray] = None
    timestamp_ns: int = 0
    time_index: Optional[np.ndarray] = None
    source_ids: Optional[np.ndarray] = None
    source_node: Optional[int] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        n = len(pts)
        for name, dtype in (("intensity", float), ("time_index", np.int64),
                            ("source_ids", np.int64)):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=dtype)
            if len(arr) == 0:
                object.__setattr__(self, name, None)
                continue
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per point")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if int(self.timestamp_ns) < 0:
            raise ValueError("timestamp_ns must be >= 0")
        object.__setattr__(self, "timestamp_ns", int(self.timestamp_ns))

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)))

    def select(self, mask_or_index) -> "PointCloud":
        """Sub-cloud keeping per-point attributes aligned."""
        pick = lambda a: None if a is None else a[mask_or_index]
        return PointCloud(self.points[mask_or_index],
                          intensity=pick(self.intensity),
                          timestamp_ns=self.timestamp_ns,
                          time_index=pick(self.time_index),
                          source_ids=pick(self.source_ids),
                          source_node=self.source_node)


def apply_transform(transform: RigidTransform, cloud: PointCloud) -> PointCloud:
    """Map every point through the transform; non-geometric fields unchanged."""
    return replace(cloud, points=transform.apply(cloud.points))


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D bounding box: center, (length, width, height), yaw.

    Yaw is normalized to (-pi, pi] on construction.
    """

    center: np.ndarray
    size: np.ndarray
    yaw: float
    label: ObjectClass
    score: float = 1.0
    track_id: Optional[int] = None

    def __post_init__(self):
        center = _frozen_array(self.center, float, (3,))
        size = _frozen_array(self.size, float, (3,))
        if not np.all(np.isfinite(center)) or not np.all(np.isfinite(size)):
            raise ValueError("box center and size must be finite")
        if np.any(size <= 0.0):
            raise ValueError("box dimensions must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "label", ObjectClass(self.label))

    @property
    def length(self) -> float:
        return float(self.size[0])

    @property
    def width(self) -> float:
        return float(self.size[1])

    @property
    def height(self) -> float:
        return float(self.size[2])

    @property
    def volume(self) -> float:
        return float(self.size[0] * self.size[1] * self.size[2])

    @property
    def z_min(self) -> float:
        return float(self.center[2] - 0.5 * self.size[2])

    @property
    def z_max(self) -> float:
        return float(self.center[2] + 0.5 * self.size[2])

    def bev_corners(self) -> np.ndarray:
        """(4, 2) footprint corners, counter-clockwise."""
        half_l, half_w = 0.5 * self.size[0], 0.5 * self.size[1]
        local = np.array([[half_l, half_w], [-half_l, half_w],
                          [-half_l, -half_w], [half_l, -half_w]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center[:2]


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as (M, 2) vertices."""
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of convex ``subject`` by convex CCW ``clip``.

    Points lying exactly on a clip edge are kept, so clipping a polygon by
    itself returns it unchanged.
    """
    output = [tuple(p) for p in np.asarray(subject, dtype=float)]
    clip = np.asarray(clip, dtype=float)
    m = len(clip)
    for i in range(m):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % m]
        ex, ey = bx - ax, by - ay
        current, output = output, []
        # signed area sign tells which side of edge a->b the point is on
        inside = [ex * (py - ay) - ey * (px - ax) >= -_CLIP_EPS for px, py in current]
        for j, (px, py) in enumerate(current):
            qx, qy = current[(j + 1) % len(current)]
            if inside[j]:
                output.append((px, py))
            if inside[j] != inside[(j + 1) % len(current)]:
                denom = ex * (qy - py) - ey * (qx - px)
                if abs(denom) > _CLIP_EPS:
                    t = (ex * (ay - py) - ey * (ax - px)) / denom
                    output.append((px + t * (qx - px), py + t * (qy - py)))
    return np.asarray(output, dtype=float).reshape(-1, 2)


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    clipped = clip_convex_polygon(a.bev_corners(), b.bev_corners())
    return polygon_area(clipped)


def iou_bev(a: Box3D, b: Box3D) -> float:
    """Intersection over union of the two BEV footprints."""
    inter = bev_intersection_area(a, b)
    union = a.length * a.width + b.length * b.width - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """3D intersection over union: BEV polygon overlap x vertical extent overlap."""
    z_overlap = min(a.z_max, b.z_max) - max(a.z_min, b.z_min)
    if z_overlap <= 0.0:
        return 0.0
    inter = bev_intersection_area(a, b) * z_overlap
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole intrinsics plus a world-to-camera extrinsic pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: RigidTransform

    def __post_init__(self):
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError("focal lengths must be positive")


def project_pinhole(camera: PinholeCamera, point) -> tuple[float, float]:
    """Project a world point to pixel coordinates.

    Raises BehindCameraError when the camera-frame depth is <= 1e-9.
    """
    q = camera.extrinsic.apply(np.asarray(point, dtype=float))
    if q[2] <= 1e-9:
        raise BehindCameraError(f"point depth {q[2]:.3g} m is not in front of the camera")
    return (camera.fx * q[0] / q[2] + camera.cx,
            camera.fy * q[1] / q[2] + camera.cy)


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """One output point per occupied voxel, at the centroid of its members.

    A point on a voxel boundary belongs to floor(coordinate / voxel_size).
    Voxels are emitted in sorted key order, so the result does not depend on
    the input point order. Intensity is averaged per voxel; the integer
    time-index and source-id attributes keep the per-voxel minimum.
    """
    if voxel_size <= 0.0:
        raise ValueError("voxel_size must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel_size).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                   return_counts=True)
    n_voxels = len(counts)
    sums = np.zeros((n_voxels, 3))
    np.add.at(sums, inverse, cloud.points)
    centroids = sums / counts[:, None]

    intensity = None
    if cloud.intensity is not None:
        acc = np.zeros(n_voxels)
        np.add.at(acc, inverse, cloud.intensity)
        intensity = acc / counts

    def int_min(values):
        if values is None:
            return None
        out = np.full(n_voxels, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(out, inverse, values)
        return out

    return PointCloud(centroids, intensity=intensity,
                      timestamp_ns=cloud.timestamp_ns,
                      time_index=int_min(cloud.time_index),
                      source_ids=int_min(cloud.source_ids),
                      source_node=cloud.source_node)
