"""Non-learned baseline 3D detector.

Pipeline: RANSAC ground-plane removal (near-horizontal planes only), then
Euclidean distance clustering, then a minimum-area oriented rectangle per
cluster (rotating calipers over the BEV convex hull). The class label comes
from per-class size priors and the score from the normalized point count,
which is monotone in visibility: exactly the signal multi-view fusion
recovers when a single view is occluded.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import DegenerateClusterError, NoGroundPlaneError
from .geometry import Box3D, ObjectClass, PointCloud, wrap_angle

# (length range, width range, height range) per class; footprint areas are
# disjoint so at most one prior can match
DEFAULT_SIZE_PRIORS = {
    ObjectClass.CAR: ((3.0, 6.5), (1.4, 2.3), (1.0, 2.3)),
    ObjectClass.CYCLIST: ((1.2, 2.6), (0.7, 1.2), (1.0, 2.1)),
    ObjectClass.PEDESTRIAN: ((0.2, 0.9), (0.2, 0.9), (0.9, 2.1)),
}

_MAX_GROUND_TILT_DEG = 15.0


class NoGroundPlaneWarning(UserWarning):
    """detect_frame found no ground plane and returned no detections."""


@dataclass(frozen=True)
class DetectorConfig:
    ground_distance_threshold: float = 0.15
    ransac_ground_iterations: int = 200
    cluster_distance: float = 0.5
    min_cluster_points: int = 15
    size_priors: dict = field(default_factory=lambda: dict(DEFAULT_SIZE_PRIORS))
    score_points_scale: float = 200.0
    # off when the caller already removed static structure (background
    # subtraction strips the ground along with everything else static)
    ground_removal: bool = True
    # when set, boxes whose lowest point is within 1 m of this ground height
    # are extended down to it (objects stand on the ground; subtraction and
    # grazing rays erode their lower parts)
    ground_z: Optional[float] = None
    # thinner fits are sheet fragments (wall slivers at occlusion borders),
    # not objects
    min_box_width: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if min(self.ground_distance_threshold, self.cluster_distance) <= 0.0:
            raise ValueError("distance thresholds must be positive")
        if self.min_cluster_points < 1:
            raise ValueError("min_cluster_points must be >= 1")


def subtract_background(cloud: PointCloud, background: PointCloud,
                        distance: float = 0.5) -> PointCloud:
    """Drop points within ``distance`` of a static background cloud.

    The background is the reference scan of the empty scene; what survives
    is the dynamic content. Essential for geometric detection wherever the
    scene's static clutter is the same shape and size as the targets.
    """
    if len(cloud) == 0 or len(background) == 0:
        return cloud
    tree = cKDTree(background.points)
    nearest, _ = tree.query(cloud.points, distance_upper_bound=distance)
    return cloud.select(~np.isfinite(nearest))


def remove_ground(cloud: PointCloud, cfg: DetectorConfig = DetectorConfig()
                  ) -> tuple[PointCloud, PointCloud]:
    """Split a cloud into (ground, non_ground) by a RANSAC plane fit.

    Only planes whose normal is within 15 degrees of vertical are accepted.
    The partition is exact: every input point lands in exactly one side.
    Raises NoGroundPlaneError when no near-horizontal plane reaches a
    3-point consensus.
    """
    if len(cloud) == 0:
        raise ValueError("cloud must be nonempty")
    points = cloud.points
    n = len(points)
    rng = np.random.default_rng(cfg.seed)
    cos_tilt = math.cos(math.radians(_MAX_GROUND_TILT_DEG))

    best_count = 0
    best_mask = None
    if n >= 3:
        samples = rng.integers(0, n, size=(cfg.ransac_ground_iterations, 3))
        for i, j, k in samples:
            if i == j or j == k or i == k:
                continue
            normal = np.cross(points[j] - points[i], points[k] - points[i])
            norm = np.linalg.norm(normal)
            if norm < 1e-12:
                continue
            normal = normal / norm
            if abs(normal[2]) < cos_tilt:
                continue
            distances = np.abs((points - points[i]) @ normal)
            mask = distances <= cfg.ground_distance_threshold
            count = int(mask.sum())
            if count > best_count:
                best_count, best_mask = count, mask

    if best_mask is None or best_count < 3:
        raise NoGroundPlaneError("no near-horizontal plane consensus")

    # refine on the consensus set; keep the refit only if still near-vertical
    inliers = points[best_mask]
    centroid = inliers.mean(axis=0)
    _, _, vt = np.linalg.svd(inliers - centroid, full_matrices=False)
    normal = vt[2]
    if abs(normal[2]) >= cos_tilt:
        distances = np.abs((points - centroid) @ normal)
        refined = distances <= cfg.ground_distance_threshold
        if refined.sum() >= best_count:
            best_mask = refined

    return cloud.select(best_mask), cloud.select(~best_mask)


def cluster_euclidean(cloud: PointCloud, cfg: DetectorConfig = DetectorConfig()
                      ) -> list:
    """Connected components under inter-point distance <= cluster_distance.

    Components with fewer than min_cluster_points points are discarded.
    Clusters come back largest first (ties broken by their smallest point
    index), so the output is invariant to input permutation up to that
    canonical order.
    """
    n = len(cloud)
    if n == 0:
        return []
    tree = cKDTree(cloud.points)
    pairs = tree.query_pairs(cfg.cluster_distance, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs), dtype=np.int8),
                        (pairs[:, 0].astype(np.int32),
                         pairs[:, 1].astype(np.int32))),
                       shape=(n, n))
    _, labels = connected_components(graph, directed=False)

    order = np.argsort(labels, kind="stable")
    boundaries = np.flatnonzero(np.diff(labels[order])) + 1
    members = [idx for idx in np.split(order, boundaries)
               if len(idx) >= cfg.min_cluster_points]
    members.sort(key=lambda idx: (-len(idx), int(idx.min())))
    return [cloud.select(idx) for idx in members]


def _min_area_rectangle(bev: np.ndarray):
    """(yaw, length, width, center_xy) of the minimum-area oriented rectangle.

    Rotating calipers over the convex hull: the optimal rectangle is flush
    with one hull edge. Length is the longer side and yaw points along it.
    """
    try:
        hull = ConvexHull(bev)
    except QhullError as exc:
        raise DegenerateClusterError("cluster is collinear in BEV") from exc
    hull_pts = bev[hull.vertices]
    edges = np.roll(hull_pts, -1, axis=0) - hull_pts
    angles = np.arctan2(edges[:, 1], edges[:, 0])

    best = None
    for angle in angles:
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, s], [-s, c]])  # rotate by -angle
        local = hull_pts @ rot.T
        lo, hi = local.min(axis=0), local.max(axis=0)
        extent = hi - lo
        area = float(extent[0] * extent[1])
        if best is None or area < best[0] - 1e-12:
            center_local = 0.5 * (lo + hi)
            center = rot.T @ center_local
            best = (area, angle, float(extent[0]), float(extent[1]), center)

    _, angle, ex, ey, center = best
    if ex >= ey:
        return wrap_angle(angle), ex, ey, center
    return wrap_angle(angle + 0.5 * math.pi), ey, ex, center


def _classify_by_size(length, width, height, footprint_priors) -> ObjectClass:
    for label, (l_range, w_range, h_range) in footprint_priors.items():
        if (l_range[0] <= length <= l_range[1]
                and w_range[0] <= width <= w_range[1]
                and h_range[0] <= height <= h_range[1]):
            return label
    return ObjectClass.PEDESTRIAN if length * width < 1.0 else ObjectClass.CAR


def fit_oriented_box(cluster: PointCloud,
                     cfg: DetectorConfig = DetectorConfig()) -> Box3D:
    """Fit a yaw-oriented box around a cluster.

    Yaw and footprint come from the minimum-area rectangle of the BEV
    convex hull, the vertical extent from the z range. Raises
    DegenerateClusterError for clusters collinear in BEV.
    """
    if len(cluster) < 3:
        raise DegenerateClusterError("need at least 3 points to fit a box")
    yaw, length, width, center_xy = _min_area_rectangle(cluster.points[:, :2])
    if width < cfg.min_box_width:
        raise DegenerateClusterError(
            f"cluster is a {width:.2f} m sheet, not an object")
    z_min = float(cluster.points[:, 2].min())
    z_max = float(cluster.points[:, 2].max())
    if cfg.ground_z is not None and 0.0 < z_min - cfg.ground_z < 1.0:
        z_min = cfg.ground_z
    height = max(z_max - z_min, 1e-3)
    width = max(width, 1e-3)
    label = _classify_by_size(length, width, height, cfg.size_priors)
    score = min(1.0, max(0.05, len(cluster) / cfg.score_points_scale))
    return Box3D(center=(center_xy[0], center_xy[1], 0.5 * (z_min + z_max)),
                 size=(length, width, height), yaw=yaw, label=label,
                 score=score)


def detect_frame(cloud: PointCloud,
                 cfg: DetectorConfig = DetectorConfig()) -> list:
    """Ground removal, clustering, and box fitting for one frame.

    Returns the fitted boxes. When no ground plane is found the frame
    yields no detections and a NoGroundPlaneWarning is emitted instead of
    an error. Deterministic given cfg.seed.
    """
    if len(cloud) == 0:
        return []
    if cfg.ground_removal:
        try:
            _, non_ground = remove_ground(cloud, cfg)
        except NoGroundPlaneError as exc:
            warnings.warn(str(exc), NoGroundPlaneWarning, stacklevel=2)
            return []
    else:
        non_ground = cloud
    boxes = []
    for cluster in cluster_euclidean(non_ground, cfg):
        try:
            boxes.append(fit_oriented_box(cluster, cfg))
        except DegenerateClusterError:
            continue
    return boxes
