import math

import numpy as np
import pytest

from conftest import monte_carlo_iou_3d, random_box, random_transform
from mvlidar.errors import BehindCameraError
from mvlidar.geometry import (
    Box3D,
    ObjectClass,
    PinholeCamera,
    PointCloud,
    RigidTransform,
    apply_transform,
    compose,
    iou_3d,
    iou_bev,
    project_pinhole,
    voxel_downsample,
    wrap_angle,
    wrap_half_angle,
)


def unit_cube(x=0.0, y=0.0, z=0.0, yaw=0.0, label=ObjectClass.CAR):
    return Box3D(center=(x, y, z), size=(1.0, 1.0, 1.0), yaw=yaw, label=label)


class TestTransforms:
    def test_identity_leaves_cloud_unchanged(self, rng):
        cloud = PointCloud(rng.normal(size=(50, 3)), intensity=rng.random(50))
        out = apply_transform(RigidTransform.identity(), cloud)
        np.testing.assert_array_equal(out.points, cloud.points)
        np.testing.assert_array_equal(out.intensity, cloud.intensity)

    def test_pure_translation(self):
        t = RigidTransform(np.eye(3), (1.0, 0.0, 0.0))
        out = apply_transform(t, PointCloud([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.points, [[1.0, 0.0, 0.0]])

    def test_quarter_turn_about_z(self):
        t = RigidTransform.from_yaw(math.pi / 2)
        np.testing.assert_allclose(t.apply(np.array([1.0, 0.0, 0.0])),
                                   [0.0, 1.0, 0.0], atol=1e-12)

    def test_compose_identity(self, rng):
        t = random_transform(rng)
        out = compose(RigidTransform.identity(), t)
        np.testing.assert_allclose(out.rotation, t.rotation)
        np.testing.assert_allclose(out.translation, t.translation)

    def test_compose_with_inverse_is_identity(self, rng):
        t = random_transform(rng)
        out = compose(t, t.inverse())
        np.testing.assert_allclose(out.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(out.translation, np.zeros(3), atol=1e-9)

    def test_compose_of_z_rotations_adds_angles(self):
        a = RigidTransform.from_yaw(math.radians(30))
        b = RigidTransform.from_yaw(math.radians(60))
        out = compose(a, b)
        np.testing.assert_allclose(out.rotation,
                                   RigidTransform.from_yaw(math.pi / 2).rotation,
                                   atol=1e-12)

    def test_compose_matches_sequential_application(self, rng):
        a, b = random_transform(rng), random_transform(rng)
        p = rng.normal(size=(20, 3))
        np.testing.assert_allclose(compose(a, b).apply(p), a.apply(b.apply(p)),
                                   atol=1e-9)

    def test_compose_associative(self, rng):
        a, b, c = (random_transform(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        np.testing.assert_allclose(left.rotation, right.rotation, atol=1e-9)
        np.testing.assert_allclose(left.translation, right.translation, atol=1e-9)

    def test_distances_preserved(self, rng):
        t = random_transform(rng)
        p, q = rng.normal(size=(2, 40, 3), scale=8.0)
        before = np.linalg.norm(p - q, axis=1)
        after = np.linalg.norm(t.apply(p) - t.apply(q), axis=1)
        np.testing.assert_allclose(after, before, atol=1e-9)

    def test_improper_rotation_rejected(self):
        reflection = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidTransform(reflection, np.zeros(3))


class TestPointCloud:
    def test_mismatched_attribute_length_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((4, 3)), intensity=np.zeros(3))

    def test_negative_timestamp_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((1, 3)), timestamp_ns=-1)

    def test_nonfinite_point_rejected(self):
        with pytest.raises(ValueError):
            PointCloud([[0.0, np.nan, 0.0]])


class TestIou3d:
    def test_self_iou_is_one(self, rng):
        for _ in range(20):
            box = random_box(rng)
            assert iou_3d(box, box) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_boxes(self):
        assert iou_3d(unit_cube(), unit_cube(x=10.0)) == 0.0

    def test_half_overlapping_unit_cubes(self):
        # oracle: Monte-Carlo point sampling; analytic value 0.5/1.5 = 1/3
        assert iou_3d(unit_cube(), unit_cube(x=0.5)) == pytest.approx(1.0 / 3.0,
                                                                      abs=1e-6)

    def test_symmetric(self, rng):
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            assert iou_3d(a, b) == pytest.approx(iou_3d(b, a), abs=1e-12)

    def test_bounded(self, rng):
        for _ in range(200):
            a = random_box(rng)
            b = random_box(rng, span=2.0)
            assert 0.0 <= iou_3d(a, b) <= 1.0

    def test_square_footprint_quarter_turn_symmetry(self):
        a = Box3D((0, 0, 0), (2.0, 2.0, 1.0), 0.0, ObjectClass.CAR)
        b = Box3D((0, 0, 0), (2.0, 2.0, 1.0), math.pi / 2, ObjectClass.CAR)
        assert iou_3d(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_matches_monte_carlo_oracle(self, rng):
        # denser acceptance run over 1000 pairs lives in test_acceptance
        for _ in range(100):
            a = random_box(rng, span=2.0)
            b = random_box(rng, span=2.0)
            assert iou_3d(a, b) == pytest.approx(
                monte_carlo_iou_3d(a, b, rng), abs=2e-3)

    def test_vertical_offset_only(self):
        a = unit_cube()
        b = unit_cube(z=0.5)
        # footprint identical, half vertical overlap
        assert iou_3d(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)


class TestIouBev:
    def test_identical(self):
        assert iou_bev(unit_cube(), unit_cube(z=100.0)) == pytest.approx(1.0)

    def test_disjoint(self):
        assert iou_bev(unit_cube(), unit_cube(y=5.0)) == 0.0

    def test_offset_squares(self):
        # oracle: shoelace on hand-clipped vertices -> 0.5 / 1.5
        assert iou_bev(unit_cube(), unit_cube(x=0.5)) == pytest.approx(1.0 / 3.0,
                                                                       abs=1e-6)

    def test_rotated_square_cross(self):
        # 45deg-rotated unit square over unit square: octagon, area 2(sqrt2 - 1)
        a = unit_cube()
        b = unit_cube(yaw=math.pi / 4)
        inter = 2.0 * (math.sqrt(2.0) - 1.0)
        assert iou_bev(a, b) == pytest.approx(inter / (2.0 - inter), abs=1e-9)


class TestProjection:
    def make_camera(self, extrinsic=None):
        return PinholeCamera(fx=1000.0, fy=1000.0, cx=500.0, cy=500.0,
                             extrinsic=extrinsic or RigidTransform.identity())

    def test_optical_axis(self):
        assert project_pinhole(self.make_camera(), (0.0, 0.0, 2.0)) == (500.0, 500.0)

    def test_off_axis(self):
        u, v = project_pinhole(self.make_camera(), (1.0, 0.0, 2.0))
        assert (u, v) == (1000.0, 500.0)

    def test_behind_camera(self):
        with pytest.raises(BehindCameraError):
            project_pinhole(self.make_camera(), (0.0, 0.0, -1.0))

    def test_extrinsic_applied_before_projection(self):
        cam = self.make_camera(RigidTransform(np.eye(3), (0.0, 0.0, 2.0)))
        assert project_pinhole(cam, (0.0, 0.0, 0.0)) == (500.0, 500.0)


class TestVoxelDownsample:
    def test_empty(self):
        out = voxel_downsample(PointCloud.empty(), 0.5)
        assert len(out) == 0

    def test_two_points_one_voxel(self):
        cloud = PointCloud([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
        out = voxel_downsample(cloud, 1.0)
        assert len(out) == 1
        np.testing.assert_allclose(out.points, [[0.05, 0.0, 0.0]])

    def test_output_voxel_keys_unique(self, rng):
        cloud = PointCloud(rng.uniform(-5.0, 5.0, size=(1000, 3)))
        out = voxel_downsample(cloud, 0.2)
        keys = np.floor(out.points / 0.2).astype(np.int64)
        # brute-force check: no two outputs share a voxel key
        assert len(np.unique(keys, axis=0)) == len(out)

    def test_permutation_invariant(self, rng):
        points = rng.uniform(-3.0, 3.0, size=(500, 3))
        perm = rng.permutation(500)
        a = voxel_downsample(PointCloud(points), 0.4)
        b = voxel_downsample(PointCloud(points[perm]), 0.4)
        np.testing.assert_allclose(a.points, b.points, atol=1e-12)

    def test_boundary_point_goes_to_floor_voxel(self):
        cloud = PointCloud([[1.0, 0.0, 0.0], [0.999, 0.0, 0.0]])
        out = voxel_downsample(cloud, 1.0)
        assert len(out) == 2

    def test_intensity_averaged(self):
        cloud = PointCloud([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]],
                           intensity=[10.0, 30.0])
        out = voxel_downsample(cloud, 1.0)
        np.testing.assert_allclose(out.intensity, [20.0])


class TestAngles:
    @pytest.mark.parametrize("angle,expected", [
        (0.0, 0.0),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (3 * math.pi / 2, -math.pi / 2),
        (2 * math.pi, 0.0),
    ])
    def test_wrap_angle(self, angle, expected):
        assert wrap_angle(angle) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("angle,expected", [
        (0.0, 0.0),
        (math.pi, 0.0),
        (math.pi / 2, math.pi / 2),
        (-math.pi / 2, math.pi / 2),
        (0.6 * math.pi, -0.4 * math.pi),
    ])
    def test_wrap_half_angle(self, angle, expected):
        assert wrap_half_angle(angle) == pytest.approx(expected, abs=1e-12)


class TestBoxValidation:
    def test_yaw_normalized(self):
        box = unit_cube(yaw=2 * math.pi + 0.3)
        assert box.yaw == pytest.approx(0.3)

    def test_nonpositive_size_rejected(self):
        with pytest.raises(ValueError):
            Box3D((0, 0, 0), (0.0, 1.0, 1.0), 0.0, ObjectClass.CAR)

    def test_label_coerced_from_string(self):
        assert unit_cube(label="Pedestrian").label is ObjectClass.PEDESTRIAN
