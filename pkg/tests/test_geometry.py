"""Projection model, scene sampling, metrics, and file formats."""

import math

import numpy as np
import pytest

from trifocal.errors import DegenerateGeometryError, InvalidInputError
from trifocal.geometry import (
    CHICAGO,
    CLEVELAND,
    CameraPose,
    Quaternion,
    SceneConfig,
    TrackTriplet,
    format_instance,
    format_tracks,
    generate_scene,
    generate_track_set,
    image_angle,
    image_coordinates,
    parse_instance,
    parse_tracks,
    pose_error,
    project,
    project_tangent,
    quaternion_from_rotation,
    reprojection_error,
    rotation_from_quaternion,
    triangulate_midpoint,
)


def random_pose(rng) -> CameraPose:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    t = rng.standard_normal(3)
    return CameraPose(Quaternion.from_array(q), t)


class TestRotationFromQuaternion:
    def test_identity(self):
        R = rotation_from_quaternion(Quaternion(1, 0, 0, 0))
        np.testing.assert_allclose(R, np.eye(3), atol=1e-15)

    def test_half_turn_about_x(self):
        R = rotation_from_quaternion(Quaternion(0, 1, 0, 0))
        np.testing.assert_allclose(R, np.diag([1.0, -1.0, -1.0]), atol=1e-15)

    def test_random_units_are_orthonormal(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            q = rng.standard_normal(4)
            q /= np.linalg.norm(q)
            R = rotation_from_quaternion(q)
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert abs(np.linalg.det(R) - 1.0) < 1e-12

    def test_sign_invariance(self):
        rng = np.random.default_rng(1)
        q = rng.standard_normal(4)
        np.testing.assert_allclose(
            rotation_from_quaternion(q), rotation_from_quaternion(-q), atol=1e-14
        )

    def test_zero_quaternion_rejected(self):
        with pytest.raises(InvalidInputError):
            rotation_from_quaternion(np.zeros(4))

    def test_round_trip_with_matrix(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            q = rng.standard_normal(4)
            q /= np.linalg.norm(q)
            R = rotation_from_quaternion(q)
            q2 = quaternion_from_rotation(R)
            np.testing.assert_allclose(
                rotation_from_quaternion(q2), R, atol=1e-12
            )


class TestProject:
    def test_on_axis(self):
        x, a = project(CameraPose.identity(), np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(x, [0, 0, 1], atol=1e-15)
        assert a == pytest.approx(1.0)

    def test_unit_normalization_keeps_equation_exact(self):
        x, a = project(CameraPose.identity(), np.array([1.0, 0.0, 2.0]))
        np.testing.assert_allclose(a * x, [1, 0, 2], atol=1e-15)
        assert a == pytest.approx(math.sqrt(5.0))
        assert np.linalg.norm(x) == pytest.approx(1.0)

    def test_depth_sign_tracks_chirality(self):
        x, a = project(CameraPose.identity(), np.array([0.3, -0.1, -2.0]))
        assert a < 0
        assert x[2] > 0

    def test_principal_plane_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            project(CameraPose.identity(), np.array([1.0, 1.0, 0.0]))

    def test_triangulation_round_trip(self):
        # two-view triangulation oracle for the projection model
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 100:
            # scene point in front of camera 1, second camera nearby
            X = rng.uniform(-0.02, 0.02, size=3) + np.array([0, 0, 1.0])
            pose2 = random_pose(rng)
            pose2 = CameraPose(pose2.q, pose2.t + np.array([0, 0, 1.5]))
            v2 = pose2.rotation() @ X + pose2.t
            if abs(v2[2]) < 0.2:
                continue
            x1, _ = project(CameraPose.identity(), X)
            x2, _ = project(pose2, X)
            rec = triangulate_midpoint(x1, x2, pose2)
            np.testing.assert_allclose(rec, X, atol=1e-10)
            checked += 1


class TestProjectTangent:
    def test_axis_case(self):
        d = project_tangent(
            CameraPose.identity(), np.array([0, 0, 1.0]), np.array([1.0, 0, 0])
        )
        np.testing.assert_allclose(d, [1, 0, 0], atol=1e-15)

    def test_ray_aligned_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            project_tangent(
                CameraPose.identity(), np.array([0, 0, 1.0]), np.array([0, 0, 1.0])
            )

    def test_finite_difference_oracle(self):
        # d must match the displacement direction of the projection of X + eta D
        rng = np.random.default_rng(4)
        eta = 1e-6
        checked = 0
        while checked < 1000:
            X = rng.uniform(-0.02, 0.02, size=3) + np.array([0, 0, 1.0])
            D = rng.standard_normal(3)
            D /= np.linalg.norm(D)
            pose = random_pose(rng)
            pose = CameraPose(pose.q, pose.t - pose.rotation() @ np.array([0, 0, -1.2]))
            ray = pose.rotation() @ X + pose.t
            if ray[2] < 0.2:
                continue
            sin_angle = np.linalg.norm(
                np.cross(ray / np.linalg.norm(ray), pose.rotation() @ D)
            )
            if sin_angle < 1e-2:
                continue
            d = project_tangent(pose, X, D)
            xa, _ = project(pose, X)
            xb, _ = project(pose, X + eta * D)
            fd = (xb - xa) / eta
            fd /= np.linalg.norm(fd)
            angle = math.acos(min(1.0, abs(float(np.dot(fd, d)))))
            assert angle < 1e-4
            checked += 1


class TestGenerateScene:
    def test_camera_separation(self):
        _, poses, _, _ = generate_scene(CHICAGO, SceneConfig(seed=42))
        centers = [-p.rotation().T @ p.t for p in poses]
        # camera 1 sits at the origin of its own frame; measure about the
        # scene center, which generate_scene places near the cube center
        scene, poses, _, _ = generate_scene(CHICAGO, SceneConfig(seed=42))
        center = scene.points.mean(axis=0)
        dirs = [(-p.rotation().T @ p.t) - center for p in poses]
        dirs = [d / np.linalg.norm(d) for d in dirs]
        for i in range(3):
            for j in range(i + 1, 3):
                ang = math.degrees(
                    math.acos(np.clip(np.dot(dirs[i], dirs[j]), -1, 1))
                )
                assert ang >= 15.0 - 1e-6

    def test_structure_chicago(self):
        _, _, inst, gt = generate_scene(CHICAGO, SceneConfig(seed=1))
        assert inst.points.shape == (3, 3, 3)
        assert inst.tangents.shape == (3, 2, 3)
        assert inst.verification_tangents.shape == (3, 3)
        assert gt.depths.shape == (3, 3)
        assert np.all(gt.depths > 0)

    def test_structure_cleveland(self):
        _, _, inst, gt = generate_scene(CLEVELAND, SceneConfig(seed=1))
        assert inst.lines.shape == (3, 3)
        # observed line contains the projected line points
        line = gt.scene.line
        for v, pose in enumerate([CameraPose.identity(), *gt.poses]):
            x, _ = project(pose, line.P)
            assert abs(np.dot(inst.lines[v], x)) < 1e-12

    def test_zero_volume_collapses_points(self):
        scene, _, _, _ = generate_scene(CHICAGO, SceneConfig(seed=5, volume_side=0.0))
        assert np.allclose(scene.points[0], scene.points[1])
        assert np.allclose(scene.points[0], scene.points[2])

    def test_determinism(self):
        _, _, a, ga = generate_scene(CHICAGO, SceneConfig(seed=9))
        _, _, b, gb = generate_scene(CHICAGO, SceneConfig(seed=9))
        assert format_instance(a, ga) == format_instance(b, gb)

    def test_sampling_exhaustion(self):
        from trifocal.errors import SceneSamplingError

        impossible = SceneConfig(seed=1, min_separation_deg=179.0, max_attempts=50)
        with pytest.raises(SceneSamplingError):
            generate_scene(CHICAGO, impossible)


class TestPoseError:
    def test_zero_for_equal(self):
        rng = np.random.default_rng(7)
        pair = (random_pose(rng), random_pose(rng))
        assert pose_error(pair, pair) == (0.0, 0.0)

    def test_known_rotation_offset(self):
        rng = np.random.default_rng(8)
        gt = (random_pose(rng), random_pose(rng))
        dq = Quaternion(math.cos(0.05), 0.0, 0.0, math.sin(0.05))  # 0.1 rad about z
        Rz = rotation_from_quaternion(dq)
        est = (
            CameraPose.from_matrix(Rz @ gt[0].rotation(), gt[0].t),
            gt[1],
        )
        rot, tr = pose_error(est, gt)
        assert rot == pytest.approx(0.1, abs=1e-12)
        assert tr == pytest.approx(0.0, abs=1e-12)

    def test_translation_scale_invariance(self):
        rng = np.random.default_rng(9)
        gt = (random_pose(rng), random_pose(rng))
        est = tuple(CameraPose(p.q, 7.0 * p.t) for p in gt)
        rot, tr = pose_error(est, gt)
        assert rot == 0.0 and tr == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(10)
        a = (random_pose(rng), random_pose(rng))
        b = (random_pose(rng), random_pose(rng))
        assert pose_error(a, b) == pytest.approx(pose_error(b, a))

    def test_zero_translation_rejected(self):
        rng = np.random.default_rng(11)
        p = random_pose(rng)
        z = CameraPose(p.q, np.zeros(3))
        with pytest.raises(InvalidInputError):
            pose_error((z, p), (p, p))


class TestReprojectionError:
    def test_noiseless_track(self):
        tracks, poses, _ = generate_track_set(SceneConfig(seed=12), 5)
        for tr in tracks:
            assert reprojection_error(poses[1], poses[2], tr) < 1e-8

    def test_one_pixel_displacement(self):
        tracks, poses, _ = generate_track_set(SceneConfig(seed=13), 1)
        tr = tracks[0]
        uv = tr.uv.copy()
        uv[2, 0] += 1e-3  # one pixel at 1000 px per unit
        moved = TrackTriplet(uv=uv, orientations=tr.orientations)
        err = reprojection_error(poses[1], poses[2], moved, pixels_per_unit=1000.0)
        assert err == pytest.approx(1.0, abs=1e-8)

    def test_parallel_rays_rejected(self):
        tr = TrackTriplet(uv=np.zeros((3, 2)))
        with pytest.raises(DegenerateGeometryError):
            reprojection_error(CameraPose.identity(), CameraPose.identity(), tr)


class TestFileFormats:
    def test_instance_round_trip(self):
        _, _, inst, gt = generate_scene(CHICAGO, SceneConfig(seed=20))
        text = format_instance(inst, gt)
        parsed, gt_poses = parse_instance(text)
        np.testing.assert_array_equal(parsed.points, inst.points)
        np.testing.assert_array_equal(parsed.tangents, inst.tangents)
        np.testing.assert_array_equal(
            parsed.verification_tangents, inst.verification_tangents
        )
        assert gt_poses is not None
        for got, want in zip(gt_poses, gt.poses):
            np.testing.assert_array_equal(got.t, want.t)
            assert got.q == want.q

    def test_instance_round_trip_cleveland(self):
        _, _, inst, _ = generate_scene(CLEVELAND, SceneConfig(seed=21))
        parsed, gt_poses = parse_instance(format_instance(inst))
        np.testing.assert_array_equal(parsed.lines, inst.lines)
        assert gt_poses is None

    def test_instance_comments_ignored(self):
        _, _, inst, _ = generate_scene(CLEVELAND, SceneConfig(seed=22))
        text = "# header comment\n" + format_instance(inst)
        parsed, _ = parse_instance(text)
        np.testing.assert_array_equal(parsed.points, inst.points)

    def test_bad_kind_rejected(self):
        with pytest.raises(InvalidInputError):
            parse_instance("detroit\n")

    def test_tracks_round_trip(self):
        tracks, _, _ = generate_track_set(SceneConfig(seed=23), 7)
        parsed = parse_tracks(format_tracks(tracks))
        assert len(parsed) == len(tracks)
        for got, want in zip(parsed, tracks):
            np.testing.assert_array_equal(got.uv, want.uv)
            np.testing.assert_array_equal(got.orientations, want.orientations)

    def test_tracks_without_orientation(self):
        text = "t 1  0.1 0.2  0.3 0.4  0.5 0.6\n"
        parsed = parse_tracks(text)
        assert len(parsed) == 1
        assert not parsed[0].oriented


class TestTrackGeometry:
    def test_track_tangent_angle_round_trip(self):
        tracks, _, _ = generate_track_set(SceneConfig(seed=24), 4)
        for tr in tracks:
            for v in range(3):
                x = tr.point(v)
                d = tr.tangent(v)
                angle = image_angle(x, d)
                delta = (angle - tr.orientations[v] + math.pi / 2) % math.pi - math.pi / 2
                assert abs(delta) < 1e-12

    def test_image_coordinates(self):
        x = np.array([0.2, -0.4, 2.0])
        np.testing.assert_allclose(image_coordinates(x), [0.1, -0.2])
