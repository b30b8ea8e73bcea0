import numpy as np
import pytest

from pedbench.errors import BehindCamera, DegenerateBox, FullyBehindCamera
from pedbench.geometry import (
    Box3D,
    CameraModel,
    PixelBox,
    attach_crops,
    expand_crop,
    identity_camera,
    project_box,
    project_point,
)
from pedbench.tracks import RawSample, RawTrack, match_camera_frames, resample_track

CAM = identity_camera(fx=1000.0, fy=1000.0, cx=800.0, cy=450.0)


def brute_force_pixel_box(cam, center, size, yaw):
    """Independent oracle: enumerate the 8 corners explicitly and project each."""
    l, w, h = size
    us, vs = [], []
    for sx in (-0.5, 0.5):
        for sy in (-0.5, 0.5):
            for sz in (-0.5, 0.5):
                # yaw rotation about the vertical axis, written out longhand
                bx, by, bz = sx * l, sy * w, sz * h
                wx = center[0] + bx * np.cos(yaw) - by * np.sin(yaw)
                wy = center[1] + bx * np.sin(yaw) + by * np.cos(yaw)
                wz = center[2] + bz
                p = cam.rotation @ np.array([wx, wy, wz]) + cam.translation
                if p[2] > 1e-6:
                    us.append(cam.fx * p[0] / p[2] + cam.cx)
                    vs.append(cam.fy * p[1] / p[2] + cam.cy)
    return min(us), min(vs), max(us), max(vs)


class TestProjectPoint:
    def test_optical_axis_hits_principal_point(self):
        assert project_point(CAM, [0.0, 0.0, 10.0]) == (800.0, 450.0)

    def test_offset_point(self):
        # u = fx * x/z + cx = 1000 * (1/10) + 800
        u, v = project_point(CAM, [1.0, 0.0, 10.0])
        assert u == pytest.approx(900.0, abs=1e-12)
        assert v == pytest.approx(450.0, abs=1e-12)

    def test_behind_camera(self):
        with pytest.raises(BehindCamera):
            project_point(CAM, [0.0, 0.0, -1.0])

    def test_round_trip_through_inverse_pinhole(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            u = rng.uniform(0, 1600)
            v = rng.uniform(0, 900)
            z = rng.uniform(0.5, 60.0)
            point = np.array([(u - CAM.cx) * z / CAM.fx, (v - CAM.cy) * z / CAM.fy, z])
            uu, vv = project_point(CAM, point)
            assert abs(uu - u) < 1e-9 and abs(vv - v) < 1e-9

    def test_rotation_must_be_orthonormal(self):
        with pytest.raises(ValueError):
            CameraModel(
                fx=1.0, fy=1.0, cx=0.0, cy=0.0,
                rotation=np.eye(3) * 1.001, translation=np.zeros(3), image_size=(10, 10),
            )


class TestProjectBox:
    def test_unit_cube_on_optical_axis(self):
        box = Box3D(center=np.array([0.0, 0.0, 10.0]), size=np.array([1.0, 1.0, 1.0]), yaw=0.0)
        got = project_box(CAM, box)
        expected = brute_force_pixel_box(CAM, box.center, box.size, box.yaw)
        assert got.u_min == pytest.approx(expected[0], abs=1e-9)
        assert got.v_min == pytest.approx(expected[1], abs=1e-9)
        assert got.u_max == pytest.approx(expected[2], abs=1e-9)
        assert got.v_max == pytest.approx(expected[3], abs=1e-9)
        # the near face at depth 9.5 dominates: u span = 800 +/- 1000*0.5/9.5
        assert got.u_min == pytest.approx(747.3684210526316, abs=1e-9)
        assert got.u_max == pytest.approx(852.6315789473684, abs=1e-9)
        assert got.u_min == pytest.approx(747.37, abs=0.005)
        assert got.u_max == pytest.approx(852.63, abs=0.005)

    def test_square_footprint_yaw_symmetry(self):
        size = np.array([0.8, 0.8, 1.8])
        center = np.array([2.0, 1.0, 12.0])
        a = project_box(CAM, Box3D(center=center, size=size, yaw=0.0))
        b = project_box(CAM, Box3D(center=center, size=size, yaw=np.pi / 2))
        for attr in ("u_min", "v_min", "u_max", "v_max"):
            assert getattr(a, attr) == pytest.approx(getattr(b, attr), abs=1e-9)

    def test_fully_behind_camera(self):
        box = Box3D(center=np.array([0.0, 0.0, -5.0]), size=np.array([1.0, 1.0, 1.0]), yaw=0.0)
        with pytest.raises(FullyBehindCamera):
            project_box(CAM, box)

    def test_projected_corners_always_contained(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            box = Box3D(
                center=np.array([rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(3, 40)]),
                size=rng.uniform(0.2, 2.5, size=3),
                yaw=rng.uniform(-np.pi, np.pi),
            )
            got = project_box(CAM, box)
            u_min, v_min, u_max, v_max = brute_force_pixel_box(CAM, box.center, box.size, box.yaw)
            assert got.u_min <= u_min + 1e-9 and got.u_max >= u_max - 1e-9
            assert got.v_min <= v_min + 1e-9 and got.v_max >= v_max - 1e-9

    def test_matches_brute_force_with_general_extrinsics(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            # random small rotation via Rodrigues' formula
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-0.4, 0.4)
            k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
            rot = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
            cam = CameraModel(
                fx=1200.0, fy=1100.0, cx=810.0, cy=440.0,
                rotation=rot, translation=rng.uniform(-1, 1, size=3), image_size=(1600, 900),
            )
            box = Box3D(
                center=np.array([rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(8, 30)]),
                size=rng.uniform(0.3, 2.0, size=3),
                yaw=rng.uniform(-np.pi, np.pi),
            )
            got = project_box(cam, box)
            expected = brute_force_pixel_box(cam, box.center, box.size, box.yaw)
            np.testing.assert_allclose(
                [got.u_min, got.v_min, got.u_max, got.v_max], expected, atol=1e-9
            )


class TestExpandCrop:
    def test_doubles_largest_dimension(self):
        box = PixelBox(u_min=100, v_min=200, u_max=150, v_max=300)  # w=50, h=100
        crop = expand_crop(box, factor=2.0)
        assert crop.center_u == 125.0 and crop.center_v == 250.0
        assert crop.side == 200.0
        # corners (25,150)-(225,350)
        assert crop.center_u - crop.side / 2 == 25.0
        assert crop.center_v + crop.side / 2 == 350.0

    def test_square_box(self):
        box = PixelBox(u_min=0, v_min=0, u_max=7, v_max=7)
        crop = expand_crop(box, factor=2.0)
        assert crop.side == 14.0
        assert (crop.center_u, crop.center_v) == (3.5, 3.5)

    def test_degenerate(self):
        with pytest.raises(DegenerateBox):
            expand_crop(PixelBox(u_min=1, v_min=2, u_max=1, v_max=2))

    def test_contains_input_and_is_square(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            u0, v0 = rng.uniform(-50, 1600, size=2)
            w, h = rng.uniform(0.1, 300, size=2)
            box = PixelBox(u_min=u0, v_min=v0, u_max=u0 + w, v_max=v0 + h)
            crop = expand_crop(box, factor=2.0)
            half = crop.side / 2
            assert crop.center_u - half <= box.u_min and crop.center_u + half >= box.u_max
            assert crop.center_v - half <= box.v_min and crop.center_v + half >= box.v_max


class TestAttachCrops:
    def make_track(self):
        # pedestrian walking across the camera's field of view at z(depth-ish) held in y
        samples = tuple(
            RawSample(
                timestamp_us=int(t * 1e6),
                position=np.array([x, 0.9, 10.0 + x]),
                box_size=np.array([0.6, 0.6, 1.8]),
                yaw=0.0,
            )
            for t, x in [(0.0, -1.0), (0.5, -0.5), (1.0, 0.0), (1.5, 0.5)]
        )
        return RawTrack(agent_id="p1", camera_view="front", samples=samples)

    def test_crops_attached_where_frames_matched(self):
        # camera looking along world +y: depth = world y
        rot = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
        cam = CameraModel(fx=1000, fy=1000, cx=800, cy=450, rotation=rot, translation=np.zeros(3), image_size=(1600, 900))
        raw = self.make_track()
        track = resample_track(raw, rate=10.0)
        frames = [(f"fr{i}", i * 100_000) for i in range(16)]
        track = match_camera_frames(track, frames)
        out = attach_crops(track, raw, cam)
        assert all(ref is not None and ref.crop is not None for ref in out.frame_refs)
        for ref in out.frame_refs:
            assert ref.crop.side > 0

    def test_behind_camera_steps_keep_ref_without_crop(self):
        cam = CAM  # looks along +z; the track's z is ~10+x, y is depth... make depth negative
        samples = tuple(
            RawSample(timestamp_us=int(t * 1e6), position=np.array([0.0, 0.0, -5.0]), box_size=np.array([0.6, 0.6, 1.8]), yaw=0.0)
            for t in (0.0, 0.5, 1.0)
        )
        raw = RawTrack(agent_id="p2", camera_view="front", samples=samples)
        track = match_camera_frames(resample_track(raw, rate=10.0), [("f0", 0), ("f1", 500_000), ("f2", 1_000_000)])
        out = attach_crops(track, raw, CAM)
        assert all(ref is None or ref.crop is None for ref in out.frame_refs)

    def test_no_frames_is_identity(self):
        raw = self.make_track()
        track = resample_track(raw, rate=10.0)
        assert attach_crops(track, raw, CAM) is track
