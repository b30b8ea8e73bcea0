import numpy as np
import pytest

from pedbench.errors import NonMonotonicTimestamps, TooFewSamples
from pedbench.tracks import (
    RawSample,
    RawTrack,
    estimate_kinematics,
    match_camera_frames,
    resample_track,
)

BOX = (0.6, 0.6, 1.8)


def make_raw(times_s, xs, ys=None, zs=None, agent="a1", view="front"):
    ys = ys if ys is not None else [0.0] * len(times_s)
    zs = zs if zs is not None else [0.0] * len(times_s)
    samples = tuple(
        RawSample(timestamp_us=int(round(t * 1e6)), position=np.array([x, y, z]), box_size=np.array(BOX), yaw=0.0)
        for t, x, y, z in zip(times_s, xs, ys, zs)
    )
    return RawTrack(agent_id=agent, camera_view=view, samples=samples)


class TestResample:
    def test_linear_interpolation(self):
        track = make_raw([0.0, 0.5], [0.0, 1.0])
        out = resample_track(track, rate=10.0, mode="anti_causal_linear")
        k = np.where(out.timestamps_us == 200_000)[0][0]
        assert out.positions[k, 0] == pytest.approx(0.4, abs=1e-12)

    def test_causal_hold(self):
        track = make_raw([0.0, 0.5], [0.0, 1.0])
        out = resample_track(track, rate=10.0, mode="causal_hold")
        k = np.where(out.timestamps_us == 200_000)[0][0]
        assert out.positions[k, 0] == 0.0

    def test_raw_on_grid_is_identity(self):
        times = [0.0, 0.1, 0.2, 0.3]
        xs = [0.0, 0.5, 0.3, 0.9]
        track = make_raw(times, xs)
        for mode in ("anti_causal_linear", "causal_hold"):
            out = resample_track(track, rate=10.0, mode=mode)
            assert len(out) == 4
            np.testing.assert_allclose(out.positions[:, 0], xs, atol=1e-12)

    def test_grid_alignment_and_span(self):
        track = make_raw([0.05, 1.27], [0.0, 1.0])
        out = resample_track(track, rate=10.0)
        assert out.timestamps_us[0] == 50_000
        assert out.timestamps_us[-1] == 1_250_000  # no extrapolation past the raw span
        assert np.all(np.diff(out.timestamps_us) == 100_000)

    def test_drops_vertical_axis(self):
        track = make_raw([0.0, 1.0], [1.0, 2.0], ys=[3.0, 4.0], zs=[5.0, 9.0])
        out = resample_track(track, rate=10.0)
        assert out.positions.shape[1] == 2
        assert out.positions[0, 0] == 1.0 and out.positions[0, 1] == 3.0

    def test_too_few_samples(self):
        track = make_raw([0.0], [0.0])
        with pytest.raises(TooFewSamples):
            resample_track(track)

    def test_non_monotonic(self):
        track = make_raw([0.0, 0.5, 0.4], [0.0, 1.0, 2.0])
        with pytest.raises(NonMonotonicTimestamps):
            resample_track(track)

    def test_bad_rate_rejected(self):
        track = make_raw([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(ValueError):
            resample_track(track, rate=3.0)  # 1e6/3 is not a whole microsecond

    def test_exact_on_affine_tracks(self):
        # linear interpolation must reproduce any affine function of time exactly
        rng = np.random.default_rng(7)
        for _ in range(50):
            t_us = np.sort(rng.choice(10_000_000, size=int(rng.integers(2, 8)), replace=False))
            t = t_us / 1e6
            a = rng.uniform(-2, 2, size=2)
            b = rng.uniform(-5, 5, size=2)
            track = make_raw(t, a[0] * t + b[0], ys=a[1] * t + b[1])
            out = resample_track(track, rate=10.0, mode="anti_causal_linear")
            ts = out.timestamps_us / 1e6
            expected = np.stack([a[0] * ts + b[0], a[1] * ts + b[1]], axis=1)
            assert np.max(np.abs(out.positions - expected)) < 1e-9

    def test_causal_prefix_stable_under_truncation(self):
        # deleting raw samples strictly after t never changes the causal output at t
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(3, 9))
            t = np.cumsum(rng.uniform(0.2, 0.8, size=n))
            xs = rng.uniform(-5, 5, size=n)
            track = make_raw(t, xs)
            full = resample_track(track, rate=10.0, mode="causal_hold")
            cut = int(rng.integers(2, n))
            truncated = make_raw(t[:cut], xs[:cut])
            part = resample_track(truncated, rate=10.0, mode="causal_hold")
            m = len(part)
            np.testing.assert_array_equal(full.positions[:m], part.positions)


class TestMatchCameraFrames:
    FRAMES = [("f0", 80_000), ("f1", 180_000)]

    def match_single(self, step_us, frames=None, max_gap_us=60_000):
        track = resample_track(make_raw([step_us / 1e6 - 0.1, step_us / 1e6], [0.0, 1.0]), rate=10.0)
        out = match_camera_frames(track, frames or self.FRAMES, max_gap_us=max_gap_us)
        return out.frame_refs[-1]

    def test_nearest(self):
        ref = self.match_single(100_000)
        assert ref is not None and ref.frame_token == "f0"

    def test_tie_goes_to_earlier_frame(self):
        ref = self.match_single(130_000)
        assert ref is not None and ref.frame_token == "f0"

    def test_gap_exceeded(self):
        assert self.match_single(400_000) is None

    def test_idempotent_and_within_gap(self):
        rng = np.random.default_rng(5)
        frames = [(f"f{i}", int(v)) for i, v in enumerate(np.sort(rng.integers(0, 3_000_000, size=20)))]
        track = resample_track(make_raw([0.0, 2.9], [0.0, 1.0]), rate=10.0)
        once = match_camera_frames(track, frames)
        twice = match_camera_frames(once, frames)
        assert once.frame_refs == twice.frame_refs
        for step_ts, ref in zip(once.timestamps_us, once.frame_refs):
            if ref is not None:
                assert abs(ref.frame_timestamp_us - int(step_ts)) <= 60_000

    def test_no_frames(self):
        track = resample_track(make_raw([0.0, 0.5], [0.0, 1.0]), rate=10.0)
        out = match_camera_frames(track, [])
        assert all(ref is None for ref in out.frame_refs)


class TestEstimateKinematics:
    def grid(self, n=10, rate=10.0):
        return (np.arange(n) * 1e6 / rate).astype(np.int64)

    def test_exact_linear_fit(self):
        ts = self.grid()
        pos = np.stack([ts / 1e6, np.zeros(len(ts))], axis=1)  # x(t) = t
        state = estimate_kinematics(ts, pos)
        np.testing.assert_allclose(state.velocity, [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(state.acceleration, [0.0, 0.0], atol=1e-12)

    def test_quadratic_reproduces_generator_derivative(self):
        # oracle: analytic derivative of x(t) = 0.5 t^2 at the last sample time.
        # with the window ending at t = 0 the derivative there is 0 and the
        # curvature gives the full acceleration.
        ts = (np.arange(-9, 1) * 100_000).astype(np.int64)  # t in [-0.9, 0] s
        t = ts / 1e6
        pos = np.stack([0.5 * t**2, np.zeros(len(t))], axis=1)
        state = estimate_kinematics(ts, pos)
        np.testing.assert_allclose(state.velocity, [0.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(state.acceleration, [1.0, 0.0], atol=1e-9)

    def test_random_quadratics_to_1e9(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            ts = self.grid()
            t_end = ts[-1] / 1e6
            coeffs = rng.uniform(-3, 3, size=(3, 2))  # c0 + c1 t + c2 t^2 per axis
            t = ts[:, None] / 1e6
            pos = coeffs[0] + coeffs[1] * t + coeffs[2] * t**2
            state = estimate_kinematics(ts, pos)
            v_true = coeffs[1] + 2 * coeffs[2] * t_end
            a_true = 2 * coeffs[2]
            assert np.max(np.abs(state.velocity - v_true)) < 1e-9
            assert np.max(np.abs(state.acceleration - a_true)) < 1e-9

    def test_stationary(self):
        ts = self.grid()
        pos = np.ones((len(ts), 2)) * 4.2
        state = estimate_kinematics(ts, pos)
        np.testing.assert_allclose(state.velocity, [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(state.acceleration, [0.0, 0.0], atol=1e-12)
        assert state.heading is None
        assert state.speed == pytest.approx(0.0, abs=1e-12)

    def test_two_points_finite_difference(self):
        ts = np.array([0, 500_000], dtype=np.int64)
        pos = np.array([[0.0, 0.0], [1.0, 0.5]])
        state = estimate_kinematics(ts, pos)
        np.testing.assert_allclose(state.velocity, [2.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(state.acceleration, [0.0, 0.0])

    def test_too_few_points(self):
        with pytest.raises(TooFewSamples):
            estimate_kinematics(np.array([0]), np.array([[0.0, 0.0]]))

    def test_heading_from_velocity(self):
        ts = self.grid()
        t = ts[:, None] / 1e6
        pos = np.concatenate([t, t], axis=1)  # moving along (1, 1)
        state = estimate_kinematics(ts, pos)
        assert state.heading == pytest.approx(np.pi / 4, abs=1e-9)
        assert state.speed == pytest.approx(np.sqrt(2), abs=1e-9)

    def test_heading_carried_from_recent_moving_step(self):
        # one early step along +y, then a long freeze: the fitted end velocity
        # drops below the heading threshold, so the heading comes from the
        # most recent step that moved fast enough
        ts = self.grid(n=16)
        y = np.concatenate([[0.0], np.full(15, 0.05)])
        pos = np.stack([np.zeros(16), y], axis=1)
        state = estimate_kinematics(ts, pos)
        assert state.speed < 0.1
        assert state.heading == pytest.approx(np.pi / 2, abs=1e-9)

    def test_position_is_last_history_point(self):
        ts = self.grid()
        rng = np.random.default_rng(0)
        pos = rng.normal(size=(10, 2))
        state = estimate_kinematics(ts, pos)
        np.testing.assert_array_equal(state.position, pos[-1])
