"""Core trajectory types, fixed-rate resampling, camera matching, and kinematics.

Tracks come in two flavors: :class:`RawTrack` holds the low-rate (nominally
2 Hz) 3D annotations as recorded, while :class:`ResampledTrack` is the
fixed-rate 2D world-frame track that prediction instances are cut from.
Resampling supports two modes:

* ``anti_causal_linear`` -- linear interpolation between the bracketing raw
  samples. This reproduces the upsampling used to build the original dataset
  and lets information from future samples bleed into earlier grid times.
* ``causal_hold`` -- each grid time takes the most recent raw sample at or
  before it, so no future sample can influence an earlier timestep.

All functions here are pure; values are treated as immutable after
construction and are safe to share across workers.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonMonotonicTimestamps, TooFewSamples

US_PER_SECOND = 1_000_000

RESAMPLE_MODES = ("anti_causal_linear", "causal_hold")

DEFAULT_RATE_HZ = 10.0
DEFAULT_MAX_MATCH_GAP_US = 60_000
DEFAULT_HEADING_MIN_SPEED = 0.1


@dataclass(frozen=True)
class SquareCrop:
    """Square pixel region: center (u, v) and side length, all in pixels."""

    center_u: float
    center_v: float
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError(f"crop side must be > 0, got {self.side}")


@dataclass(frozen=True)
class CameraFrameRef:
    """Reference to the camera frame nearest a track step, with optional crop."""

    frame_token: str
    frame_timestamp_us: int
    crop: SquareCrop | None = None


@dataclass(frozen=True)
class RawSample:
    """One low-rate annotation: world position, box extents, and yaw."""

    timestamp_us: int
    position: np.ndarray  # (3,) world meters
    box_size: np.ndarray  # (length, width, height) meters
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "box_size", np.asarray(self.box_size, dtype=float))
        if self.position.shape != (3,):
            raise ValueError(f"position must be 3D, got shape {self.position.shape}")
        if self.box_size.shape != (3,) or not np.all(self.box_size > 0):
            raise ValueError("box_size must be three positive components")


@dataclass(frozen=True)
class RawTrack:
    """Annotation samples of one pedestrian as seen from one camera view."""

    agent_id: str
    camera_view: str
    samples: tuple[RawSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def timestamps_us(self) -> np.ndarray:
        return np.array([s.timestamp_us for s in self.samples], dtype=np.int64)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.samples], dtype=float)


@dataclass(frozen=True)
class ResampledTrack:
    """Fixed-rate 2D track with per-step optional camera frame references.

    ``timestamps_us`` and ``positions`` are parallel arrays; ``frame_refs``
    holds one entry per step (``None`` when no camera frame matched).
    """

    agent_id: str
    camera_view: str
    rate: float
    timestamps_us: np.ndarray  # (n,) int64
    positions: np.ndarray  # (n, 2) float
    frame_refs: tuple[CameraFrameRef | None, ...] = field(default=())

    def __post_init__(self):
        ts = np.asarray(self.timestamps_us, dtype=np.int64)
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "timestamps_us", ts)
        object.__setattr__(self, "positions", pos)
        if not self.frame_refs:
            object.__setattr__(self, "frame_refs", (None,) * len(ts))
        if len(self.frame_refs) != len(ts):
            raise ValueError("frame_refs length must match step count")
        if pos.shape != (len(ts), 2):
            raise ValueError(f"positions must be (n, 2), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")

    def __len__(self) -> int:
        return len(self.timestamps_us)

    @property
    def step_us(self) -> int:
        return int(round(US_PER_SECOND / self.rate))


@dataclass(frozen=True)
class KinematicState:
    """Planar kinematic state estimated from a history window.

    ``heading`` is ``None`` when the pedestrian never moved fast enough
    within the history for a direction to be defined.
    """

    position: np.ndarray  # (2,) meters, at the last history step
    velocity: np.ndarray  # (2,) m/s
    acceleration: np.ndarray  # (2,) m/s^2
    heading: float | None
    speed: float


def rate_step_us(rate: float) -> int:
    """Grid step in microseconds for a rate, requiring a whole-us step."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    step = US_PER_SECOND / rate
    if abs(step - round(step)) > 1e-9:
        raise ValueError(f"rate {rate} Hz does not divide into a whole-microsecond step")
    return int(round(step))


def _check_raw(raw: RawTrack) -> tuple[np.ndarray, np.ndarray]:
    if len(raw) < 2:
        raise TooFewSamples(f"track {raw.agent_id}/{raw.camera_view} has {len(raw)} samples, need >= 2")
    ts = raw.timestamps_us
    if np.any(np.diff(ts) <= 0):
        raise NonMonotonicTimestamps(f"track {raw.agent_id}/{raw.camera_view} timestamps not strictly increasing")
    return ts, raw.positions


def resample_track(raw: RawTrack, rate: float = DEFAULT_RATE_HZ, mode: str = "anti_causal_linear") -> ResampledTrack:
    """Resample a raw track onto a fixed-rate grid, dropping the vertical axis.

    The grid is aligned to the first raw timestamp and spans the raw time
    range without extrapolation. ``anti_causal_linear`` interpolates between
    the bracketing raw samples; ``causal_hold`` holds the most recent sample
    at or before each grid time so the output at time ``t`` never depends on
    raw samples after ``t``.
    """
    if mode not in RESAMPLE_MODES:
        raise ValueError(f"unknown resample mode {mode!r}; expected one of {RESAMPLE_MODES}")
    ts, pos3 = _check_raw(raw)
    step = rate_step_us(rate)
    n_steps = int((ts[-1] - ts[0]) // step) + 1
    grid = ts[0] + step * np.arange(n_steps, dtype=np.int64)

    if mode == "anti_causal_linear":
        out = np.column_stack([
            np.interp(grid.astype(float), ts.astype(float), pos3[:, axis]) for axis in (0, 1)
        ])
    else:
        idx = np.searchsorted(ts, grid, side="right") - 1
        out = pos3[idx, :2]

    return ResampledTrack(
        agent_id=raw.agent_id,
        camera_view=raw.camera_view,
        rate=rate,
        timestamps_us=grid,
        positions=out,
    )


def match_camera_frames(
    track: ResampledTrack,
    camera_timestamps: list[tuple[str, int]],
    max_gap_us: int = DEFAULT_MAX_MATCH_GAP_US,
) -> ResampledTrack:
    """Attach to each step the nearest camera frame within ``max_gap_us``.

    ``camera_timestamps`` is an ascending list of (frame_token, timestamp_us).
    Ties between two equally distant frames go to the earlier frame. Steps
    whose nearest frame is farther than ``max_gap_us`` keep ``frame_ref=None``.
    """
    if not camera_timestamps:
        return replace(track, frame_refs=(None,) * len(track))
    tokens = [t for t, _ in camera_timestamps]
    frame_ts = np.array([ts for _, ts in camera_timestamps], dtype=np.int64)
    if np.any(np.diff(frame_ts) < 0):
        raise ValueError("camera_timestamps must be sorted ascending")

    refs: list[CameraFrameRef | None] = []
    right = np.searchsorted(frame_ts, track.timestamps_us, side="left")
    for step_ts, j in zip(track.timestamps_us, right):
        best = None
        if j > 0:
            best = j - 1
        if j < len(frame_ts):
            if best is None or abs(int(frame_ts[j]) - int(step_ts)) < abs(int(frame_ts[best]) - int(step_ts)):
                best = j
        gap = abs(int(frame_ts[best]) - int(step_ts))
        if gap > max_gap_us:
            refs.append(None)
        else:
            refs.append(CameraFrameRef(frame_token=tokens[best], frame_timestamp_us=int(frame_ts[best])))
    return replace(track, frame_refs=tuple(refs))


def estimate_kinematics(
    timestamps_us: np.ndarray,
    positions: np.ndarray,
    heading_min_speed: float = DEFAULT_HEADING_MIN_SPEED,
) -> KinematicState:
    """Estimate planar kinematics at the end of a history window.

    Per axis, a least-squares quadratic is fit over the window with time
    measured backward from the last step; the velocity and acceleration are
    the fit's first derivative and twice its curvature at the window end.
    A smoothing fit is preferred over finite differences because higher
    derivatives amplify annotation noise. With only two points the velocity
    falls back to a finite difference and the acceleration is zero.

    Heading is the direction of the estimated velocity when its magnitude
    reaches ``heading_min_speed``; otherwise it is carried from the most
    recent step whose one-step velocity was that fast, else ``None``.
    """
    ts = np.asarray(timestamps_us, dtype=np.int64)
    pos = np.asarray(positions, dtype=float)
    if len(ts) < 2:
        raise TooFewSamples(f"kinematic estimation needs >= 2 points, got {len(ts)}")
    if np.any(np.diff(ts) <= 0):
        raise NonMonotonicTimestamps("history timestamps not strictly increasing")

    tau = (ts - ts[-1]).astype(float) / US_PER_SECOND
    if len(ts) == 2:
        velocity = (pos[1] - pos[0]) / (tau[1] - tau[0])
        acceleration = np.zeros(2)
    else:
        coeffs = np.polyfit(tau, pos, 2)  # rows: [c2, c1, c0] per axis
        velocity = coeffs[1]
        acceleration = 2.0 * coeffs[0]

    speed = float(np.hypot(velocity[0], velocity[1]))
    heading: float | None = None
    if speed >= heading_min_speed:
        heading = float(math.atan2(velocity[1], velocity[0]))
    else:
        dt = np.diff(tau)
        step_v = np.diff(pos, axis=0) / dt[:, None]
        step_speed = np.hypot(step_v[:, 0], step_v[:, 1])
        defined = np.nonzero(step_speed >= heading_min_speed)[0]
        if len(defined):
            k = defined[-1]
            heading = float(math.atan2(step_v[k, 1], step_v[k, 0]))

    return KinematicState(
        position=pos[-1].copy(),
        velocity=np.asarray(velocity, dtype=float),
        acceleration=np.asarray(acceleration, dtype=float),
        heading=heading,
        speed=speed,
    )
