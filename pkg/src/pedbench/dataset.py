"""Prediction-instance extraction, motion-change selection, splits, and leakage audit.

A prediction instance is a 1 s history plus 3 s future window cut from a
resampled track. Each instance records the average displacement error a
constant-velocity model makes over its future (``cv_ade``); instances where
that error reaches the motion-change threshold are flagged, and the
motion-changes dataset variant pairs the flagged instances with an equal
number of randomly selected unflagged ones.

The leakage auditor compares motion onset times between a raw track and its
resampled version. Anti-causal interpolation lets the resampled track start
moving before the raw data supports it (a positive lead), which hands
trajectory-only predictors future information.
"""

import hashlib
import math
import random
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientRemainderWarning
from .predictors import cv_trajectory
from .tracks import (
    US_PER_SECOND,
    RawTrack,
    ResampledTrack,
    SquareCrop,
    estimate_kinematics,
    rate_step_us,
)

DEFAULT_MOTION_CHANGE_THRESHOLD = 0.5  # meters
DEFAULT_ONSET_SPEED = 0.25  # m/s
DEFAULT_ONSET_SUSTAIN = 0.3  # seconds
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class TaskConfig:
    """Window geometry of the prediction task."""

    history_duration: float = 1.0
    future_duration: float = 3.0
    rate: float = 10.0
    window_stride: int = 5

    def __post_init__(self):
        rate_step_us(self.rate)
        for name, dur in (("history_duration", self.history_duration), ("future_duration", self.future_duration)):
            steps = dur * self.rate
            if dur <= 0 or abs(steps - round(steps)) > 1e-9:
                raise ValueError(f"{name} must be a positive multiple of 1/rate, got {dur}")
        if self.window_stride < 1:
            raise ValueError("window_stride must be >= 1")

    @property
    def history_steps(self) -> int:
        return int(round(self.history_duration * self.rate))

    @property
    def future_steps(self) -> int:
        return int(round(self.future_duration * self.rate))


@dataclass(frozen=True)
class SplitConfig:
    """Random agent-level train/val split. Test mirrors the source validation set."""

    train_ratio: int = 7
    val_ratio: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.train_ratio <= 0 or self.val_ratio <= 0:
            raise ValueError("split ratio components must be positive")


@dataclass(frozen=True)
class CropRef:
    """Crop geometry manifest entry for one history step."""

    frame_token: str
    crop: SquareCrop


@dataclass(frozen=True)
class PredictionInstance:
    """One history/future window with its crop manifest and selection tags."""

    instance_id: str
    agent_id: str
    camera_view: str
    split: str
    history_t_us: np.ndarray  # (H,)
    history_xy: np.ndarray  # (H, 2)
    future_t_us: np.ndarray  # (F,)
    future_xy: np.ndarray  # (F, 2)
    crop_refs: tuple[CropRef | None, ...]
    motion_change: bool
    cv_ade: float

    def __post_init__(self):
        object.__setattr__(self, "history_t_us", np.asarray(self.history_t_us, dtype=np.int64))
        object.__setattr__(self, "history_xy", np.asarray(self.history_xy, dtype=float))
        object.__setattr__(self, "future_t_us", np.asarray(self.future_t_us, dtype=np.int64))
        object.__setattr__(self, "future_xy", np.asarray(self.future_xy, dtype=float))
        object.__setattr__(self, "crop_refs", tuple(self.crop_refs))
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if len(self.crop_refs) != len(self.history_t_us):
            raise ValueError("crop_refs must have one entry per history step")


def instance_id_for(agent_id: str, camera_view: str, window_start_us: int) -> str:
    """Deterministic instance identifier so rebuilds are stable."""
    key = f"{agent_id}|{camera_view}|{window_start_us}"
    return hashlib.sha1(key.encode("utf-8")).hexdigest()[:16]


def compute_cv_ade(history_t_us, history_xy, future_t_us, future_xy) -> float:
    """Average displacement error of the benchmark CV predictor over the future."""
    state = estimate_kinematics(history_t_us, history_xy)
    taus = (np.asarray(future_t_us, dtype=np.int64) - np.int64(history_t_us[-1])).astype(float) / US_PER_SECOND
    pred = cv_trajectory(state, taus)
    return float(np.mean(np.linalg.norm(pred - np.asarray(future_xy, dtype=float), axis=1)))


def extract_instances(track: ResampledTrack, cfg: TaskConfig = TaskConfig()) -> list[PredictionInstance]:
    """Cut sliding history+future windows from a resampled track.

    Windows advance by ``cfg.window_stride`` steps; tracks shorter than one
    window yield no instances. Crop references are copied from the track's
    history steps (kept only where both a frame token and a crop exist, per
    the manifest format). ``cv_ade`` is computed immediately so motion-change
    selection can run without re-estimating anything.
    """
    if abs(track.rate - cfg.rate) > 1e-9:
        raise ValueError(f"track rate {track.rate} does not match task rate {cfg.rate}")
    h, f = cfg.history_steps, cfg.future_steps
    need = h + f
    n = len(track)
    instances = []
    for start in range(0, n - need + 1, cfg.window_stride):
        hist_slice = slice(start, start + h)
        fut_slice = slice(start + h, start + need)
        refs = []
        for ref in track.frame_refs[hist_slice]:
            if ref is not None and ref.crop is not None:
                refs.append(CropRef(frame_token=ref.frame_token, crop=ref.crop))
            else:
                refs.append(None)
        history_t = track.timestamps_us[hist_slice]
        history_xy = track.positions[hist_slice]
        future_t = track.timestamps_us[fut_slice]
        future_xy = track.positions[fut_slice]
        instances.append(
            PredictionInstance(
                instance_id=instance_id_for(track.agent_id, track.camera_view, int(history_t[0])),
                agent_id=track.agent_id,
                camera_view=track.camera_view,
                split="train",
                history_t_us=history_t,
                history_xy=history_xy,
                future_t_us=future_t,
                future_xy=future_xy,
                crop_refs=tuple(refs),
                motion_change=False,
                cv_ade=compute_cv_ade(history_t, history_xy, future_t, future_xy),
            )
        )
    return instances


@dataclass(frozen=True)
class MotionChangeSelection:
    """Tagged instances plus the balanced motion-changes variant."""

    tagged: tuple[PredictionInstance, ...]
    variant: tuple[PredictionInstance, ...]

    @property
    def n_flagged(self) -> int:
        return sum(1 for inst in self.tagged if inst.motion_change)


def select_motion_changes(
    instances,
    threshold: float = DEFAULT_MOTION_CHANGE_THRESHOLD,
    seed: int = 0,
) -> MotionChangeSelection:
    """Flag high-motion-change instances and build the balanced variant.

    Instances whose CV average displacement error is at or above ``threshold``
    (inclusive) are flagged. The variant is all flagged instances plus an
    equal-count uniform random sample (seeded) of the unflagged remainder,
    sorted by instance id for a deterministic order. If the remainder is too
    small, all of it is used and a warning is emitted.
    """
    tagged = tuple(replace(inst, motion_change=inst.cv_ade >= threshold) for inst in instances)
    flagged = [inst for inst in tagged if inst.motion_change]
    remainder = [inst for inst in tagged if not inst.motion_change]

    k = len(flagged)
    if len(remainder) < k:
        warnings.warn(
            f"unflagged pool ({len(remainder)}) smaller than flagged count ({k}); using all of it",
            InsufficientRemainderWarning,
        )
        sampled = remainder
    else:
        sampled = random.Random(seed).sample(remainder, k)
    variant = tuple(sorted(flagged + list(sampled), key=lambda inst: inst.instance_id))
    return MotionChangeSelection(tagged=tagged, variant=variant)


def assign_splits(agent_ids, cfg: SplitConfig = SplitConfig()) -> dict[str, str]:
    """Randomly assign agents to train/val at the configured ratio.

    All instances of an agent (across camera views) inherit the agent's
    split, so no pedestrian leaks between splits. The test split is assigned
    externally by the corpus source.
    """
    unique = sorted(set(agent_ids))
    rng = random.Random(cfg.seed)
    rng.shuffle(unique)
    n_train = math.ceil(len(unique) * cfg.train_ratio / (cfg.train_ratio + cfg.val_ratio))
    return {agent: ("train" if i < n_train else "val") for i, agent in enumerate(unique)}


def apply_splits(instances, split_by_agent: dict[str, str]) -> list[PredictionInstance]:
    """Stamp each instance with its agent's split."""
    return [replace(inst, split=split_by_agent[inst.agent_id]) for inst in instances]


@dataclass(frozen=True)
class LeakageEntry:
    """Motion-onset comparison between a raw track and its resampled form.

    ``lead_seconds`` is positive when the resampled track starts moving
    earlier than the raw data supports, i.e. future information leaked into
    earlier timesteps. It is ``None`` when either track shows no onset.
    """

    agent_id: str
    camera_view: str
    raw_onset_us: int | None
    resampled_onset_us: int | None
    lead_seconds: float | None


@dataclass(frozen=True)
class LeakageReport:
    """Aggregate of per-track leakage entries."""

    entries: tuple[LeakageEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def n_positive(self) -> int:
        return sum(1 for e in self.entries if e.lead_seconds is not None and e.lead_seconds > 0)

    @property
    def mean_positive_lead(self) -> float | None:
        leads = [e.lead_seconds for e in self.entries if e.lead_seconds is not None and e.lead_seconds > 0]
        return float(np.mean(leads)) if leads else None


def motion_onset_us(
    timestamps_us: np.ndarray,
    positions: np.ndarray,
    onset_speed: float = DEFAULT_ONSET_SPEED,
    window: float = DEFAULT_ONSET_SUSTAIN,
) -> int | None:
    """First timestamp at which sustained motion is observed, or None.

    For each step end time, the average speed is measured over the smallest
    trailing window of whole steps covering at least ``window`` seconds
    (a single step when the track's step already does). Measuring over the
    window keeps single-sample jitter from triggering the detector.
    """
    ts = np.asarray(timestamps_us, dtype=np.int64)
    pos = np.asarray(positions, dtype=float)[:, :2]
    window_us = int(round(window * US_PER_SECOND))
    start = 0
    for k in range(1, len(ts)):
        # smallest i with ts[k] - ts[i] >= window_us, scanning forward once
        i = None
        for j in range(start, k):
            if ts[k] - ts[j] >= window_us:
                i = j
            else:
                break
        if i is None:
            continue
        start = i
        speed = float(np.linalg.norm(pos[k] - pos[i])) / ((ts[k] - ts[i]) / US_PER_SECOND)
        if speed >= onset_speed:
            return int(ts[k])
    return None


def audit_leakage(
    raw: RawTrack,
    resampled: ResampledTrack,
    onset_speed: float = DEFAULT_ONSET_SPEED,
    sustain: float = DEFAULT_ONSET_SUSTAIN,
) -> LeakageEntry:
    """Compare motion onset between a raw track and its resampled version.

    Both tracks are measured with the same window duration: the larger of
    ``sustain`` and the raw track's own sampling step. Using the raw step as
    the floor keeps the comparison fair; a shorter window on the upsampled
    track would divide the same raw displacement by less time and could
    claim motion the raw data never supported, even for a causal hold.
    """
    raw_ts = raw.timestamps_us
    if raw_ts[0] != resampled.timestamps_us[0]:
        raise ValueError("raw and resampled tracks must share their start time")
    if resampled.timestamps_us[-1] > raw_ts[-1] or raw_ts[-1] - resampled.timestamps_us[-1] >= resampled.step_us:
        raise ValueError("resampled track does not cover the raw track's time span")

    window = max(sustain, float(np.max(np.diff(raw_ts))) / US_PER_SECOND)
    raw_onset = motion_onset_us(raw_ts, raw.positions, onset_speed, window)
    res_onset = motion_onset_us(resampled.timestamps_us, resampled.positions, onset_speed, window)
    lead = None
    if raw_onset is not None and res_onset is not None:
        lead = (raw_onset - res_onset) / US_PER_SECOND
    return LeakageEntry(
        agent_id=raw.agent_id,
        camera_view=raw.camera_view,
        raw_onset_us=raw_onset,
        resampled_onset_us=res_onset,
        lead_seconds=lead,
    )
