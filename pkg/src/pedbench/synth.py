"""Deterministic synthetic pedestrian scenarios for desk-scale experiments.

Each scenario integrates a behavior script (stand, walk, accelerate,
decelerate, turn phases) at a fine rate to produce noiseless ground truth
with per-step phase labels, then subsamples to the low native rate and adds
seeded Gaussian position noise to mimic annotation jitter. The resulting
noisy low-rate track plays the role of raw annotations, so the full dataset
pipeline (resample, window, select, audit) can be exercised without any
real drive logs.

Walk initiation uses a 0.5 s linear speed ramp by default (roughly one gait
cycle) so that onset timing is meaningful for the leakage audit. A centered
moving-average smoothing artifact is available to deliberately manufacture
the anti-causal leakage the auditor is designed to detect.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    SplitConfig,
    TaskConfig,
    apply_splits,
    assign_splits,
    extract_instances,
    select_motion_changes,
)
from .errors import InvalidScript
from .tracks import US_PER_SECOND, RawSample, RawTrack, resample_track

PHASE_KINDS = ("stand", "walk", "accelerate", "decelerate", "turn")
DEFAULT_NOISE_SIGMA = 0.05
DEFAULT_NATIVE_RATE = 2.0
DEFAULT_FINE_RATE = 10.0
DEFAULT_RAMP_DURATION = 0.5
PEDESTRIAN_BOX = (0.6, 0.6, 1.8)
MAX_SPEED = 3.0


@dataclass(frozen=True)
class Phase:
    """One segment of a behavior script."""

    kind: str
    duration: float
    target_speed: float = 0.0
    turn_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise InvalidScript(f"unknown phase kind {self.kind!r}")
        if self.duration <= 0:
            raise InvalidScript(f"phase duration must be positive, got {self.duration}")
        if not 0.0 <= self.target_speed <= MAX_SPEED:
            raise InvalidScript(f"target speed must be within [0, {MAX_SPEED}] m/s, got {self.target_speed}")


@dataclass(frozen=True)
class ScenarioParams:
    """Everything needed to deterministically generate one scenario."""

    seed: int
    script: tuple[Phase, ...]
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    native_rate: float = DEFAULT_NATIVE_RATE
    fine_rate: float = DEFAULT_FINE_RATE
    initial_heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "script", tuple(self.script))
        if not self.script:
            raise InvalidScript("script must contain at least one phase")
        ratio = self.fine_rate / self.native_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidScript("fine rate must be an integer multiple of the native rate")
        if self.noise_sigma < 0:
            raise InvalidScript("noise sigma must be non-negative")

    @property
    def duration(self) -> float:
        return sum(p.duration for p in self.script)


@dataclass(frozen=True)
class SyntheticTrack:
    """Noiseless fine-rate truth plus the noisy low-rate observed track."""

    truth_timestamps_us: np.ndarray
    truth_positions: np.ndarray  # (n, 2)
    truth_speeds: np.ndarray  # (n,)
    mode_labels: tuple[str, ...]
    observed: RawTrack


def generate_scenario(params: ScenarioParams, agent_id: str = "synth-0", camera_view: str = "synth") -> SyntheticTrack:
    """Integrate a behavior script into truth and observed tracks.

    Speed is held during stand/walk/turn phases, ramps linearly during
    accelerate/decelerate phases, and heading integrates each phase's turn
    rate. Output is deterministic per seed down to the bit level.
    """
    dt = 1.0 / params.fine_rate
    n_steps = int(round(params.duration * params.fine_rate))
    step_us = int(round(US_PER_SECOND / params.fine_rate))

    phase_ends = np.cumsum([p.duration for p in params.script])
    positions = np.zeros((n_steps + 1, 2))
    speeds = np.zeros(n_steps + 1)
    headings_fine = np.zeros(n_steps + 1)
    labels: list[str] = []

    heading = params.initial_heading
    speed = params.script[0].target_speed if params.script[0].kind in ("walk", "turn") else 0.0
    if params.script[0].kind == "stand":
        speed = 0.0
    pos = np.zeros(2)
    speeds[0] = speed

    phase_idx = 0
    phase_entry_speed = speed
    phase_start_t = 0.0
    for k in range(n_steps + 1):
        t = k * dt
        while phase_idx < len(params.script) - 1 and t >= phase_ends[phase_idx] - 1e-12:
            phase_idx += 1
            phase_entry_speed = speed
            phase_start_t = phase_ends[phase_idx - 1]
        phase = params.script[phase_idx]
        if phase.kind == "stand":
            speed = 0.0
        elif phase.kind in ("walk", "turn"):
            speed = phase.target_speed
        else:  # accelerate / decelerate: linear ramp over the phase
            frac = min(1.0, (t - phase_start_t) / phase.duration)
            speed = phase_entry_speed + (phase.target_speed - phase_entry_speed) * frac
        labels.append(phase.kind)
        positions[k] = pos
        speeds[k] = speed
        headings_fine[k] = heading
        if k < n_steps:
            pos = pos + speed * dt * np.array([np.cos(heading), np.sin(heading)])
            heading = heading + phase.turn_rate * dt

    timestamps = step_us * np.arange(n_steps + 1, dtype=np.int64)

    subsample = int(round(params.fine_rate / params.native_rate))
    native_idx = np.arange(0, n_steps + 1, subsample)
    rng = np.random.default_rng(params.seed)
    noise = rng.normal(0.0, params.noise_sigma, size=(len(native_idx), 2)) if params.noise_sigma > 0 else np.zeros(
        (len(native_idx), 2)
    )
    samples = tuple(
        RawSample(
            timestamp_us=int(timestamps[i]),
            position=np.array([positions[i, 0] + noise[j, 0], positions[i, 1] + noise[j, 1], 0.0]),
            box_size=np.array(PEDESTRIAN_BOX),
            yaw=float(headings_fine[i]),
        )
        for j, i in enumerate(native_idx)
    )
    observed = RawTrack(agent_id=agent_id, camera_view=camera_view, samples=samples)
    return SyntheticTrack(
        truth_timestamps_us=timestamps,
        truth_positions=positions,
        truth_speeds=speeds,
        mode_labels=tuple(labels),
        observed=observed,
    )


def apply_smoothing_artifact(track: RawTrack, window: int) -> RawTrack:
    """Centered moving average over positions; deliberately anti-causal.

    The window shrinks symmetrically at the track ends. Smoothing a track
    with a motion onset drags earlier positions toward later ones, which is
    exactly the retrospective filtering flaw the leakage auditor detects.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    positions = track.positions
    n = len(positions)
    half = window // 2
    smoothed = np.empty_like(positions)
    for i in range(n):
        m = min(i, n - 1 - i, half)
        smoothed[i] = positions[i - m : i + m + 1].mean(axis=0)
    samples = tuple(
        RawSample(timestamp_us=s.timestamp_us, position=smoothed[i], box_size=s.box_size, yaw=s.yaw)
        for i, s in enumerate(track.samples)
    )
    return RawTrack(agent_id=track.agent_id, camera_view=track.camera_view, samples=samples)


@dataclass(frozen=True)
class CorpusTemplate:
    """Distribution the corpus sampler draws scenario scripts from.

    The defaults keep just under half the scenarios on a stand/walk
    transition while the rest move steadily, so that at the default noise
    level the flagged instances stay a minority and the balanced variant can
    always find enough unflagged partners.
    """

    duration: float = 8.0
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    native_rate: float = DEFAULT_NATIVE_RATE
    fine_rate: float = DEFAULT_FINE_RATE
    ramp_duration: float = DEFAULT_RAMP_DURATION
    walk_speed_range: tuple[float, float] = (0.8, 1.8)
    transition_window: tuple[float, float] = (1.5, 3.5)
    max_turn_rate: float = 0.08
    category_weights: dict = field(
        default_factory=lambda: {"initiate": 0.25, "halt": 0.20, "cruise": 0.25, "idle": 0.18, "vary": 0.12}
    )


def _sample_script(rng: np.random.Generator, template: CorpusTemplate) -> tuple[str, tuple[Phase, ...]]:
    names = sorted(template.category_weights)
    probs = np.array([template.category_weights[n] for n in names], dtype=float)
    category = names[int(rng.choice(len(names), p=probs / probs.sum()))]
    speed = float(rng.uniform(*template.walk_speed_range))
    t_change = float(rng.uniform(*template.transition_window))
    ramp = template.ramp_duration
    rest = template.duration - t_change - ramp
    if category == "initiate":
        script = (Phase("stand", t_change), Phase("accelerate", ramp, speed), Phase("walk", rest, speed))
    elif category == "halt":
        script = (Phase("walk", t_change, speed), Phase("decelerate", ramp, 0.0), Phase("stand", rest))
    elif category == "cruise":
        turn = float(rng.uniform(-template.max_turn_rate, template.max_turn_rate))
        script = (Phase("turn", template.duration, speed, turn_rate=turn),)
    elif category == "idle":
        script = (Phase("stand", template.duration),)
    else:  # vary: speed change without stopping
        speed2 = float(rng.uniform(*template.walk_speed_range))
        script = (Phase("walk", t_change, speed), Phase("accelerate", ramp, speed2), Phase("walk", rest, speed2))
    return category, script


def generate_corpus(
    n: int,
    template: CorpusTemplate = CorpusTemplate(),
    seed: int = 42,
    task_cfg: TaskConfig = TaskConfig(),
    split_cfg: SplitConfig | None = None,
    resample_mode: str = "anti_causal_linear",
    motion_threshold: float = 0.5,
):
    """Generate n scenarios and extract tagged prediction instances.

    Returns ``(instances, scenarios)`` where ``scenarios`` is a JSON-ready
    list describing each scenario's script for reproducibility. Each
    scenario's random stream is derived from (seed, scenario index), so
    generation is deterministic and order-independent. Instances come from
    resampling the noisy observed tracks at the task rate, carry agent-level
    train/val splits, and are tagged by the motion-change rule with the
    threshold applied inclusively.
    """
    if split_cfg is None:
        split_cfg = SplitConfig(seed=seed)
    instances = []
    scenarios = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        category, script = _sample_script(rng, template)
        params = ScenarioParams(
            seed=int(rng.integers(2**31)),
            script=script,
            noise_sigma=template.noise_sigma,
            native_rate=template.native_rate,
            fine_rate=template.fine_rate,
            initial_heading=float(rng.uniform(-np.pi, np.pi)),
        )
        agent_id = f"synth-{i:06d}"
        track = generate_scenario(params, agent_id=agent_id)
        resampled = resample_track(track.observed, rate=task_cfg.rate, mode=resample_mode)
        instances.extend(extract_instances(resampled, task_cfg))
        scenarios.append(
            {
                "agent_id": agent_id,
                "category": category,
                "seed": params.seed,
                "initial_heading": params.initial_heading,
                "noise_sigma": params.noise_sigma,
                "phases": [
                    {"kind": p.kind, "duration": p.duration, "target_speed": p.target_speed, "turn_rate": p.turn_rate}
                    for p in script
                ],
            }
        )

    split_by_agent = assign_splits([inst.agent_id for inst in instances], split_cfg)
    instances = apply_splits(instances, split_by_agent)
    instances = list(select_motion_changes(instances, threshold=motion_threshold, seed=seed).tagged)
    return instances, scenarios


def scenarios_sidecar_text(scenarios) -> str:
    """Serialized scenario scripts, written next to a generated corpus."""
    return json.dumps(scenarios, indent=2) + "\n"


def track_from_scenario(
    record: dict,
    native_rate: float = DEFAULT_NATIVE_RATE,
    fine_rate: float = DEFAULT_FINE_RATE,
) -> RawTrack:
    """Rebuild the observed raw track described by one sidecar record."""
    params = ScenarioParams(
        seed=record["seed"],
        script=tuple(Phase(**p) for p in record["phases"]),
        noise_sigma=record["noise_sigma"],
        native_rate=native_rate,
        fine_rate=fine_rate,
        initial_heading=record["initial_heading"],
    )
    return generate_scenario(params, agent_id=record["agent_id"]).observed
