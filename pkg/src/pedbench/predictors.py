"""Kinematic trajectory predictors with a scikit-learn style estimator API.

Two unimodal physics baselines are provided: constant velocity (CV) and
decaying acceleration (DA), where the acceleration decays exponentially so
that the model behaves like constant acceleration over the short term and
constant velocity over the long term. A five-mode rule-based ensemble
exercises the multimodal prediction representation (weighted modes with
per-step 2x2 covariances) without any learned components.

Estimators follow the fit/predict convention: ``fit`` calibrates per-mode
covariance schedules on validation instances and ``predict`` maps prediction
instances to :class:`MultimodalPrediction` values. Predicting without
fitting is allowed and uses a conservative default schedule, since the
physics baselines themselves need no training data.
"""

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np
from sklearn.base import BaseEstimator

from .errors import TooFewInstances
from .tracks import US_PER_SECOND, KinematicState, estimate_kinematics

if TYPE_CHECKING:
    from .dataset import PredictionInstance

DEFAULT_DECAY_RATE = 5.5  # 1/s
DEFAULT_COVARIANCE_FLOOR = 0.01  # m^2
DEFAULT_MIN_CALIBRATION_INSTANCES = 50

ENSEMBLE_MODE_LABELS = ("stationary", "cv", "da", "walk", "stop")
DEFAULT_SLOW_WEIGHTS = (0.55, 0.10, 0.10, 0.20, 0.05)
DEFAULT_MOVING_WEIGHTS = (0.05, 0.40, 0.25, 0.10, 0.20)


@dataclass(frozen=True)
class ModePrediction:
    """One hypothesized future: probability weight, means, and covariances."""

    weight: float
    timestamps_us: np.ndarray  # (H,)
    means: np.ndarray  # (H, 2)
    covariances: np.ndarray  # (H, 2, 2)
    label: str = ""

    def __post_init__(self):
        ts = np.asarray(self.timestamps_us, dtype=np.int64)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covariances, dtype=float)
        object.__setattr__(self, "timestamps_us", ts)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        n = len(ts)
        if means.shape != (n, 2):
            raise ValueError(f"means must be ({n}, 2), got {means.shape}")
        if covs.shape != (n, 2, 2):
            raise ValueError(f"covariances must be ({n}, 2, 2), got {covs.shape}")


@dataclass(frozen=True)
class MultimodalPrediction:
    """Weighted multimodal prediction for one instance."""

    instance_id: str
    modes: tuple[ModePrediction, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ValueError("a prediction needs at least one mode")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.modes], dtype=float)

    @property
    def timestamps_us(self) -> np.ndarray:
        return self.modes[0].timestamps_us


def horizon_taus(horizon_steps: int, dt: float) -> np.ndarray:
    """Prediction offsets ``dt, 2*dt, ..., H*dt`` in seconds."""
    return dt * np.arange(1, horizon_steps + 1, dtype=float)


def cv_trajectory(state: KinematicState, taus: np.ndarray) -> np.ndarray:
    """Constant-velocity means at offsets ``taus`` from the last history step."""
    return state.position[None, :] + state.velocity[None, :] * np.asarray(taus, dtype=float)[:, None]


def da_trajectory(state: KinematicState, decay_rate: float, taus: np.ndarray) -> np.ndarray:
    """Decaying-acceleration means: closed-form double integral of a(t) = a0*exp(-decay*t).

    Integrating twice with constants fixed by (position, velocity) at t=0:
    x(t) = x0 + v0*t + (a0/decay)*t - (a0/decay^2)*(1 - exp(-decay*t)).
    """
    if decay_rate <= 0:
        raise ValueError(f"decay rate must be positive, got {decay_rate}")
    t = np.asarray(taus, dtype=float)[:, None]
    a0 = state.acceleration[None, :]
    return (
        state.position[None, :]
        + state.velocity[None, :] * t
        + (a0 / decay_rate) * t
        - (a0 / decay_rate**2) * (1.0 - np.exp(-decay_rate * t))
    )


def predict_cv(state: KinematicState, horizon_steps: int, dt: float) -> np.ndarray:
    """CV means on a uniform grid of ``horizon_steps`` steps of ``dt`` seconds."""
    return cv_trajectory(state, horizon_taus(horizon_steps, dt))


def predict_da(state: KinematicState, decay_rate: float, horizon_steps: int, dt: float) -> np.ndarray:
    """DA means on a uniform grid of ``horizon_steps`` steps of ``dt`` seconds."""
    return da_trajectory(state, decay_rate, horizon_taus(horizon_steps, dt))


def default_covariance_schedule(taus: np.ndarray, floor: float = DEFAULT_COVARIANCE_FLOOR) -> np.ndarray:
    """Per-step isotropic variances growing with the prediction offset."""
    sigma = 0.1 + 0.25 * np.asarray(taus, dtype=float)
    return np.maximum(sigma**2, floor)


def diagonal_covariances(variances: np.ndarray) -> np.ndarray:
    """Stack per-step isotropic variances into (H, 2, 2) diagonal matrices."""
    var = np.asarray(variances, dtype=float)
    covs = np.zeros((len(var), 2, 2))
    covs[:, 0, 0] = var
    covs[:, 1, 1] = var
    return covs


def wrap_unimodal(
    instance_id: str,
    timestamps_us: np.ndarray,
    means: np.ndarray,
    covariance_schedule: np.ndarray,
    label: str = "",
) -> MultimodalPrediction:
    """Wrap a single trajectory as a weight-1 one-mode multimodal prediction."""
    mode = ModePrediction(
        weight=1.0,
        timestamps_us=timestamps_us,
        means=means,
        covariances=diagonal_covariances(covariance_schedule),
        label=label,
    )
    return MultimodalPrediction(instance_id=instance_id, modes=(mode,))


def calibrate_covariance(
    instances: "Iterable[PredictionInstance]",
    predict_fn,
    floor: float = DEFAULT_COVARIANCE_FLOOR,
    min_instances: int = DEFAULT_MIN_CALIBRATION_INSTANCES,
) -> dict[str, np.ndarray]:
    """Fit per-mode isotropic variance schedules from validation residuals.

    For every mode (identified by label), the variance at step k is the mean
    squared per-axis residual over the instances where that mode is the
    closest one by average displacement. Schedules are floored at ``floor``
    and made non-decreasing in k with a running max so late steps are never
    claimed to be more certain than early ones. Modes that are never closest
    fall back to the floor.
    """
    instances = list(instances)
    if len(instances) < min_instances:
        raise TooFewInstances(f"calibration needs >= {min_instances} instances, got {len(instances)}")

    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for inst in instances:
        pred = predict_fn(inst)
        gt = inst.future_xy
        ades = [float(np.mean(np.linalg.norm(m.means - gt, axis=1))) for m in pred.modes]
        best = pred.modes[int(np.argmin(ades))]
        sq = np.sum((best.means - gt) ** 2, axis=1)  # per-step, both axes
        if best.label not in sums:
            sums[best.label] = np.zeros(len(sq))
            counts[best.label] = 0
        sums[best.label] += sq
        counts[best.label] += 1

    schedules: dict[str, np.ndarray] = {}
    for label, total in sums.items():
        var = total / (2.0 * counts[label])
        schedules[label] = np.maximum.accumulate(np.maximum(var, floor))
    return schedules


def _check_weight_table(name: str, table) -> np.ndarray:
    w = np.asarray(table, dtype=float)
    if w.shape != (len(ENSEMBLE_MODE_LABELS),):
        raise ValueError(f"{name} must have {len(ENSEMBLE_MODE_LABELS)} entries, got {w.shape}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must be non-negative and sum to 1, got {table}")
    return w


class _KinematicPredictorBase(BaseEstimator):
    """Shared fit/predict machinery for the kinematic estimators."""

    mode_labels: tuple[str, ...] = ()

    def fit(self, X, y=None):
        """Calibrate per-mode covariance schedules from instances ``X``."""
        del y
        self._validate_params()
        self.schedules_ = calibrate_covariance(
            X,
            lambda inst: self._predict_one(inst, schedules=None),
            floor=self.covariance_floor,
            min_instances=self.min_calibration_instances,
        )
        return self

    def predict(self, X) -> list[MultimodalPrediction]:
        """Predict a multimodal future for every instance in ``X``."""
        self._validate_params()
        schedules = getattr(self, "schedules_", None)
        return [self._predict_one(inst, schedules=schedules) for inst in X]

    def _validate_params(self):
        pass

    def _state(self, inst) -> KinematicState:
        return estimate_kinematics(inst.history_t_us, inst.history_xy)

    def _predict_one(self, inst, schedules) -> MultimodalPrediction:
        taus = (inst.future_t_us - inst.history_t_us[-1]).astype(float) / US_PER_SECOND
        state = self._state(inst)
        modes = []
        for label, weight, means in self._modes(state, taus):
            if schedules is not None and label in schedules:
                variances = schedules[label]
            else:
                variances = default_covariance_schedule(taus, floor=self.covariance_floor)
            modes.append(
                ModePrediction(
                    weight=weight,
                    timestamps_us=inst.future_t_us,
                    means=means,
                    covariances=diagonal_covariances(variances),
                    label=label,
                )
            )
        return MultimodalPrediction(instance_id=inst.instance_id, modes=tuple(modes))

    def _modes(self, state: KinematicState, taus: np.ndarray) -> list[tuple[str, float, np.ndarray]]:
        raise NotImplementedError


class ConstantVelocityPredictor(_KinematicPredictorBase):
    """Single-mode constant-velocity baseline."""

    mode_labels = ("cv",)
    n_modes = 1

    def __init__(
        self,
        covariance_floor: float = DEFAULT_COVARIANCE_FLOOR,
        min_calibration_instances: int = DEFAULT_MIN_CALIBRATION_INSTANCES,
    ):
        self.covariance_floor = covariance_floor
        self.min_calibration_instances = min_calibration_instances

    def _modes(self, state, taus):
        return [("cv", 1.0, cv_trajectory(state, taus))]


class DecayingAccelerationPredictor(_KinematicPredictorBase):
    """Single-mode decaying-acceleration baseline (a0 * exp(-decay_rate * t))."""

    mode_labels = ("da",)
    n_modes = 1

    def __init__(
        self,
        decay_rate: float = DEFAULT_DECAY_RATE,
        covariance_floor: float = DEFAULT_COVARIANCE_FLOOR,
        min_calibration_instances: int = DEFAULT_MIN_CALIBRATION_INSTANCES,
    ):
        self.decay_rate = decay_rate
        self.covariance_floor = covariance_floor
        self.min_calibration_instances = min_calibration_instances

    def _validate_params(self):
        if self.decay_rate <= 0:
            raise ValueError("decay_rate must be positive")

    def _modes(self, state, taus):
        return [("da", 1.0, da_trajectory(state, self.decay_rate, taus))]


class KinematicEnsemble(_KinematicPredictorBase):
    """Five-mode rule-based ensemble over distinct pedestrian behaviors.

    Modes, in order: hold position, constant velocity, decaying acceleration,
    walk initiation (speed ramps toward ``walk_speed`` along the heading with
    the same exponential profile as the DA model), and stopping (decelerate
    at ``stop_decel`` to rest, then hold). Mode weights come from one of two
    tables selected by whether the current speed clears ``speed_gate``.

    When the heading is undefined (the pedestrian never moved fast enough in
    the history), the walk-initiation mode collapses into the hold mode and
    its weight is merged there, leaving four modes that still sum to 1.
    """

    mode_labels = ENSEMBLE_MODE_LABELS
    n_modes = len(ENSEMBLE_MODE_LABELS)

    def __init__(
        self,
        speed_gate: float = 0.25,
        walk_speed: float = 1.4,
        stop_decel: float = 2.0,
        decay_rate: float = DEFAULT_DECAY_RATE,
        slow_weights: tuple = DEFAULT_SLOW_WEIGHTS,
        moving_weights: tuple = DEFAULT_MOVING_WEIGHTS,
        covariance_floor: float = DEFAULT_COVARIANCE_FLOOR,
        min_calibration_instances: int = DEFAULT_MIN_CALIBRATION_INSTANCES,
    ):
        self.speed_gate = speed_gate
        self.walk_speed = walk_speed
        self.stop_decel = stop_decel
        self.decay_rate = decay_rate
        self.slow_weights = slow_weights
        self.moving_weights = moving_weights
        self.covariance_floor = covariance_floor
        self.min_calibration_instances = min_calibration_instances

    def _validate_params(self):
        if self.decay_rate <= 0 or self.stop_decel <= 0 or self.walk_speed <= 0:
            raise ValueError("decay_rate, stop_decel, and walk_speed must be positive")
        _check_weight_table("slow_weights", self.slow_weights)
        _check_weight_table("moving_weights", self.moving_weights)

    def _walk_means(self, state: KinematicState, taus: np.ndarray) -> np.ndarray:
        direction = np.array([math.cos(state.heading), math.sin(state.heading)])
        gap = state.speed - self.walk_speed
        displacement = self.walk_speed * taus + gap * (1.0 - np.exp(-self.decay_rate * taus)) / self.decay_rate
        return state.position[None, :] + direction[None, :] * displacement[:, None]

    def _stop_means(self, state: KinematicState, taus: np.ndarray) -> np.ndarray:
        if state.speed <= 0:
            return np.tile(state.position, (len(taus), 1))
        direction = state.velocity / state.speed
        t_stop = state.speed / self.stop_decel
        t = np.minimum(taus, t_stop)
        displacement = state.speed * t - 0.5 * self.stop_decel * t**2
        return state.position[None, :] + direction[None, :] * displacement[:, None]

    def _modes(self, state, taus):
        weights = np.asarray(
            self.slow_weights if state.speed < self.speed_gate else self.moving_weights, dtype=float
        )
        hold = np.tile(state.position, (len(taus), 1))
        candidates = {
            "stationary": hold,
            "cv": cv_trajectory(state, taus),
            "da": da_trajectory(state, self.decay_rate, taus),
            "stop": self._stop_means(state, taus),
        }
        weight_by_label = dict(zip(ENSEMBLE_MODE_LABELS, weights))
        if state.heading is None:
            weight_by_label["stationary"] += weight_by_label.pop("walk")
        else:
            candidates["walk"] = self._walk_means(state, taus)
        return [
            (label, weight_by_label[label], candidates[label])
            for label in ENSEMBLE_MODE_LABELS
            if label in weight_by_label
        ]


PREDICTORS: dict[str, type] = {
    "cv": ConstantVelocityPredictor,
    "da": DecayingAccelerationPredictor,
    "ensemble": KinematicEnsemble,
}
