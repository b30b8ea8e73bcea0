"""Run configuration: INI-backed, with the benchmark defaults built in.

A bare run (no config file) uses the canonical experimental setup: 1 s
history, 3 s prediction at 10 Hz, 5 prediction modes, decay rate 5.5 1/s,
0.5 m motion-change threshold, 7:1 train/val ratio, and horizons 1/2/3 s.
Seeds for splitting, motion-change selection, and synthesis default to the
base ``[run] seed`` unless set explicitly, so one flag reseeds a whole run.

Every artifact a command produces either embeds the fully resolved
configuration (JSON reports) or is accompanied by a resolved ``.ini``
sidecar (line-delimited data files whose record format is fixed), making
outputs reproducible from themselves plus their inputs. Resolved configs
round-trip: writing and re-parsing yields an equal RunConfig.
"""

import configparser
import io as _io
from dataclasses import dataclass, fields

from .dataset import SplitConfig, TaskConfig
from .predictors import (
    DEFAULT_COVARIANCE_FLOOR,
    DEFAULT_DECAY_RATE,
    DEFAULT_MIN_CALIBRATION_INSTANCES,
    DEFAULT_MOVING_WEIGHTS,
    DEFAULT_SLOW_WEIGHTS,
    ConstantVelocityPredictor,
    DecayingAccelerationPredictor,
    KinematicEnsemble,
)

RESAMPLE_CHOICES = {"anti-causal": "anti_causal_linear", "causal": "causal_hold"}
VARIANT_CHOICES = ("full", "motion-changes")
SCHEDULE_CHOICES = ("default", "calibrated")
SPLIT_CHOICES = ("all", "train", "val", "test")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration for every subcommand."""

    # [task]
    history_duration: float = 1.0
    future_duration: float = 3.0
    rate: float = 10.0
    window_stride: int = 5
    # [split]
    train_ratio: int = 7
    val_ratio: int = 1
    split_seed: int = 42
    # [dataset]
    variant: str = "full"
    resample: str = "anti-causal"
    motion_threshold: float = 0.5
    selection_seed: int = 42
    max_match_gap_ms: float = 60.0
    crop_expand_factor: float = 2.0
    # [predictors]
    decay_rate: float = DEFAULT_DECAY_RATE
    covariance_floor: float = DEFAULT_COVARIANCE_FLOOR
    schedule: str = "default"
    min_calibration_instances: int = DEFAULT_MIN_CALIBRATION_INSTANCES
    # [ensemble]
    speed_gate: float = 0.25
    walk_speed: float = 1.4
    stop_decel: float = 2.0
    slow_weights: tuple = DEFAULT_SLOW_WEIGHTS
    moving_weights: tuple = DEFAULT_MOVING_WEIGHTS
    # [metrics]
    horizons: tuple = (1.0, 2.0, 3.0)
    horizon_mode: str = "at_horizon"
    # [synth]
    synth_n: int = 100
    synth_duration: float = 8.0
    noise_sigma: float = 0.05
    native_rate: float = 2.0
    fine_rate: float = 10.0
    synth_seed: int = 42
    # [run]
    seed: int = 42
    predictor: str = "cv"
    eval_split: str = "all"

    def __post_init__(self):
        if self.variant not in VARIANT_CHOICES:
            raise ValueError(f"variant must be one of {VARIANT_CHOICES}, got {self.variant!r}")
        if self.resample not in RESAMPLE_CHOICES:
            raise ValueError(f"resample must be one of {tuple(RESAMPLE_CHOICES)}, got {self.resample!r}")
        if self.schedule not in SCHEDULE_CHOICES:
            raise ValueError(f"schedule must be one of {SCHEDULE_CHOICES}, got {self.schedule!r}")
        if self.eval_split not in SPLIT_CHOICES:
            raise ValueError(f"eval_split must be one of {SPLIT_CHOICES}, got {self.eval_split!r}")

    @property
    def task(self) -> TaskConfig:
        return TaskConfig(
            history_duration=self.history_duration,
            future_duration=self.future_duration,
            rate=self.rate,
            window_stride=self.window_stride,
        )

    @property
    def split(self) -> SplitConfig:
        return SplitConfig(train_ratio=self.train_ratio, val_ratio=self.val_ratio, seed=self.split_seed)

    @property
    def resample_mode(self) -> str:
        return RESAMPLE_CHOICES[self.resample]

    @property
    def max_match_gap_us(self) -> int:
        return int(round(self.max_match_gap_ms * 1000))

    def make_predictor(self, name: str | None = None):
        name = name or self.predictor
        common = dict(
            covariance_floor=self.covariance_floor,
            min_calibration_instances=self.min_calibration_instances,
        )
        if name == "cv":
            return ConstantVelocityPredictor(**common)
        if name == "da":
            return DecayingAccelerationPredictor(decay_rate=self.decay_rate, **common)
        if name == "ensemble":
            return KinematicEnsemble(
                speed_gate=self.speed_gate,
                walk_speed=self.walk_speed,
                stop_decel=self.stop_decel,
                decay_rate=self.decay_rate,
                slow_weights=self.slow_weights,
                moving_weights=self.moving_weights,
                **common,
            )
        raise ValueError(f"unknown predictor {name!r}; expected cv, da, or ensemble")


_SECTIONS: dict[str, tuple[str, ...]] = {
    "task": ("history_duration", "future_duration", "rate", "window_stride"),
    "split": ("train_ratio", "val_ratio", "split_seed"),
    "dataset": (
        "variant",
        "resample",
        "motion_threshold",
        "selection_seed",
        "max_match_gap_ms",
        "crop_expand_factor",
    ),
    "predictors": ("decay_rate", "covariance_floor", "schedule", "min_calibration_instances"),
    "ensemble": ("speed_gate", "walk_speed", "stop_decel", "slow_weights", "moving_weights"),
    "metrics": ("horizons", "horizon_mode"),
    "synth": ("synth_n", "synth_duration", "noise_sigma", "native_rate", "fine_rate", "synth_seed"),
    "run": ("seed", "predictor", "eval_split"),
}

# Seeds that fall back to [run] seed unless explicitly configured.
_DERIVED_SEEDS = ("split_seed", "selection_seed", "synth_seed")

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name: str, text: str):
    kind = _FIELD_TYPES[name]
    text = text.strip()
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    if kind in (tuple, "tuple"):
        return tuple(float(part) for part in text.split(",") if part.strip())
    return text


def config_to_ini_text(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {key: _format_value(getattr(cfg, key)) for key in keys}
    buf = _io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_to_dict(cfg: RunConfig) -> dict:
    """Nested section/key mapping with native JSON types, for embedding in artifacts."""
    out: dict = {}
    for section, keys in _SECTIONS.items():
        out[section] = {key: (list(v) if isinstance(v := getattr(cfg, key), tuple) else v) for key in keys}
    return out


def _resolve(raw: dict[str, dict[str, str]], overrides: dict | None = None) -> RunConfig:
    values: dict = {}
    for section, keys in _SECTIONS.items():
        for key in keys:
            if section in raw and key in raw[section]:
                values[key] = _parse_value(key, raw[section][key])
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    base_seed = values.get("seed", RunConfig.seed)
    for name in _DERIVED_SEEDS:
        values.setdefault(name, base_seed)
    return RunConfig(**values)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read an INI config file (optional) and apply CLI overrides."""
    raw: dict[str, dict[str, str]] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        with open(path) as handle:
            parser.read_file(handle)
        unknown = [s for s in parser.sections() if s not in _SECTIONS]
        if unknown:
            raise ValueError(f"unknown config section(s) {unknown}")
        for section in parser.sections():
            for key in parser[section]:
                if key not in _SECTIONS[section]:
                    raise ValueError(f"unknown config key [{section}] {key}")
            raw[section] = dict(parser[section])
    return _resolve(raw, overrides)


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    raw = {section: dict(parser[section]) for section in parser.sections()}
    return _resolve(raw)
