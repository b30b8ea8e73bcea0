"""Line-delimited JSON file formats for the benchmark.

Four record formats live here:

* instances -- one object per line with fields exactly ``instance_id,
  agent_id, camera_view, split, motion_change, cv_ade, history, future,
  crop_refs``; ``history``/``future`` are arrays of ``[t_us, x_m, y_m]`` and
  ``crop_refs`` has one entry per history step, either ``null`` or
  ``{frame_token, center_u, center_v, side}``.
* predictions -- ``{instance_id, modes: [{weight, steps: [[t_us, x, y, sxx,
  sxy, syy], ...]}]}``; the contract by which externally trained models are
  scored.
* raw tracks -- ``{agent_id, camera_view, samples: [[t_us, x, y, z, length,
  width, height, yaw], ...]}``; the input a converter emits from source data.
* camera manifests -- per-view pinhole model plus frame timestamps, used to
  attach crop geometry.

Numbers are serialized at full precision (shortest round-trip decimals), so
writing and re-reading is lossless and byte-stable across runs.
"""

import json
import os
from pathlib import Path

import numpy as np

from .dataset import CropRef, PredictionInstance
from .errors import MalformedRecord
from .geometry import CameraModel
from .predictors import ModePrediction, MultimodalPrediction
from .tracks import RawSample, RawTrack, SquareCrop

INSTANCE_FIELDS = frozenset(
    {"instance_id", "agent_id", "camera_view", "split", "motion_change", "cv_ade", "history", "future", "crop_refs"}
)
CROP_REF_FIELDS = frozenset({"frame_token", "center_u", "center_v", "side"})


def write_atomic(path, text: str) -> None:
    """Write text to ``path`` via a temp file so readers never see partial output."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def _records(path):
    with open(path) as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(line_no, "record is not a JSON object")
            yield line_no, record


def instance_to_record(inst: PredictionInstance) -> dict:
    crop_refs = []
    for ref in inst.crop_refs:
        if ref is None:
            crop_refs.append(None)
        else:
            crop_refs.append(
                {
                    "frame_token": ref.frame_token,
                    "center_u": float(ref.crop.center_u),
                    "center_v": float(ref.crop.center_v),
                    "side": float(ref.crop.side),
                }
            )
    return {
        "instance_id": inst.instance_id,
        "agent_id": inst.agent_id,
        "camera_view": inst.camera_view,
        "split": inst.split,
        "motion_change": bool(inst.motion_change),
        "cv_ade": float(inst.cv_ade),
        "history": [[int(t), float(x), float(y)] for t, (x, y) in zip(inst.history_t_us, inst.history_xy)],
        "future": [[int(t), float(x), float(y)] for t, (x, y) in zip(inst.future_t_us, inst.future_xy)],
        "crop_refs": crop_refs,
    }


def instances_text(instances) -> str:
    return "".join(_dump_line(instance_to_record(inst)) + "\n" for inst in instances)


def write_instances(instances, path) -> None:
    """Write instances as line-delimited JSON."""
    write_atomic(path, instances_text(instances))


def _instance_from_record(line_no: int, record: dict) -> PredictionInstance:
    if set(record) != INSTANCE_FIELDS:
        missing = INSTANCE_FIELDS - set(record)
        extra = set(record) - INSTANCE_FIELDS
        raise MalformedRecord(line_no, f"bad instance fields (missing {sorted(missing)}, extra {sorted(extra)})")
    try:
        history = np.asarray(record["history"], dtype=float)
        future = np.asarray(record["future"], dtype=float)
        if history.ndim != 2 or history.shape[1] != 3 or future.ndim != 2 or future.shape[1] != 3:
            raise ValueError("history/future rows must be [t_us, x, y]")
        crop_refs = []
        for entry in record["crop_refs"]:
            if entry is None:
                crop_refs.append(None)
                continue
            if set(entry) != CROP_REF_FIELDS:
                raise ValueError(f"bad crop_ref fields {sorted(entry)}")
            crop_refs.append(
                CropRef(
                    frame_token=entry["frame_token"],
                    crop=SquareCrop(center_u=entry["center_u"], center_v=entry["center_v"], side=entry["side"]),
                )
            )
        return PredictionInstance(
            instance_id=record["instance_id"],
            agent_id=record["agent_id"],
            camera_view=record["camera_view"],
            split=record["split"],
            history_t_us=history[:, 0].astype(np.int64),
            history_xy=history[:, 1:3],
            future_t_us=future[:, 0].astype(np.int64),
            future_xy=future[:, 1:3],
            crop_refs=tuple(crop_refs),
            motion_change=bool(record["motion_change"]),
            cv_ade=float(record["cv_ade"]),
        )
    except MalformedRecord:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def read_instances(path) -> list[PredictionInstance]:
    """Read an instances file; raises MalformedRecord with the offending line number."""
    return [_instance_from_record(line_no, record) for line_no, record in _records(path)]


def prediction_to_record(pred: MultimodalPrediction) -> dict:
    modes = []
    for mode in pred.modes:
        steps = []
        for t, mean, cov in zip(mode.timestamps_us, mode.means, mode.covariances):
            steps.append(
                [int(t), float(mean[0]), float(mean[1]), float(cov[0, 0]), float(cov[0, 1]), float(cov[1, 1])]
            )
        modes.append({"weight": float(mode.weight), "steps": steps})
    return {"instance_id": pred.instance_id, "modes": modes}


def predictions_text(predictions) -> str:
    return "".join(_dump_line(prediction_to_record(pred)) + "\n" for pred in predictions)


def write_predictions(predictions, path) -> None:
    """Write multimodal predictions as line-delimited JSON."""
    write_atomic(path, predictions_text(predictions))


def _prediction_from_record(line_no: int, record: dict) -> MultimodalPrediction:
    if set(record) != {"instance_id", "modes"}:
        raise MalformedRecord(line_no, f"bad prediction fields {sorted(record)}")
    try:
        modes = []
        for mode in record["modes"]:
            if set(mode) != {"weight", "steps"}:
                raise ValueError(f"bad mode fields {sorted(mode)}")
            steps = np.asarray(mode["steps"], dtype=float)
            if steps.ndim != 2 or steps.shape[1] != 6:
                raise ValueError("mode steps rows must be [t_us, x, y, sxx, sxy, syy]")
            covs = np.empty((len(steps), 2, 2))
            covs[:, 0, 0] = steps[:, 3]
            covs[:, 0, 1] = steps[:, 4]
            covs[:, 1, 0] = steps[:, 4]
            covs[:, 1, 1] = steps[:, 5]
            modes.append(
                ModePrediction(
                    weight=float(mode["weight"]),
                    timestamps_us=steps[:, 0].astype(np.int64),
                    means=steps[:, 1:3],
                    covariances=covs,
                )
            )
        return MultimodalPrediction(instance_id=record["instance_id"], modes=tuple(modes))
    except (TypeError, ValueError, KeyError) as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def read_predictions(path) -> list[MultimodalPrediction]:
    """Read a predictions file; raises MalformedRecord with the line number."""
    return [_prediction_from_record(line_no, record) for line_no, record in _records(path)]


def raw_track_to_record(track: RawTrack) -> dict:
    return {
        "agent_id": track.agent_id,
        "camera_view": track.camera_view,
        "samples": [
            [
                int(s.timestamp_us),
                float(s.position[0]),
                float(s.position[1]),
                float(s.position[2]),
                float(s.box_size[0]),
                float(s.box_size[1]),
                float(s.box_size[2]),
                float(s.yaw),
            ]
            for s in track.samples
        ],
    }


def write_raw_tracks(tracks, path) -> None:
    write_atomic(path, "".join(_dump_line(raw_track_to_record(t)) + "\n" for t in tracks))


def read_raw_tracks(path) -> list[RawTrack]:
    tracks = []
    for line_no, record in _records(path):
        if set(record) != {"agent_id", "camera_view", "samples"}:
            raise MalformedRecord(line_no, f"bad raw track fields {sorted(record)}")
        try:
            samples = tuple(
                RawSample(
                    timestamp_us=int(row[0]),
                    position=np.array(row[1:4], dtype=float),
                    box_size=np.array(row[4:7], dtype=float),
                    yaw=float(row[7]),
                )
                for row in record["samples"]
            )
            tracks.append(RawTrack(agent_id=record["agent_id"], camera_view=record["camera_view"], samples=samples))
        except (TypeError, ValueError, IndexError, KeyError) as exc:
            raise MalformedRecord(line_no, str(exc)) from exc
    return tracks


def read_camera_manifest(path) -> dict[str, tuple[CameraModel, list[tuple[str, int]]]]:
    """Read per-view camera models and frame timestamp lists.

    Each line holds one view: ``{camera_view, model: {fx, fy, cx, cy, width,
    height, rotation, translation}, frames: [[frame_token, t_us], ...]}``.
    Extrinsics are static per view, which is adequate for desk-scale data;
    a converter feeding real drive logs should emit one manifest per clip so
    camera motion stays small within it.
    """
    views: dict[str, tuple[CameraModel, list[tuple[str, int]]]] = {}
    for line_no, record in _records(path):
        if set(record) != {"camera_view", "model", "frames"}:
            raise MalformedRecord(line_no, f"bad camera manifest fields {sorted(record)}")
        try:
            m = record["model"]
            cam = CameraModel(
                fx=float(m["fx"]),
                fy=float(m["fy"]),
                cx=float(m["cx"]),
                cy=float(m["cy"]),
                rotation=np.asarray(m["rotation"], dtype=float),
                translation=np.asarray(m["translation"], dtype=float),
                image_size=(int(m["width"]), int(m["height"])),
            )
            frames = [(str(token), int(t_us)) for token, t_us in record["frames"]]
        except (TypeError, ValueError, KeyError) as exc:
            raise MalformedRecord(line_no, str(exc)) from exc
        views[record["camera_view"]] = (cam, frames)
    return views
