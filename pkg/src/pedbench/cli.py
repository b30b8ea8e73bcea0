"""Command-line harness tying the benchmark pipeline together.

Subcommands:

* ``build-dataset`` -- raw tracks file to instances files (full and
  motion-changes variants) under the configured resampling mode, with crop
  geometry attached when a camera manifest is supplied.
* ``synth-gen`` -- seeded synthetic corpus to an instances file, a scenario
  script sidecar, and the raw tracks it was derived from.
* ``evaluate`` -- instances plus either a built-in predictor or an external
  predictions file, producing a report in text and JSON.
* ``leakage-audit`` -- raw tracks plus a resampling mode, producing a
  motion-onset lead-time report.
* ``report`` -- merge several evaluate outputs into one table.

Failures exit nonzero with a single machine-parsable JSON line on stderr,
and partially written outputs are removed. ``PEDBENCH_THREADS`` caps the
worker count used to fan prediction out across instances.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import dataset as ds
from . import io as pio
from . import metrics as pm
from . import synth
from .config import RunConfig, config_to_dict, config_to_ini_text, load_config
from .errors import PedbenchError, TooFewInstances
from .geometry import attach_crops
from .tracks import match_camera_frames, resample_track
from .validation import check_prediction_set


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("PEDBENCH_THREADS", "1")))
    except ValueError:
        return 1


def parallel_predict(predictor, instances):
    """Fan prediction out across worker threads; output order is unchanged."""
    workers = worker_count()
    if workers == 1 or len(instances) < 2 * workers:
        return predictor.predict(instances)
    chunk = (len(instances) + workers - 1) // workers
    batches = [instances[i : i + chunk] for i in range(0, len(instances), chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(predictor.predict, batches))
    return [pred for batch in results for pred in batch]


class _ArtifactSink:
    """Tracks written outputs so a failed run leaves nothing behind."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        p = self.out_dir / name
        self.written.append(p)
        return p

    def discard_all(self):
        for p in self.written:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _select_variant(instances, cfg: RunConfig):
    if cfg.variant == "motion-changes":
        selection = ds.select_motion_changes(instances, threshold=cfg.motion_threshold, seed=cfg.selection_seed)
        return list(selection.variant)
    return list(instances)


def _filter_split(instances, cfg: RunConfig):
    if cfg.eval_split == "all":
        return instances
    return [inst for inst in instances if inst.split == cfg.eval_split]


def cmd_build_dataset(args, cfg: RunConfig, sink: _ArtifactSink) -> None:
    tracks = pio.read_raw_tracks(args.tracks)
    cameras = pio.read_camera_manifest(args.cameras) if args.cameras else {}

    instances = []
    for raw in tracks:
        resampled = resample_track(raw, rate=cfg.rate, mode=cfg.resample_mode)
        if raw.camera_view in cameras:
            cam, frames = cameras[raw.camera_view]
            resampled = match_camera_frames(resampled, frames, max_gap_us=cfg.max_match_gap_us)
            resampled = attach_crops(
                resampled, raw, cam, mode=cfg.resample_mode, expand_factor=cfg.crop_expand_factor
            )
        instances.extend(ds.extract_instances(resampled, cfg.task))

    split_by_agent = ds.assign_splits([inst.agent_id for inst in instances], cfg.split)
    instances = ds.apply_splits(instances, split_by_agent)
    selection = ds.select_motion_changes(instances, threshold=cfg.motion_threshold, seed=cfg.selection_seed)
    full = sorted(selection.tagged, key=lambda inst: inst.instance_id)

    pio.write_instances(full, sink.path("instances_full.jsonl"))
    pio.write_instances(selection.variant, sink.path("instances_motion_changes.jsonl"))
    pio.write_atomic(sink.path("build_config.ini"), config_to_ini_text(cfg))
    print(f"built {len(full)} instances ({selection.n_flagged} flagged) from {len(tracks)} tracks -> {sink.out_dir}")


def cmd_synth_gen(args, cfg: RunConfig, sink: _ArtifactSink) -> None:
    template = synth.CorpusTemplate(
        duration=cfg.synth_duration,
        noise_sigma=cfg.noise_sigma,
        native_rate=cfg.native_rate,
        fine_rate=cfg.fine_rate,
    )
    instances, scenarios = synth.generate_corpus(
        n=cfg.synth_n,
        template=template,
        seed=cfg.synth_seed,
        task_cfg=cfg.task,
        split_cfg=cfg.split,
        resample_mode=cfg.resample_mode,
        motion_threshold=cfg.motion_threshold,
    )
    instances = sorted(instances, key=lambda inst: inst.instance_id)
    raw_tracks = [
        synth.track_from_scenario(s, native_rate=cfg.native_rate, fine_rate=cfg.fine_rate) for s in scenarios
    ]
    pio.write_instances(instances, sink.path("instances.jsonl"))
    pio.write_atomic(sink.path("scenarios.json"), synth.scenarios_sidecar_text(scenarios))
    pio.write_raw_tracks(raw_tracks, sink.path("raw_tracks.jsonl"))
    pio.write_atomic(sink.path("synth_config.ini"), config_to_ini_text(cfg))
    flagged = sum(1 for inst in instances if inst.motion_change)
    print(f"generated {cfg.synth_n} scenarios -> {len(instances)} instances ({flagged} flagged) -> {sink.out_dir}")


def cmd_evaluate(args, cfg: RunConfig, sink: _ArtifactSink) -> None:
    instances = pio.read_instances(args.instances)
    instances = _filter_split(_select_variant(instances, cfg), cfg)
    if not instances:
        raise ValueError("no instances remain after variant/split selection")
    instances = sorted(instances, key=lambda inst: inst.instance_id)

    if args.predictions:
        predictor_name = args.name or "external"
        predictions = check_prediction_set(instances, pio.read_predictions(args.predictions))
    else:
        predictor_name = args.predictor or cfg.predictor
        predictor = cfg.make_predictor(predictor_name)
        if cfg.schedule == "calibrated":
            val = [inst for inst in instances if inst.split == "val"]
            if len(val) < cfg.min_calibration_instances:
                raise TooFewInstances(
                    f"calibration needs >= {cfg.min_calibration_instances} val instances, found {len(val)}"
                )
            predictor.fit(val)
        predictions = parallel_predict(predictor, instances)
        pio.write_predictions(predictions, sink.path("predictions.jsonl"))

    table = pm.evaluate(
        instances,
        predictions,
        horizons=cfg.horizons,
        predictor_name=predictor_name,
        variant=cfg.variant.replace("-", "_"),
        horizon_mode=cfg.horizon_mode,
    )
    report = {"config": config_to_dict(cfg), **pm.table_to_json_dict(table)}
    pio.write_atomic(sink.path("report.json"), _json_text(report))
    text = pm.render_tables([table])
    pio.write_atomic(sink.path("report.txt"), text)
    pio.write_atomic(sink.path("eval_config.ini"), config_to_ini_text(cfg))
    print(text, end="")


def cmd_leakage_audit(args, cfg: RunConfig, sink: _ArtifactSink) -> None:
    tracks = pio.read_raw_tracks(args.tracks)
    entries = []
    for raw in tracks:
        resampled = resample_track(raw, rate=cfg.rate, mode=cfg.resample_mode)
        entries.append(ds.audit_leakage(raw, resampled))
    report = ds.LeakageReport(entries=tuple(entries))
    leads = [e.lead_seconds for e in report.entries if e.lead_seconds is not None]
    payload = {
        "config": config_to_dict(cfg),
        "summary": {
            "n_tracks": len(report.entries),
            "n_with_lead": len(leads),
            "n_positive": report.n_positive,
            "mean_positive_lead": report.mean_positive_lead,
        },
        "entries": [
            {
                "agent_id": e.agent_id,
                "camera_view": e.camera_view,
                "raw_onset_us": e.raw_onset_us,
                "resampled_onset_us": e.resampled_onset_us,
                "lead_seconds": e.lead_seconds,
            }
            for e in report.entries
        ],
    }
    pio.write_atomic(sink.path("leakage.json"), _json_text(payload))
    print(
        f"audited {len(report.entries)} tracks ({cfg.resample}): "
        f"{report.n_positive} with positive lead, mean positive lead "
        f"{report.mean_positive_lead if report.mean_positive_lead is not None else 'n/a'}"
    )


def cmd_report(args, cfg: RunConfig, sink: _ArtifactSink) -> None:
    del cfg
    sources = []
    tables = []
    for path in args.reports:
        with open(path) as handle:
            data = json.load(handle)
        tables.append(pm.table_from_json_dict(data))
        sources.append({"path": str(path), **data})
    text = pm.render_tables(tables)
    pio.write_atomic(sink.path("report.txt"), text)
    pio.write_atomic(sink.path("report.json"), _json_text({"sources": sources}))
    print(text, end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pedbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="INI config file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="base seed (overrides [run] seed)")
        p.add_argument("--horizons", default=None, help="comma-separated horizons in seconds")

    p = sub.add_parser("build-dataset", help="raw tracks -> instances files (full + motion-changes)")
    common(p)
    p.add_argument("--tracks", type=Path, required=True, help="raw tracks JSONL")
    p.add_argument("--cameras", type=Path, default=None, help="camera manifest JSONL (for crop geometry)")
    p.add_argument("--resample", choices=("anti-causal", "causal"), default=None)

    p = sub.add_parser("synth-gen", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--n", type=int, default=None, help="number of scenarios")
    p.add_argument("--resample", choices=("anti-causal", "causal"), default=None)

    p = sub.add_parser("evaluate", help="score a predictor or predictions file on an instances file")
    common(p)
    p.add_argument("--instances", type=Path, required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--predictor", choices=("cv", "da", "ensemble"), default=None)
    group.add_argument("--predictions", type=Path, default=None, help="external predictions JSONL")
    p.add_argument("--name", default=None, help="display name for external predictions")
    p.add_argument("--variant", choices=("full", "motion-changes"), default=None)
    p.add_argument("--split", choices=("all", "train", "val", "test"), default=None)

    p = sub.add_parser("leakage-audit", help="onset lead-time audit of a resampling mode")
    common(p)
    p.add_argument("--tracks", type=Path, required=True)
    p.add_argument("--resample", choices=("anti-causal", "causal"), default=None)

    p = sub.add_parser("report", help="merge evaluate outputs into one table")
    common(p)
    p.add_argument("reports", nargs="+", type=Path, help="report.json files from evaluate runs")
    return parser


_COMMANDS = {
    "build-dataset": cmd_build_dataset,
    "synth-gen": cmd_synth_gen,
    "evaluate": cmd_evaluate,
    "leakage-audit": cmd_leakage_audit,
    "report": cmd_report,
}


def _overrides_from(args) -> dict:
    overrides = {
        "seed": args.seed,
        "variant": getattr(args, "variant", None),
        "resample": getattr(args, "resample", None),
        "predictor": getattr(args, "predictor", None),
        "synth_n": getattr(args, "n", None),
        "eval_split": getattr(args, "split", None),
    }
    if args.horizons:
        overrides["horizons"] = tuple(float(h) for h in args.horizons.split(","))
    if args.seed is not None:
        # reseeding from the command line also reseeds the derived seeds
        overrides.update({"split_seed": args.seed, "selection_seed": args.seed, "synth_seed": args.seed})
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sink = _ArtifactSink(args.out)
    try:
        cfg = load_config(args.config, _overrides_from(args))
        _COMMANDS[args.command](args, cfg, sink)
    except (PedbenchError, ValueError, OSError, KeyError) as exc:
        sink.discard_all()
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
