"""Command-line entry points: track, evaluate, simulate, weights.

Settings resolve with command-line flags taking precedence over a JSON
config file, which takes precedence over built-in defaults. Exit codes:
0 on success, 1 when some sequences failed but others completed, 2 on an
invalid invocation.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import shlex
import sys
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from .dataset import (
    SequenceRecord,
    compute_sampling_weights,
    frame_counts_by_discipline,
    load_manifest,
    save_manifest,
)
from .evaluation import (
    FramePrediction,
    aggregate_report,
    evaluate_frames,
    render_table,
    report_to_dict,
)
from .geometry import BBox
from .localizer import Localizer, ScriptedLocalizer, ScriptedWorld
from .synth import (
    SUITE_FAMILIES,
    ScenarioScript,
    generate_world,
    load_script,
    scenario_suite,
    save_script,
)
from .tracker import StepOutput, TrackerConfig, run_sequence
from .wire import ExternalLocalizer

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

# Named tracker presets. The two ablation presets run the straight-line
# pipeline; they differ only in which model weights their endpoint serves,
# which is outside this package's control.
PRESETS = {
    "baseline": {"reattempt_enabled": False, "itu_enabled": False},
    "finetuned": {"reattempt_enabled": False, "itu_enabled": False},
    "ours": {"reattempt_enabled": True, "itu_enabled": True},
}

TRACKER_FIELDS = tuple(f.name for f in dataclasses.fields(TrackerConfig))

ABLATE_FLAGS = {"reattempt": "reattempt_enabled", "itu": "itu_enabled"}


class CliError(Exception):
    """Invalid invocation discovered after argument parsing."""


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return data


def _parse_ablate(text: str) -> dict[str, bool]:
    """Parse ``reattempt=off,itu=off`` style ablation switches."""
    overrides: dict[str, bool] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, value = item.partition("=")
        if not sep or name not in ABLATE_FLAGS or value not in ("on", "off"):
            raise CliError(
                f"bad ablation switch {item!r}; expected reattempt=on|off or itu=on|off"
            )
        overrides[ABLATE_FLAGS[name]] = value == "on"
    return overrides


def _setting(args: argparse.Namespace, file_cfg: dict, name: str, default: Any) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in file_cfg:
        return file_cfg[name]
    return default


def _resolve_tracker_config(args: argparse.Namespace, file_cfg: dict) -> TrackerConfig:
    values: dict[str, Any] = {}
    preset = _setting(args, file_cfg, "preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise CliError(f"unknown preset {preset!r}")
        values.update(PRESETS[preset])

    file_tracker = file_cfg.get("tracker", {})
    if not isinstance(file_tracker, dict):
        raise CliError("config key 'tracker' must be an object")
    unknown = set(file_tracker) - set(TRACKER_FIELDS)
    if unknown:
        raise CliError(f"unknown tracker settings in config file: {sorted(unknown)}")
    values.update(file_tracker)

    for name in TRACKER_FIELDS:
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            values[name] = cli_value

    ablate = getattr(args, "ablate", None)
    if ablate is None:
        ablate = file_cfg.get("ablate")
    if ablate is not None:
        values.update(_parse_ablate(ablate))

    try:
        return TrackerConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid tracker settings: {exc}") from exc


def _render_frame(record: SequenceRecord, world: ScriptedWorld, index: int) -> np.ndarray:
    """Rasterize one synthetic frame: a filled box on a flat background."""
    dims = record.frame_dims
    img = np.full((dims.height, dims.width, 3), 64, dtype=np.uint8)
    box = world.gt[index]
    if box is not None and world.visible[index] and box.area > 0:
        x1 = max(int(round(box.x)), 0)
        y1 = max(int(round(box.y)), 0)
        x2 = min(int(round(box.x2)), dims.width)
        y2 = min(int(round(box.y2)), dims.height)
        if x2 > x1 and y2 > y1:
            img[y1:y2, x1:x2] = (200, 80, 40)
    return img


def _load_image(path: Path) -> np.ndarray:
    import cv2

    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise CliError(f"cannot read image {path}")
    return img[:, :, ::-1]


def _frame_iter(
    record: SequenceRecord, world: ScriptedWorld | None, backend_kind: str
) -> Iterator[Any]:
    source = record.frame_source
    if source.startswith("synth:"):
        if backend_kind == "scripted":
            return iter(range(record.frame_count))
        assert world is not None
        return (_render_frame(record, world, i) for i in range(record.frame_count))
    if source.startswith("imagedir:"):
        if backend_kind == "scripted":
            raise CliError(
                f"{record.sequence_id}: image sequences need --backend external"
            )
        root = Path(source[len("imagedir:") :])
        files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        if len(files) != record.frame_count:
            raise CliError(
                f"{record.sequence_id}: {len(files)} images for "
                f"{record.frame_count} annotated frames"
            )
        return (_load_image(p) for p in files)
    raise CliError(f"{record.sequence_id}: unsupported frame source {source!r}")


def _open_backend(backend_kind: str, endpoint: str | None, world: ScriptedWorld | None) -> Localizer:
    if backend_kind == "scripted":
        assert world is not None
        return ScriptedLocalizer(world)
    if endpoint is None:
        raise CliError("--backend external requires --endpoint")
    if endpoint.startswith("tcp:"):
        _, host, port = endpoint.split(":", 2)
        return ExternalLocalizer.connect_tcp(host, int(port))
    return ExternalLocalizer.spawn(shlex.split(endpoint))


def _write_outputs(
    out_dir: Path, record: SequenceRecord, outputs: Sequence[StepOutput]
) -> None:
    pred_dir = out_dir / "preds"
    tele_dir = out_dir / "telemetry"
    pred_dir.mkdir(parents=True, exist_ok=True)
    tele_dir.mkdir(parents=True, exist_ok=True)

    first = record.gt[0]
    lines = [f"{first.x:.6f},{first.y:.6f},{first.w:.6f},{first.h:.6f},1.000000"]
    for out in outputs:
        b = out.bbox
        lines.append(f"{b.x:.6f},{b.y:.6f},{b.w:.6f},{b.h:.6f},{out.confidence:.6f}")
    (pred_dir / f"{record.sequence_id}.txt").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )

    tele_lines = []
    for i, out in enumerate(outputs, start=1):
        tele_lines.append(
            json.dumps(
                {
                    "frame": i,
                    "confidence": out.confidence,
                    "reattempted": out.reattempted,
                    "template_updated": out.template_updated,
                    "update_cause": out.update_cause,
                },
                sort_keys=True,
            )
        )
    (tele_dir / f"{record.sequence_id}.jsonl").write_text(
        "\n".join(tele_lines) + "\n", encoding="utf-8"
    )


def _track_one(
    record: SequenceRecord,
    world: ScriptedWorld | None,
    tracker_cfg: TrackerConfig,
    backend_kind: str,
    endpoint: str | None,
    out_dir: Path,
) -> None:
    if record.gt[0] is None:
        raise CliError(f"{record.sequence_id}: first frame has no ground-truth box")
    frames = _frame_iter(record, world, backend_kind)
    backend = _open_backend(backend_kind, endpoint, world)
    try:
        outputs = run_sequence(frames, record.frame_dims, record.gt[0], tracker_cfg, backend)
    finally:
        closer = getattr(backend, "close", None)
        if closer is not None:
            closer()
    _write_outputs(out_dir, record, outputs)


def _load_worlds(
    records: Sequence[SequenceRecord], scenario_dir: Path
) -> dict[str, ScriptedWorld]:
    worlds: dict[str, ScriptedWorld] = {}
    for record in records:
        if not record.frame_source.startswith("synth:"):
            continue
        script_path = scenario_dir / f"{record.sequence_id}.json"
        if not script_path.is_file():
            raise CliError(f"{record.sequence_id}: missing scenario file {script_path}")
        world, _ = generate_world(load_script(script_path))
        worlds[record.sequence_id] = world
    return worlds


def _write_suite(out_dir: Path, scripts: Sequence[ScenarioScript]) -> list[SequenceRecord]:
    scen_dir = out_dir / "scenarios"
    scen_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for script in scripts:
        save_script(scen_dir / f"{script.scenario_id}.json", script)
        _, record = generate_world(script)
        records.append(record)
    save_manifest(out_dir / "manifest.json", records)
    return records


def _suite_families(name: str) -> tuple[str, ...]:
    if name == "all":
        return SUITE_FAMILIES
    if name in SUITE_FAMILIES:
        return (name,)
    raise CliError(f"unknown suite {name!r}; pick one of all, cs, occ, sc, mix")


def _collect_evals(records: Sequence[SequenceRecord], pred_dir: Path):
    """Pair manifest records with their prediction files, noting misses."""
    evals = []
    skipped = []
    for record in records:
        pred_path = pred_dir / f"{record.sequence_id}.txt"
        if not pred_path.is_file():
            skipped.append(f"{record.sequence_id}: no prediction file")
            continue
        try:
            preds = load_predictions(pred_path)
            evals.append(
                evaluate_frames(record.sequence_id, record.discipline, preds, record.gt)
            )
        except ValueError as exc:
            skipped.append(f"{record.sequence_id}: {exc}")
    for line in skipped:
        print(f"skipping {line}", file=sys.stderr)
    return evals, skipped


def _write_report(out_dir: Path, evals, quiet: bool) -> None:
    report = aggregate_report(evals)
    (out_dir / "report.json").write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    table = render_table(report)
    (out_dir / "report.txt").write_text(table, encoding="utf-8")
    if not quiet:
        print(table, end="")


def load_predictions(path: str | Path) -> list[FramePrediction]:
    """Parse a prediction file of ``x,y,w,h,confidence`` lines."""
    path = Path(path)
    preds = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                x, y, w, h, conf = (float(p) for p in parts)
                preds.append(FramePrediction(BBox(x, y, w, h), conf))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return preds


def cmd_track(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    tracker_cfg = _resolve_tracker_config(args, file_cfg)
    backend_kind = _setting(args, file_cfg, "backend", "scripted")
    if backend_kind not in ("scripted", "external"):
        raise CliError(f"unknown backend {backend_kind!r}")
    endpoint = _setting(args, file_cfg, "endpoint", None)
    seed = _setting(args, file_cfg, "seed", None)
    parallel = int(_setting(args, file_cfg, "parallel", 1))
    if parallel < 1:
        raise CliError("--parallel must be >= 1")
    suite = _setting(args, file_cfg, "suite", None)
    manifest = _setting(args, file_cfg, "manifest", None)
    variants = int(_setting(args, file_cfg, "variants", 100))

    if (suite is None) == (manifest is None):
        raise CliError("pick exactly one of --suite or --manifest")
    if backend_kind == "scripted" and seed is None and suite is not None:
        raise CliError("scripted suite runs need --seed")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    worlds: dict[str, ScriptedWorld]
    if suite is not None:
        if seed is None:
            raise CliError("--suite needs --seed")
        scripts = scenario_suite(int(seed), variants, _suite_families(suite))
        records = _write_suite(out_dir, scripts)
        worlds = {
            script.scenario_id: generate_world(script)[0] for script in scripts
        }
        manifest_note = "manifest.json"
    else:
        manifest_path = Path(manifest)
        if not manifest_path.is_file():
            raise CliError(f"manifest not found: {manifest_path}")
        try:
            records = load_manifest(manifest_path)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        if not records:
            raise CliError(f"{manifest_path}: empty manifest")
        worlds = _load_worlds(records, manifest_path.parent / "scenarios")
        manifest_note = str(manifest)

    failures: dict[str, str] = {}

    def run_one(record: SequenceRecord) -> None:
        _track_one(
            record,
            worlds.get(record.sequence_id),
            tracker_cfg,
            backend_kind,
            endpoint,
            out_dir,
        )

    if parallel == 1:
        for record in records:
            try:
                run_one(record)
            except Exception as exc:
                failures[record.sequence_id] = str(exc)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=parallel) as pool:
            futures = {
                pool.submit(run_one, record): record.sequence_id for record in records
            }
            for future in concurrent.futures.as_completed(futures):
                try:
                    future.result()
                except Exception as exc:
                    failures[futures[future]] = str(exc)

    for seq_id in sorted(failures):
        print(f"failed {seq_id}: {failures[seq_id]}", file=sys.stderr)

    run_manifest = {
        "backend": backend_kind,
        "endpoint": endpoint,
        "seed": seed,
        "parallel": parallel,
        "preset": _setting(args, file_cfg, "preset", None),
        "suite": suite,
        "manifest": manifest_note,
        "tracker": dataclasses.asdict(tracker_cfg),
        "sequences": [r.sequence_id for r in records],
        "failures": {k: failures[k] for k in sorted(failures)},
    }
    (out_dir / "run-manifest.json").write_text(
        json.dumps(run_manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    tracked = [r for r in records if r.sequence_id not in failures]
    if tracked and all(any(b is not None for b in r.gt) for r in tracked):
        evals, _ = _collect_evals(tracked, out_dir / "preds")
        if evals:
            _write_report(out_dir, evals, quiet=args.quiet)

    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise CliError(f"manifest not found: {manifest_path}")
    try:
        records = load_manifest(manifest_path)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    pred_dir = Path(args.pred_dir)
    if not pred_dir.is_dir():
        raise CliError(f"prediction directory not found: {pred_dir}")

    out_dir = Path(args.out) if args.out else pred_dir.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    evals, skipped = _collect_evals(records, pred_dir)
    if not evals:
        raise CliError("no usable predictions for any manifest sequence")
    _write_report(out_dir, evals, quiet=False)
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scripts = scenario_suite(args.seed, args.variants, _suite_families(args.suite))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = _write_suite(out_dir, scripts)
    total = sum(r.frame_count for r in records)
    print(f"wrote {len(records)} scenarios ({total} frames) to {out_dir}")
    return EXIT_OK


def cmd_weights(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise CliError(f"manifest not found: {manifest_path}")
    try:
        records = load_manifest(manifest_path)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if not records:
        raise CliError(f"{manifest_path}: empty manifest")
    counts = frame_counts_by_discipline(records)
    weights = compute_sampling_weights(counts)
    print(f"{'Discipline':<12}{'Frames':>10}{'Weight':>10}")
    for name in sorted(counts, key=lambda n: (-counts[n], n)):
        print(f"{name:<12}{counts[name]:>10}{weights[name]:>10.3f}")
    return EXIT_OK


def _add_tracker_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("tracker settings")
    group.add_argument("--search-factor", dest="search_factor", type=float)
    group.add_argument("--search-size", dest="search_size", type=int)
    group.add_argument("--template-factor", dest="template_factor", type=float)
    group.add_argument("--template-size", dest="template_size", type=int)
    group.add_argument("--update-interval", dest="update_interval", type=int)
    group.add_argument("--conf-threshold", dest="conf_threshold", type=float)
    group.add_argument("--itu-conf-threshold", dest="itu_conf_threshold", type=float)
    group.add_argument("--itu-min-gap", dest="itu_min_gap", type=int)
    group.add_argument(
        "--reattempt-conf-threshold", dest="reattempt_conf_threshold", type=float
    )
    group.add_argument(
        "--reattempt-area-threshold", dest="reattempt_area_threshold", type=float
    )
    group.add_argument(
        "--reattempt-frame-coverage", dest="reattempt_frame_coverage", type=float
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skitrack",
        description="Single-object tracking pipeline with recovery and template refresh.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="run the tracker over a suite or manifest")
    track.add_argument("--suite", choices=("all",) + SUITE_FAMILIES)
    track.add_argument("--manifest")
    track.add_argument("--out", required=True)
    track.add_argument("--seed", type=int)
    track.add_argument("--variants", type=int)
    track.add_argument("--backend", choices=("scripted", "external"))
    track.add_argument("--endpoint", help="tcp:HOST:PORT or a sidecar command line")
    track.add_argument("--parallel", type=int)
    track.add_argument("--preset", choices=sorted(PRESETS))
    track.add_argument("--ablate", help="e.g. reattempt=off,itu=off")
    track.add_argument("--config", help="JSON settings file")
    track.add_argument("--quiet", action="store_true", help="suppress the report table")
    _add_tracker_flags(track)
    track.set_defaults(func=cmd_track)

    ev = sub.add_parser("evaluate", help="score prediction files against a manifest")
    ev.add_argument("--pred-dir", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--out", help="report directory (default: next to preds)")
    ev.set_defaults(func=cmd_evaluate)

    sim = sub.add_parser("simulate", help="write a synthetic scenario suite")
    sim.add_argument("--suite", default="all", choices=("all",) + SUITE_FAMILIES)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--variants", type=int, default=100)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    wt = sub.add_parser("weights", help="print discipline sampling weights")
    wt.add_argument("--manifest", required=True)
    wt.set_defaults(func=cmd_weights)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
