"""End-to-end command-line checks: track, evaluate, simulate, weights, exit codes."""

import json
from pathlib import Path

import pytest

from skitrack.cli import EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, load_predictions, main
from skitrack.dataset import SequenceRecord, save_manifest
from skitrack.geometry import BBox, FrameDims


def _tree_bytes(root: Path, subdirs=("preds", "telemetry")) -> dict:
    """Map relative path -> bytes for the run outputs under root."""
    out = {}
    for sub in subdirs:
        for path in sorted((root / sub).glob("*")):
            out[f"{sub}/{path.name}"] = path.read_bytes()
    return out


def _run_suite(tmp_path: Path, name: str, *extra: str) -> Path:
    out = tmp_path / name
    code = main(
        [
            "track",
            "--suite",
            "cs",
            "--variants",
            "2",
            "--seed",
            "11",
            "--out",
            str(out),
            "--quiet",
            *extra,
        ]
    )
    assert code == EXIT_OK
    return out


class TestSimulate:
    def test_writes_suite_layout(self, tmp_path, capsys):
        out = tmp_path / "suite"
        code = main(["simulate", "--suite", "cs", "--seed", "3", "--variants", "2", "--out", str(out)])
        assert code == EXIT_OK
        assert sorted(p.name for p in (out / "scenarios").glob("*.json")) == [
            "CS-001.json",
            "CS-002.json",
        ]
        assert (out / "manifest.json").is_file()
        assert sorted(p.name for p in (out / "gt").glob("*.txt")) == ["CS-001.txt", "CS-002.txt"]
        assert "wrote 2 scenarios" in capsys.readouterr().out

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            main(["simulate", "--suite", "mix", "--seed", "9", "--variants", "2", "--out", str(tmp_path / name)])
        a, b = tmp_path / "a", tmp_path / "b"
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        for path in (a / "scenarios").glob("*.json"):
            assert path.read_bytes() == (b / "scenarios" / path.name).read_bytes()

    def test_all_families(self, tmp_path):
        out = tmp_path / "suite"
        main(["simulate", "--suite", "all", "--seed", "1", "--variants", "1", "--out", str(out)])
        names = sorted(p.stem for p in (out / "scenarios").glob("*.json"))
        assert names == ["CS-001", "MIX-001", "OCC-001", "SC-001"]


class TestTrack:
    def test_scripted_suite_outputs(self, tmp_path):
        out = _run_suite(tmp_path, "run")
        preds = sorted(p.name for p in (out / "preds").glob("*.txt"))
        assert preds == ["CS-001.txt", "CS-002.txt"]
        assert sorted(p.name for p in (out / "telemetry").glob("*.jsonl")) == [
            "CS-001.jsonl",
            "CS-002.jsonl",
        ]
        # synthetic ground truth is always present, so a report is written
        assert (out / "report.json").is_file()
        assert (out / "report.txt").is_file()
        run_manifest = json.loads((out / "run-manifest.json").read_text())
        assert run_manifest["sequences"] == ["CS-001", "CS-002"]
        assert run_manifest["failures"] == {}
        assert run_manifest["backend"] == "scripted"

    def test_prediction_file_shape(self, tmp_path):
        out = _run_suite(tmp_path, "run")
        scripts = json.loads((out / "scenarios" / "CS-001.json").read_text())
        lines = (out / "preds" / "CS-001.txt").read_text().splitlines()
        assert len(lines) == scripts["length"]  # one line per frame, init included
        first = lines[0].split(",")
        assert len(first) == 5
        assert first[4] == "1.000000"  # init frame carries full confidence
        for line in lines[1:3]:
            assert len(line.split(",")) == 5

    def test_telemetry_records_one_per_tracked_frame(self, tmp_path):
        out = _run_suite(tmp_path, "run")
        lines = (out / "telemetry" / "CS-001.jsonl").read_text().splitlines()
        pred_lines = (out / "preds" / "CS-001.txt").read_text().splitlines()
        assert len(lines) == len(pred_lines) - 1  # no telemetry for the init frame
        rec = json.loads(lines[0])
        assert set(rec) == {"frame", "confidence", "reattempted", "template_updated", "update_cause"}
        assert rec["frame"] == 1

    def test_same_seed_same_bytes(self, tmp_path):
        first = _run_suite(tmp_path, "a")
        second = _run_suite(tmp_path, "b")
        assert _tree_bytes(first) == _tree_bytes(second)
        assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        serial = _run_suite(tmp_path, "serial")
        parallel = _run_suite(tmp_path, "parallel", "--parallel", "2")
        assert _tree_bytes(serial) == _tree_bytes(parallel)

    def test_track_from_manifest(self, tmp_path):
        suite = tmp_path / "suite"
        main(["simulate", "--suite", "cs", "--seed", "11", "--variants", "2", "--out", str(suite)])
        out = tmp_path / "run"
        code = main(
            [
                "track",
                "--manifest",
                str(suite / "manifest.json"),
                "--out",
                str(out),
                "--quiet",
            ]
        )
        assert code == EXIT_OK
        # same scripts as a direct suite run, so identical predictions
        direct = _run_suite(tmp_path, "direct")
        assert _tree_bytes(out) == _tree_bytes(direct)

    def test_preset_flags_recorded(self, tmp_path):
        base = _run_suite(tmp_path, "base", "--preset", "baseline")
        ours = _run_suite(tmp_path, "ours", "--preset", "ours")
        base_cfg = json.loads((base / "run-manifest.json").read_text())["tracker"]
        ours_cfg = json.loads((ours / "run-manifest.json").read_text())["tracker"]
        assert (base_cfg["reattempt_enabled"], base_cfg["itu_enabled"]) == (False, False)
        assert (ours_cfg["reattempt_enabled"], ours_cfg["itu_enabled"]) == (True, True)

    def test_baseline_never_reattempts(self, tmp_path):
        out = _run_suite(tmp_path, "base", "--preset", "baseline")
        for path in (out / "telemetry").glob("*.jsonl"):
            for line in path.read_text().splitlines():
                assert json.loads(line)["reattempted"] is False

    def test_ablate_overrides_preset(self, tmp_path):
        out = _run_suite(tmp_path, "run", "--preset", "ours", "--ablate", "reattempt=off")
        cfg = json.loads((out / "run-manifest.json").read_text())["tracker"]
        assert cfg["reattempt_enabled"] is False
        assert cfg["itu_enabled"] is True  # untouched by the ablation switch

    def test_cli_beats_config_file(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"tracker": {"conf_threshold": 0.52}}))
        out = _run_suite(tmp_path, "run", "--config", str(cfg_path), "--conf-threshold", "0.3")
        cfg = json.loads((out / "run-manifest.json").read_text())["tracker"]
        assert cfg["conf_threshold"] == 0.3

    def test_config_file_beats_defaults(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"tracker": {"conf_threshold": 0.52}}))
        out = _run_suite(tmp_path, "run", "--config", str(cfg_path))
        cfg = json.loads((out / "run-manifest.json").read_text())["tracker"]
        assert cfg["conf_threshold"] == 0.52

    def test_config_file_can_drive_whole_run(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"suite": "cs", "seed": 11, "variants": 2}))
        out = tmp_path / "run"
        code = main(["track", "--config", str(cfg_path), "--out", str(out), "--quiet"])
        assert code == EXIT_OK
        direct = _run_suite(tmp_path, "direct")
        assert _tree_bytes(out) == _tree_bytes(direct)


class TestTrackUsageErrors:
    def test_suite_and_manifest_together(self, tmp_path, capsys):
        code = main(
            [
                "track",
                "--suite",
                "cs",
                "--manifest",
                "x.json",
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert code == EXIT_USAGE
        assert "exactly one" in capsys.readouterr().err

    def test_neither_suite_nor_manifest(self, tmp_path):
        assert main(["track", "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_scripted_suite_needs_seed(self, tmp_path, capsys):
        code = main(["track", "--suite", "cs", "--out", str(tmp_path / "o")])
        assert code == EXIT_USAGE
        assert "--seed" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path, capsys):
        code = main(["track", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
        assert code == EXIT_USAGE
        assert "manifest not found" in capsys.readouterr().err

    def test_bad_ablate_switch(self, tmp_path, capsys):
        code = main(
            [
                "track",
                "--suite",
                "cs",
                "--seed",
                "1",
                "--out",
                str(tmp_path / "o"),
                "--ablate",
                "reattempt=maybe",
            ]
        )
        assert code == EXIT_USAGE
        assert "ablation" in capsys.readouterr().err

    def test_unknown_tracker_key_in_config(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"tracker": {"warp_speed": 9}}))
        code = main(
            [
                "track",
                "--suite",
                "cs",
                "--seed",
                "1",
                "--out",
                str(tmp_path / "o"),
                "--config",
                str(cfg_path),
            ]
        )
        assert code == EXIT_USAGE
        assert "warp_speed" in capsys.readouterr().err

    def test_argparse_rejects_unknown_preset(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["track", "--suite", "cs", "--seed", "1", "--out", str(tmp_path / "o"), "--preset", "magic"])
        assert exc.value.code == EXIT_USAGE

    def test_argparse_requires_out(self):
        with pytest.raises(SystemExit) as exc:
            main(["track", "--suite", "cs", "--seed", "1"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == EXIT_USAGE


class TestEvaluate:
    def test_matches_auto_report(self, tmp_path):
        run = _run_suite(tmp_path, "run")
        out = tmp_path / "eval"
        code = main(
            [
                "evaluate",
                "--pred-dir",
                str(run / "preds"),
                "--manifest",
                str(run / "manifest.json"),
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        assert (out / "report.json").read_bytes() == (run / "report.json").read_bytes()

    def test_missing_prediction_is_partial(self, tmp_path, capsys):
        run = _run_suite(tmp_path, "run")
        (run / "preds" / "CS-002.txt").unlink()
        code = main(
            [
                "evaluate",
                "--pred-dir",
                str(run / "preds"),
                "--manifest",
                str(run / "manifest.json"),
                "--out",
                str(tmp_path / "eval"),
            ]
        )
        assert code == EXIT_PARTIAL
        assert "CS-002" in capsys.readouterr().err

    def test_no_usable_predictions(self, tmp_path):
        run = _run_suite(tmp_path, "run")
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(
            [
                "evaluate",
                "--pred-dir",
                str(empty),
                "--manifest",
                str(run / "manifest.json"),
            ]
        )
        assert code == EXIT_USAGE

    def test_malformed_prediction_skipped(self, tmp_path, capsys):
        run = _run_suite(tmp_path, "run")
        (run / "preds" / "CS-001.txt").write_text("1,2,3\n")
        code = main(
            [
                "evaluate",
                "--pred-dir",
                str(run / "preds"),
                "--manifest",
                str(run / "manifest.json"),
                "--out",
                str(tmp_path / "eval"),
            ]
        )
        assert code == EXIT_PARTIAL
        assert "CS-001" in capsys.readouterr().err


class TestWeights:
    def test_prints_inverse_frequency_table(self, tmp_path, capsys):
        dims = FrameDims(100, 100)
        box = BBox(10.0, 10.0, 20.0, 20.0)
        records = [
            SequenceRecord("a", "AL", dims, [box] * 120, frame_source="synth:a"),
            SequenceRecord("b", "JP", dims, [box] * 40, frame_source="synth:b"),
        ]
        manifest = tmp_path / "manifest.json"
        save_manifest(manifest, records)
        assert main(["weights", "--manifest", str(manifest)]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0].split() == ["Discipline", "Frames", "Weight"]
        assert out[1].split() == ["AL", "120", "1.000"]  # largest group first
        assert out[2].split() == ["JP", "40", "3.000"]

    def test_missing_manifest(self, tmp_path, capsys):
        code = main(["weights", "--manifest", str(tmp_path / "nope.json")])
        assert code == EXIT_USAGE
        assert "manifest not found" in capsys.readouterr().err


class TestLoadPredictions:
    def test_parses_lines_and_skips_blanks(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("1.0,2.0,3.0,4.0,0.5\n\n5.0,6.0,7.0,8.0,0.25\n")
        preds = load_predictions(path)
        assert len(preds) == 2
        assert preds[0].bbox.as_tuple() == (1.0, 2.0, 3.0, 4.0)
        assert preds[1].confidence == 0.25

    def test_wrong_arity_names_line(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("1,2,3,4,0.5\n1,2,3\n")
        with pytest.raises(ValueError, match=r"p\.txt:2"):
            load_predictions(path)

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("1,2,x,4,0.5\n")
        with pytest.raises(ValueError, match=r"p\.txt:1"):
            load_predictions(path)
