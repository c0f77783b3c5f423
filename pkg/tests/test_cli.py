import json
from pathlib import Path

import pytest

from nucleidet.cli import main
from nucleidet.data import load_annotations


def _synth(tmp_path, name="data", count=8, seed=5, extra=()):
    out = tmp_path / name
    code = main(
        [
            "synth", "--out", str(out), "--seed", str(seed),
            "--count", str(count), "--image-size", "96",
            "--min-objects", "6", "--max-objects", "10",
            "--radius-min", "3", "--radius-max", "6",
            *extra,
        ]
    )
    assert code == 0
    return out


def _dir_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestSynth:
    def test_writes_dataset(self, tmp_path):
        out = _synth(tmp_path)
        aset = load_annotations(out / "annotations.json")
        assert len(aset.images) == 8
        for rec in aset.images:
            assert (out / rec.file_name).is_file()

    def test_deterministic(self, tmp_path):
        a = _synth(tmp_path, "a")
        b = _synth(tmp_path, "b")
        assert _dir_bytes(a) == _dir_bytes(b)

    def test_empty_dataset_is_valid(self, tmp_path):
        out = tmp_path / "empty"
        assert main(["synth", "--out", str(out), "--seed", "1", "--count", "0"]) == 0
        aset = load_annotations(out / "annotations.json")
        assert aset.images == []

    def test_seed_required(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "x")]) == 2


class TestForge:
    def test_builtin_forge_is_deterministic(self, tmp_path):
        data = _synth(tmp_path)
        out_a = tmp_path / "bundle_a.json"
        out_b = tmp_path / "bundle_b.json"
        for out in (out_a, out_b):
            code = main(
                ["forge", "--dataset", str(data), "--out", str(out), "--seed", "5"]
            )
            assert code == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        doc = json.loads(out_a.read_text())
        assert doc["mode"] == "full"
        assert doc["m"] == 3
        assert doc["prompts"]

    def test_noun_mode_renders_default_prompt(self, tmp_path, capsys):
        data = _synth(tmp_path)
        out = tmp_path / "bundle.json"
        code = main(
            [
                "forge", "--dataset", str(data), "--out", str(out), "--seed", "5",
                "--mode", "noun", "--nouns", "nuclei,nucleus,cyteblast,karyon",
                "--no-attr-aug", "--no-noun-aug",
            ]
        )
        assert code == 0
        assert "query: nuclei. nucleus. cyteblast. karyon" in capsys.readouterr().out

    def test_m_honored(self, tmp_path):
        data = _synth(tmp_path)
        out = tmp_path / "bundle.json"
        code = main(
            ["forge", "--dataset", str(data), "--out", str(out), "--seed", "5", "--m", "1",
             "--no-attr-aug"]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["m"] == 1
        assert len(doc["prompts"]) == 1  # 1 shape x 1 color x 1 noun

    def test_missing_dataset_is_data_error(self, tmp_path):
        code = main(
            ["forge", "--dataset", str(tmp_path / "nope"), "--out",
             str(tmp_path / "b.json"), "--seed", "1"]
        )
        assert code == 4


class TestDetect:
    def test_detect_then_eval(self, tmp_path, capsys):
        data = _synth(tmp_path)
        pred = tmp_path / "pred.json"
        code = main(
            [
                "detect", "--dataset", str(data), "--out", str(pred), "--seed", "5",
                "--prompt", "round purple nuclei",
                "--drop-rate", "0", "--jitter-px", "0", "--fp-rate", "0",
                "--score-spread", "0",
            ]
        )
        assert code == 0
        code = main(
            ["eval", "--pred", str(pred), "--gt", str(data / "annotations.json")]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "mAP" in out
        assert "1.000" in out  # noiseless detections score perfectly

    def test_requires_bundle_or_prompt(self, tmp_path):
        data = _synth(tmp_path)
        code = main(
            ["detect", "--dataset", str(data), "--out", str(tmp_path / "p.json"),
             "--seed", "5"]
        )
        assert code == 2

    def test_tiled_detect_with_stitch(self, tmp_path):
        data = _synth(tmp_path)
        pred = tmp_path / "pred.json"
        code = main(
            [
                "detect", "--dataset", str(data), "--out", str(pred), "--seed", "5",
                "--prompt", "nuclei", "--tile-size", "64", "--grid-n", "2", "--stitch",
                "--drop-rate", "0", "--jitter-px", "0", "--fp-rate", "0",
                "--score-spread", "0",
            ]
        )
        assert code == 0
        stitched = load_annotations(pred)
        gt = load_annotations(data / "annotations.json")
        assert sorted(stitched.image_ids()) == sorted(gt.image_ids())


class TestSelftrain:
    def _run(self, tmp_path, data, name, extra=()):
        run_dir = tmp_path / name
        code = main(
            [
                "selftrain", "--dataset", str(data), "--out", str(run_dir),
                "--seed", "5", "--prompt", "round purple nuclei",
                "--max-rounds", "2", "--train-n", "5", "--test-n", "3",
                "--val-n", "0", *extra,
            ]
        )
        return code, run_dir

    def test_end_to_end(self, tmp_path, capsys):
        data = _synth(tmp_path)
        code, run_dir = self._run(tmp_path, data, "run")
        assert code == 0
        assert (run_dir / "run_config.json").is_file()
        assert (run_dir / "rounds" / "0" / "pseudo_labels.json").is_file()
        assert (run_dir / "rounds" / "1" / "report.json").is_file()
        out = capsys.readouterr().out
        assert "best round" in out

    def test_refuses_nonempty_dir_without_force(self, tmp_path):
        data = _synth(tmp_path)
        code, run_dir = self._run(tmp_path, data, "run")
        assert code == 0
        code, _ = self._run(tmp_path, data, "run")
        assert code == 2
        code, _ = self._run(tmp_path, data, "run", extra=("--force",))
        assert code == 0


class TestEval:
    def test_identity_all_ones(self, tmp_path, capsys):
        data = _synth(tmp_path)
        gt = data / "annotations.json"
        capsys.readouterr()
        code = main(["eval", "--pred", str(gt), "--gt", str(gt)])
        assert code == 0
        row = capsys.readouterr().out.splitlines()[1].split()
        assert all(float(v) == 1.0 for v in row)

    def test_empty_predictions_all_zeros(self, tmp_path, capsys):
        data = _synth(tmp_path)
        gt = data / "annotations.json"
        empty = tmp_path / "empty.json"
        doc = json.loads(gt.read_text())
        doc["annotations"] = []
        empty.write_text(json.dumps(doc))
        capsys.readouterr()
        code = main(["eval", "--pred", str(empty), "--gt", str(gt)])
        assert code == 0
        row = capsys.readouterr().out.splitlines()[1].split()
        assert all(float(v) == 0.0 for v in row)

    def test_csv_emission(self, tmp_path):
        data = _synth(tmp_path)
        gt = data / "annotations.json"
        csv_path = tmp_path / "report.csv"
        code = main(["eval", "--pred", str(gt), "--gt", str(gt), "--emit-csv", str(csv_path)])
        assert code == 0
        assert csv_path.read_text().startswith("map,ap50,ap75,ar,precision50,recall50")

    def test_malformed_pred_is_data_error(self, tmp_path):
        data = _synth(tmp_path)
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        code = main(["eval", "--pred", str(bad), "--gt", str(data / "annotations.json")])
        assert code == 4


class TestConfigFile:
    def test_flags_override_config(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"seed": 1, "count": 3, "image-size": 96}))
        out = tmp_path / "from_config"
        code = main(["synth", "--config", str(config), "--out", str(out), "--count", "2"])
        assert code == 0
        aset = load_annotations(out / "annotations.json")
        assert len(aset.images) == 2  # flag beat the config value

    def test_missing_config_is_config_error(self, tmp_path):
        code = main(["synth", "--config", str(tmp_path / "nope.json"), "--out", "x"])
        assert code == 2
