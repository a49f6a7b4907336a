import json

import numpy as np
import pytest

from callprobe.audio import write_wav
from callprobe.cli import main
from callprobe.store import read_store


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_synth")
    code = run_cli("synth", "--out-dir", out, "--classes", 3, "--per-class", 30,
                   "--dim", 8, "--t-min", 3, "--t-max", 6, "--separation", 4.0,
                   "--seed", 0, "--folds", 4)
    assert code == 0
    return out


class TestSynthCommand:
    def test_outputs_exist(self, synth_dir):
        assert (synth_dir / "synthetic.embs").exists()
        assert (synth_dir / "synthetic.json").exists()
        assert (synth_dir / "folds.json").exists()

    def test_store_is_readable(self, synth_dir):
        sequences, manifest = read_store(synth_dir / "synthetic.embs")
        assert len(sequences) == 90
        assert manifest.dim == 8
        assert manifest.classes == ["class00", "class01", "class02"]


class TestTrainCommand:
    def make_spec(self, synth_dir, tmp_path, **extra):
        doc = {
            "stores": {"final": str(synth_dir / "synthetic.embs")},
            "fold_plan": str(synth_dir / "folds.json"),
            "families": ["LR"],
            "output_dir": str(tmp_path / "out"),
            "learning_rates": [1e-3],
            "max_epochs": 20,
            "seed": 0,
        }
        doc.update(extra)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(doc))
        return path

    def test_train_then_report(self, synth_dir, tmp_path, capsys):
        spec = self.make_spec(synth_dir, tmp_path)
        assert run_cli("train", "--spec", spec) == 0
        out = capsys.readouterr().out
        assert "LR" in out and "macro AUC" in out
        results = tmp_path / "out" / "results.json"
        assert results.exists()
        assert run_cli("report", "--results", results,
                       "--out-dir", tmp_path / "rendered") == 0
        assert (tmp_path / "rendered" / "summary.txt").exists()
        assert list((tmp_path / "rendered" / "curves").glob("LR_*.csv"))

    def test_invalid_spec_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"stores": {}}))
        assert run_cli("train", "--spec", bad) == 2

    def test_unparseable_spec_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("train", "--spec", bad) == 2

    def test_unknown_argument_exit_code(self):
        assert run_cli("train", "--bogus", "x") == 2

    def test_missing_audio_file_exit_code(self, tmp_path):
        ann = tmp_path / "a.tsv"
        ann.write_text("ghost\t0.0\t1.0\tcall\n", encoding="utf-8")
        assert run_cli("folds", "--annotations", ann, "--audio-dir", tmp_path,
                       "--out", tmp_path / "plan.json") == 2

    def test_layerwise_command(self, synth_dir, tmp_path, capsys):
        doc = {
            "stores": {"feat": str(synth_dir / "synthetic.embs"),
                       "layer01": str(synth_dir / "synthetic.embs")},
            "fold_plan": str(synth_dir / "folds.json"),
            "families": ["LR"],
            "output_dir": str(tmp_path / "lw"),
            "learning_rates": [1e-3],
            "max_epochs": 10,
            "seed": 0,
        }
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(doc))
        assert run_cli("layerwise", "--spec", spec) == 0
        assert (tmp_path / "lw" / "layerwise.csv").exists()
        assert "layer01" in capsys.readouterr().out


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Six tiny recordings, two call types told apart by tone frequency."""
    root = tmp_path_factory.mktemp("corpus")
    audio = root / "audio"
    audio.mkdir()
    rng = np.random.default_rng(0)
    rows = []
    rate = 16000
    for r in range(6):
        duration = 2.0
        n = int(duration * rate)
        t = np.arange(n) / rate
        label = r % 2
        freq = 440.0 if label == 0 else 1760.0
        samples = 0.05 * rng.standard_normal(n)
        start, end = 0.5, 1.4
        mask = (t >= start) & (t < end)
        samples[mask] += 0.5 * np.sin(2 * np.pi * freq * t[mask])
        write_wav(audio / f"rec{r}.wav", samples, rate,
                  bit_depth=16 if r % 2 == 0 else 24)
        rows.append(f"rec{r}\t{start}\t{end}\t{'low' if label == 0 else 'high'}")
    ann = root / "annotations.tsv"
    ann.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return root


class TestAudioPipeline:
    def test_folds_features_train(self, corpus, tmp_path):
        plan = tmp_path / "plan.json"
        assert run_cli("folds", "--annotations", corpus / "annotations.tsv",
                       "--audio-dir", corpus / "audio", "--collar", 0.25,
                       "--folds", 3, "--seed", 1, "--out", plan) == 0
        doc = json.loads(plan.read_text())
        assert doc["k"] == 3
        assert len(doc["segments"]) == 6
        assert doc["classes"] == ["high", "low"]

        store = tmp_path / "mfcc.embs"
        assert run_cli("features", "--audio-dir", corpus / "audio",
                       "--fold-plan", plan, "--kind", "mfcc", "--out", store) == 0
        sequences, manifest = read_store(store)
        assert manifest.dim == 40
        assert manifest.temporal
        assert len(sequences) == 6
        # 1.4 s segment (0.9 + 2x0.25 collar) at 16 kHz: 1 + (22400-400)//160
        assert sequences[0].n_frames == 138

        beans = tmp_path / "beans.embs"
        assert run_cli("features", "--audio-dir", corpus / "audio",
                       "--fold-plan", plan, "--kind", "beans20", "--out", beans) == 0
        _, beans_manifest = read_store(beans)
        assert beans_manifest.dim == 80
        assert not beans_manifest.temporal

        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({
            "stores": {"final": str(store)},
            "fold_plan": str(plan),
            "families": ["LR"],
            "output_dir": str(tmp_path / "out"),
            "learning_rates": [1e-3],
            "max_epochs": 10,
            "seed": 0,
        }))
        assert run_cli("train", "--spec", spec) == 0
        assert (tmp_path / "out" / "results.json").exists()
