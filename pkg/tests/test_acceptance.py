"""Acceptance gate: one test per criterion, each printing a PASS line with
its measured margin (run with ``pytest tests/test_acceptance.py -v -s``).

Criteria are property-based at desk scale; the published corpus-scale
numbers need licensed data and large pretrained checkpoints and are out of
reach here by design.
"""

import json
import time

import numpy as np
import pytest

from callprobe.audio import Waveform
from callprobe.cli import main as cli_main
from callprobe.dsp import SpectralConfig, mfcc_sequence
from callprobe.errors import FormatError, NonFiniteValue
from callprobe.evaluation import average_precision, roc_auc_binary
from callprobe.probes import (
    ProbeConfig,
    backward,
    forward_scores,
    init_params,
    softmax_cross_entropy,
)
from callprobe.runner import ExperimentSpec, layerwise_sweep
from callprobe.store import (
    EmbeddingGrid,
    EmbeddingSequence,
    SegmentMeta,
    StoreManifest,
    StoreReader,
    grid_aggregate,
    mean_pool,
    read_store,
    write_store,
)
from callprobe.synth import SyntheticSpec, generate_layer_stores

from .oracles import (
    finite_difference_grads,
    oracle_ap_prefix,
    oracle_auc_pairwise_vectorized,
    oracle_mfcc,
    relative_error,
)


def announce(name, detail):
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


def random_fixture(rng):
    n = int(rng.integers(4, 201))
    if rng.random() < 0.5:  # heavy ties
        scores = rng.integers(0, 5, size=n).astype(np.float64)
    else:
        scores = rng.standard_normal(n)
    positives = rng.random(n) < rng.uniform(0.05, 0.95)
    if positives.all():
        positives[int(rng.integers(n))] = False
    if not positives.any():
        positives[int(rng.integers(n))] = True
    return scores, positives


class TestMetricOracleEquivalence:
    def test_auc_and_ap_match_oracles_on_1000_fixtures(self):
        start = time.monotonic()
        rng = np.random.default_rng(2024)
        worst_auc = worst_ap = 0.0
        for _ in range(1000):
            scores, positives = random_fixture(rng)
            worst_auc = max(worst_auc, abs(
                roc_auc_binary(scores, positives)
                - oracle_auc_pairwise_vectorized(scores, positives)))
            worst_ap = max(worst_ap, abs(
                average_precision(scores, positives)
                - oracle_ap_prefix(scores, positives)))
        elapsed = time.monotonic() - start
        assert worst_auc <= 1e-12
        assert worst_ap <= 1e-12
        assert elapsed < 30.0
        announce("metric-oracle-equivalence",
                 f"worst AUC dev {worst_auc:.2e}, worst AP dev {worst_ap:.2e}, "
                 f"{elapsed:.1f}s")


class TestHandCheckableMetricValues:
    def test_exact_values(self):
        assert roc_auc_binary([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == 0.75
        ap = average_precision([0.9, 0.5, 0.1], [1, 0, 1])
        # bit-exact against the derivation (1 + 2/3) / 2; the literal 5/6
        # rounds one ulp differently in 64-bit floats
        assert ap == (1 + 2 / 3) / 2
        assert abs(ap - 5 / 6) <= np.finfo(float).eps
        assert roc_auc_binary([0.3] * 8, [1, 0, 1, 0, 1, 0, 1, 0]) == 0.5
        announce("hand-checkable-metrics", "0.75 / 5-6ths / 0.5 exact")


class TestGradientChecks:
    CASES = [("LR", 1), ("MLP", 1),
             ("Elman", 1), ("Elman", 2),
             ("GRU", 1), ("GRU", 2),
             ("LSTM", 1), ("LSTM", 2)]

    def test_all_families_match_finite_differences(self):
        start = time.monotonic()
        dim, hidden, n_steps, n_classes = 3, 4, 5, 3
        worst = 0.0
        for family, layers in self.CASES:
            config = ProbeConfig(family, num_layers=layers, hidden=hidden,
                                 learning_rate=1e-3, seed=0)
            rng = np.random.default_rng(hash((family, layers)) % 2**32)
            for _ in range(20):
                params = init_params(config, dim, n_classes, rng)
                if family in ("LR", "MLP"):
                    x = rng.standard_normal(dim)
                else:
                    x = rng.standard_normal((n_steps, dim))
                target = int(rng.integers(n_classes))
                logits, cache = forward_scores(params, x, config, train_mode=True)
                _, dlogits = softmax_cross_entropy(logits, target)
                analytic = backward(params, cache, dlogits)

                def loss():
                    lg, _ = forward_scores(params, x, config, train_mode=False)
                    return softmax_cross_entropy(lg, target)[0]

                numeric = finite_difference_grads(loss, params)
                for name in params.tensors:
                    err = relative_error(analytic[name], numeric[name])
                    worst = max(worst, err)
                    assert err < 1e-4, f"{family}/{layers} {name}: {err}"
        elapsed = time.monotonic() - start
        assert elapsed < 120.0
        announce("gradient-checks",
                 f"8 configs x 20 draws, worst rel err {worst:.2e}, {elapsed:.1f}s")


class TestMfccOracle:
    CFG = SpectralConfig(frame_len=0.025, stride=0.010, n_fft=1024,
                         n_mels=128, n_ceps=40)

    def test_pipeline_matches_independent_oracle(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(10):
            n = int(rng.integers(600, 1600))
            samples = rng.uniform(-0.9, 0.9, size=n)
            ours = mfcc_sequence(Waveform(samples, 16000, 1), self.CFG).frames
            ref = oracle_mfcc(samples, 16000, 0.025, 0.010, 1024, 128, 40,
                              0.0, 8000.0, 1e-10)
            err = np.linalg.norm(ours - ref) / np.linalg.norm(ref)
            worst = max(worst, err)
            assert err < 1e-6
        announce("mfcc-oracle", f"10 fixtures, worst rel err {worst:.2e}")

    def test_zero_signal_analytic_case(self):
        seq = mfcc_sequence(Waveform(np.zeros(4000), 16000, 1), self.CFG)
        c0 = np.sqrt(128) * np.log(1e-10)
        assert np.max(np.abs(seq.frames[:, 0] - c0)) <= 1e-9
        assert np.max(np.abs(seq.frames[:, 1:])) <= 1e-9
        announce("mfcc-zero-signal", f"c0 = sqrt(128)*ln(1e-10) = {c0:.6f} exact")


@pytest.fixture(scope="module")
def acceptance_dirs(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def synth_cli(out_dir, separation, seed=0):
    code = cli_main(["synth", "--out-dir", str(out_dir),
                     "--classes", "4", "--per-class", "125", "--dim", "16",
                     "--t-min", "5", "--t-max", "20",
                     "--separation", str(separation), "--seed", str(seed),
                     "--folds", "5"])
    assert code == 0
    return out_dir


def train_cli(data_dir, out_dir, spec_path, parallelism=1, seed=0):
    spec_path.write_text(json.dumps({
        "stores": {"final": str(data_dir / "synthetic.embs")},
        "fold_plan": str(data_dir / "folds.json"),
        "families": ["LR"],
        "output_dir": str(out_dir),
        "seed": seed,
    }))
    code = cli_main(["train", "--spec", str(spec_path),
                     "--parallelism", str(parallelism)])
    assert code == 0
    return json.loads((out_dir / "results.json").read_text())


class TestEndToEndSynthetic:
    def test_separable_and_chance_level(self, acceptance_dirs):
        start = time.monotonic()
        sep_data = synth_cli(acceptance_dirs / "sep5", 5.0)
        results = train_cli(sep_data, acceptance_dirs / "sep5_out",
                            acceptance_dirs / "sep5_spec.json")
        summary = results["families"]["LR"]["summary"]
        assert summary["mean_auc"] >= 0.99
        assert summary["mean_ap"] >= 0.95

        chance_data = synth_cli(acceptance_dirs / "sep0", 0.0)
        chance = train_cli(chance_data, acceptance_dirs / "sep0_out",
                           acceptance_dirs / "sep0_spec.json")
        chance_auc = chance["families"]["LR"]["summary"]["mean_auc"]
        assert 0.45 <= chance_auc <= 0.55
        elapsed = time.monotonic() - start
        assert elapsed < 300.0
        announce("end-to-end-synthetic",
                 f"sep5 AUC {summary['mean_auc']:.4f} mAP {summary['mean_ap']:.4f}, "
                 f"sep0 AUC {chance_auc:.4f}, {elapsed:.0f}s")


class TestProtocolIntegrity:
    def test_leakage_determinism_parallelism(self, acceptance_dirs):
        data = synth_cli(acceptance_dirs / "pi_data", 5.0)
        first = train_cli(data, acceptance_dirs / "pi_a",
                          acceptance_dirs / "pi_a_spec.json")
        assert first["leakage_checks"] > 0  # guard evaluated, never fired
        train_cli(data, acceptance_dirs / "pi_b", acceptance_dirs / "pi_b_spec.json")
        bytes_a = (acceptance_dirs / "pi_a" / "results.json").read_bytes()
        bytes_b = (acceptance_dirs / "pi_b" / "results.json").read_bytes()
        assert bytes_a == bytes_b
        train_cli(data, acceptance_dirs / "pi_c",
                  acceptance_dirs / "pi_c_spec.json", parallelism=8)
        bytes_c = (acceptance_dirs / "pi_c" / "results.json").read_bytes()
        assert bytes_a == bytes_c
        announce("protocol-integrity",
                 f"{first['leakage_checks']} leakage checks, rerun and "
                 "parallelism-8 results byte-identical")


class TestLayerwiseSanity:
    TAGS = ["feat"] + [f"layer{i:02d}" for i in range(1, 13)]

    def test_peak_at_layer_two_and_flat_control(self, acceptance_dirs):
        spec = SyntheticSpec(n_classes=4, per_class=40, dim=12, t_min=3,
                             t_max=10, separation=4.0, seed=3, k=4)
        paths = generate_layer_stores(acceptance_dirs / "lw", self.TAGS,
                                      "layer02", spec)
        rows = layerwise_sweep(ExperimentSpec(
            stores={t: str(paths[t]) for t in self.TAGS},
            fold_plan=str(paths["fold_plan"]),
            families=["LR"], output_dir=str(acceptance_dirs / "lw_out"),
            learning_rates=(1e-3,), max_epochs=60, seed=0))
        maps = [r[2] for r in rows]
        assert self.TAGS[int(np.argmax(maps))] == "layer02"

        flat_rows = layerwise_sweep(ExperimentSpec(
            stores={t: str(paths["layer05"]) for t in self.TAGS},
            fold_plan=str(paths["fold_plan"]),
            families=["LR"], output_dir=str(acceptance_dirs / "lw_flat"),
            learning_rates=(1e-3,), max_epochs=30, seed=0))
        flat_maps = [r[2] for r in flat_rows]
        spread = max(flat_maps) - min(flat_maps)
        assert spread <= 1e-9
        announce("layerwise-sanity",
                 f"argmax layer02 (mAP {max(maps):.3f} vs noise median "
                 f"{np.median([m for i, m in enumerate(maps) if self.TAGS[i] != 'layer02']):.3f}), "
                 f"flat spread {spread:.1e}")


class TestStoreFormat:
    def test_roundtrip_corruption_and_grand_mean(self, acceptance_dirs):
        rng = np.random.default_rng(11)
        out = acceptance_dirs / "stores"
        out.mkdir()
        # 1000 random shapes across a rolling set of store files
        start = time.monotonic()
        for trial in range(250):
            dim = int(rng.integers(1, 16))
            shapes = [int(rng.integers(1, 24)) for _ in range(int(rng.integers(1, 6)))]
            seqs = [EmbeddingSequence(i, rng.standard_normal((t, dim)).astype("<f4"))
                    for i, t in enumerate(shapes)]
            manifest = StoreManifest(
                dim=dim, layer_tag="final", temporal=True, classes=["a", "b"],
                segments=[SegmentMeta(s.segment_id, 0, 0, "r", 0.0, 1.0, s.n_frames)
                          for s in seqs])
            path = out / f"s{trial % 8}.embs"
            write_store(path, seqs, manifest)
            loaded, _ = read_store(path)
            for a, b in zip(seqs, loaded):
                assert a.values.tobytes() == b.values.astype("<f4").tobytes()

        # corruption fixtures must be rejected with diagnostics
        good = out / "s0.embs"
        truncated = out / "bad_trunc.embs"
        truncated.write_bytes(good.read_bytes()[:-3])
        (out / "bad_trunc.json").write_text((out / "s0.json").read_text())
        with pytest.raises(FormatError, match="byte"):
            StoreReader(truncated)
        garbled = out / "bad_magic.embs"
        raw = bytearray(good.read_bytes())
        raw[:4] = b"XXXX"
        garbled.write_bytes(bytes(raw))
        (out / "bad_magic.json").write_text((out / "s0.json").read_text())
        with pytest.raises(FormatError, match="magic"):
            StoreReader(garbled)
        poisoned = out / "bad_nan.embs"
        raw = bytearray(good.read_bytes())
        raw[36:40] = np.array([np.nan], dtype="<f4").tobytes()
        poisoned.write_bytes(bytes(raw))
        (out / "bad_nan.json").write_text((out / "s0.json").read_text())
        with pytest.raises(NonFiniteValue):
            read_store(poisoned)

        # grand-mean identity between the two temporal aggregation modes
        worst = 0.0
        for _ in range(200):
            shape = tuple(int(rng.integers(1, 9)) for _ in range(3))
            grid = EmbeddingGrid(0, rng.standard_normal(shape))
            a = mean_pool(grid_aggregate(grid, "time").values)
            b = mean_pool(grid_aggregate(grid, "time+spec").values)
            worst = max(worst, float(np.max(np.abs(a - b))))
        assert worst <= 1e-6
        elapsed = time.monotonic() - start
        announce("store-format",
                 f"1000+ shapes round-tripped, 3 corruption fixtures rejected, "
                 f"grand-mean dev {worst:.1e}, {elapsed:.1f}s")
