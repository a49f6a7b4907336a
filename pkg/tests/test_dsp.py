import numpy as np
import pytest

from callprobe.audio import Waveform
from callprobe.dsp import (
    SpectralConfig,
    beans_config,
    beans_embedding,
    frame_count,
    frame_signal,
    mel_filterbank,
    mel_power_spectrogram,
    mfcc_config,
    mfcc_sequence,
)
from callprobe.errors import ConfigError, EmptySequence, SignalTooShort

from .oracles import oracle_mel_weights, oracle_mfcc

CFG_16K = SpectralConfig(frame_len=0.025, stride=0.010, n_fft=1024, n_mels=128, n_ceps=40)


def wave_16k(samples):
    return Waveform(np.asarray(samples, dtype=np.float64), 16000, 1)


class TestFraming:
    def test_counts(self):
        assert frame_count(16000, 400, 160) == 98
        assert frame_count(400, 400, 160) == 1
        assert frame_count(16000, 800, 160) == 96

    def test_too_short(self):
        with pytest.raises(SignalTooShort):
            frame_count(399, 400, 160)
        with pytest.raises(SignalTooShort):
            frame_signal(wave_16k(np.zeros(100)), CFG_16K)

    def test_count_formula_random_sizes(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            frame_len = int(rng.integers(1, 500))
            stride = int(rng.integers(1, frame_len + 1))
            n = int(rng.integers(frame_len, frame_len + 5000))
            t = frame_count(n, frame_len, stride)
            assert t == 1 + (n - frame_len) // stride
            # every frame fits; one more frame would not
            assert (t - 1) * stride + frame_len <= n
            assert t * stride + frame_len > n

    def test_rows_are_windowed_slices(self):
        rng = np.random.default_rng(0)
        w = wave_16k(rng.standard_normal(1000))
        framed = frame_signal(w, CFG_16K)
        window = 0.5 * (1 - np.cos(2 * np.pi * np.arange(400) / 400))
        assert framed.shape == (4, 400)
        for t in range(4):
            np.testing.assert_allclose(framed[t], w.samples[t * 160: t * 160 + 400] * window)


class TestMelSpectrogram:
    def test_zero_frame_hits_floor(self):
        framed = np.zeros((3, 400))
        logmel = mel_power_spectrogram(framed, CFG_16K, 16000)
        np.testing.assert_allclose(logmel, np.log(CFG_16K.log_floor))

    def test_frame_longer_than_fft_rejected(self):
        with pytest.raises(ConfigError):
            mel_power_spectrogram(np.zeros((1, 2048)), CFG_16K, 16000)

    def test_filterbank_matches_oracle(self):
        fb = mel_filterbank(128, 1024, 16000, 0.0, 8000.0)
        ref = oracle_mel_weights(128, 1024, 16000, 0.0, 8000.0)
        np.testing.assert_allclose(fb, ref, atol=1e-12)

    def test_tone_at_centre_frequency_peaks_in_its_filter(self):
        # pick a mid filter, synthesize a cosine at its centre, compare with
        # the oracle and check the filter holds the row maximum
        fb = mel_filterbank(128, 1024, 16000, 0.0, 8000.0)
        centre_bin = int(np.argmax(fb[:, 64]))
        freq = centre_bin * 16000 / 1024
        n = np.arange(400)
        w = wave_16k(np.cos(2 * np.pi * freq * n / 16000))
        framed = frame_signal(w, CFG_16K)
        logmel = mel_power_spectrogram(framed, CFG_16K, 16000)
        assert np.argmax(logmel[0]) == 64
        ref = oracle_mfcc(w.samples, 16000, 0.025, 0.010, 1024, 128, 40, 0.0, 8000.0, 1e-10)
        ours = mfcc_sequence(w, CFG_16K).frames
        np.testing.assert_allclose(ours, ref, rtol=1e-6, atol=1e-8)

    def test_dc_frame_concentrates_at_bin_zero_filters(self):
        w = wave_16k(np.ones(400))
        framed = frame_signal(w, CFG_16K)
        logmel = mel_power_spectrogram(framed, CFG_16K, 16000)
        ref = oracle_mfcc(w.samples, 16000, 0.025, 0.010, 1024, 128, 40, 0.0, 8000.0, 1e-10)
        ours = mfcc_sequence(w, CFG_16K).frames
        np.testing.assert_allclose(ours, ref, rtol=1e-6, atol=1e-8)
        # energy lands where the low filters live; high filters sit at the floor
        assert logmel[0, 0] > logmel[0, -1]
        assert np.argmax(logmel[0]) < 5


class TestMfcc:
    def test_zero_signal_analytic(self):
        w = wave_16k(np.zeros(1600))
        seq = mfcc_sequence(w, CFG_16K)
        expected_c0 = np.sqrt(128) * np.log(CFG_16K.log_floor)
        np.testing.assert_allclose(seq.frames[:, 0], expected_c0, atol=1e-9)
        np.testing.assert_allclose(seq.frames[:, 1:], 0.0, atol=1e-9)

    def test_white_noise_matches_oracle(self):
        rng = np.random.default_rng(42)
        for trial in range(3):
            samples = rng.uniform(-0.9, 0.9, size=1200)
            w = wave_16k(samples)
            ours = mfcc_sequence(w, CFG_16K).frames
            ref = oracle_mfcc(samples, 16000, 0.025, 0.010, 1024, 128, 40, 0.0, 8000.0, 1e-10)
            err = np.linalg.norm(ours - ref) / np.linalg.norm(ref)
            assert err < 1e-6, f"trial {trial}: relative error {err}"

    def test_truncation_consistency(self):
        rng = np.random.default_rng(3)
        w = wave_16k(rng.standard_normal(2000))
        full = mfcc_sequence(w, CFG_16K).frames
        cfg20 = SpectralConfig(frame_len=0.025, stride=0.010, n_fft=1024, n_mels=128, n_ceps=20)
        short = mfcc_sequence(w, cfg20).frames
        np.testing.assert_array_equal(short, full[:, :20])

    def test_log_domain_scale_covariance(self):
        # scaling the waveform by a shifts every active log-mel by 2*ln(a);
        # the DCT is linear, so c0 shifts by sqrt(M)*2*ln(a) and others hold
        rng = np.random.default_rng(11)
        samples = rng.uniform(-0.4, 0.4, size=1600)
        a = 2.0
        w, ws = wave_16k(samples), wave_16k(a * samples)
        logmel = mel_power_spectrogram(frame_signal(w, CFG_16K), CFG_16K, 16000)
        logmel_s = mel_power_spectrogram(frame_signal(ws, CFG_16K), CFG_16K, 16000)
        assert logmel.min() > np.log(CFG_16K.log_floor)  # floor inactive here
        np.testing.assert_allclose(logmel_s - logmel, 2 * np.log(a), rtol=1e-9)
        base = mfcc_sequence(w, CFG_16K).frames
        scaled = mfcc_sequence(ws, CFG_16K).frames
        np.testing.assert_allclose(scaled[:, 0] - base[:, 0],
                                   np.sqrt(128) * 2 * np.log(a), rtol=1e-9)
        np.testing.assert_allclose(scaled[:, 1:], base[:, 1:], atol=1e-9)

    def test_frame_times_are_centres(self):
        w = wave_16k(np.zeros(1600))
        seq = mfcc_sequence(w, CFG_16K)
        np.testing.assert_allclose(seq.frame_times[0], 200 / 16000)
        np.testing.assert_allclose(np.diff(seq.frame_times), 160 / 16000)


class TestBeans:
    def test_single_frame(self):
        frames = np.array([[1.5, -2.0, 0.25]])
        out = beans_embedding(frames)
        np.testing.assert_array_equal(out, [1.5, -2.0, 0.25, 0, 0, 0, 1.5, -2.0, 0.25, 1.5, -2.0, 0.25])

    def test_two_point(self):
        out = beans_embedding(np.array([[0.0], [2.0]]))
        np.testing.assert_array_equal(out, [1.0, 1.0, 0.0, 2.0])

    def test_random_matches_brute_force(self):
        rng = np.random.default_rng(9)
        frames = rng.standard_normal((10, 3))
        out = beans_embedding(frames)
        expected = np.concatenate([
            [frames[:, c].sum() / 10 for c in range(3)],
            [np.sqrt(((frames[:, c] - frames[:, c].mean()) ** 2).sum() / 10) for c in range(3)],
            [min(frames[:, c]) for c in range(3)],
            [max(frames[:, c]) for c in range(3)],
        ])
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_length_and_ordering_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            t = int(rng.integers(1, 30))
            c = int(rng.integers(1, 8))
            out = beans_embedding(rng.standard_normal((t, c)))
            assert out.shape == (4 * c,)
            mean, _, lo, hi = out[:c], out[c:2 * c], out[2 * c:3 * c], out[3 * c:]
            assert np.all(lo <= mean) and np.all(mean <= hi)

    def test_empty_rejected(self):
        with pytest.raises(EmptySequence):
            beans_embedding(np.zeros((0, 4)))


class TestConfigs:
    def test_mfcc_config_16k(self):
        cfg = mfcc_config(16000)
        assert (cfg.n_fft, cfg.n_mels, cfg.n_ceps) == (1024, 128, 40)
        cfg.validate(16000)

    def test_mfcc_config_widens_fft_for_high_rates(self):
        cfg = mfcc_config(44100)  # 25 ms = 1102 samples > 1024
        assert cfg.n_fft == 2048
        cfg.validate(44100)

    def test_beans_config(self):
        assert beans_config(16000).n_fft == 1024  # 800-sample frames
        assert beans_config(44100).n_fft == 4096  # 2205-sample frames
        assert beans_config(16000, n_ceps=20).n_ceps == 20

    def test_invalid_configs_rejected(self):
        with pytest.raises(ConfigError):
            SpectralConfig(0.01, 0.02, 1024, 128, 40).validate(16000)
        with pytest.raises(ConfigError):
            SpectralConfig(0.025, 0.010, 1024, 600, 40).validate(16000)
        with pytest.raises(ConfigError):
            SpectralConfig(0.025, 0.010, 1024, 128, 40, fmin=9000).validate(16000)
