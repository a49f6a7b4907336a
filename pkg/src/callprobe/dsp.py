"""Spectral baseline features: framing, log-mel spectrograms, MFCC sequences
and the mean/std/min/max aggregate embedding.

Pinned conventions (kept deliberately plain so an independent implementation
can reproduce them):

* periodic Hann window, w[n] = 0.5 * (1 - cos(2*pi*n / L));
* mel scale m(f) = 2595 * log10(1 + f / 700);
* triangular filters evaluated at the FFT bin centre frequencies, unit peak;
* power spectrum = |rfft(frame, n_fft)|^2, frames zero-padded to n_fft;
* natural log with a positive floor applied to the mel energies;
* orthonormal type-II DCT over the log-mel vector;
* no pre-emphasis, no liftering.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .audio import Waveform
from .errors import ConfigError, EmptySequence, SignalTooShort

DEFAULT_LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class SpectralConfig:
    frame_len: float  # seconds
    stride: float  # seconds
    n_fft: int
    n_mels: int
    n_ceps: int
    fmin: float = 0.0
    fmax: float | None = None  # None means sample_rate / 2
    log_floor: float = DEFAULT_LOG_FLOOR

    def validate(self, sample_rate: float) -> None:
        if not (self.frame_len >= self.stride > 0):
            raise ConfigError("need frame_len >= stride > 0")
        if not (0 < self.n_ceps <= self.n_mels <= self.n_fft // 2 + 1):
            raise ConfigError("need n_ceps <= n_mels <= n_fft/2 + 1")
        fmax = self.resolved_fmax(sample_rate)
        if not (0 <= self.fmin < fmax <= sample_rate / 2):
            raise ConfigError("need 0 <= fmin < fmax <= sample_rate/2")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")

    def resolved_fmax(self, sample_rate: float) -> float:
        return sample_rate / 2 if self.fmax is None else self.fmax

    def frame_geometry(self, sample_rate: float) -> tuple[int, int]:
        """Frame length and stride in samples."""
        return int(round(self.frame_len * sample_rate)), int(round(self.stride * sample_rate))


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def mfcc_config(sample_rate: float, n_ceps: int = 40) -> SpectralConfig:
    """25 ms frames, 10 ms stride, 1024-point FFT, 128 mel filters.

    For sample rates where 25 ms exceeds 1024 samples the FFT is widened to
    the next power of two that fits the frame.
    """
    frame = int(round(0.025 * sample_rate))
    return SpectralConfig(frame_len=0.025, stride=0.010,
                          n_fft=max(1024, _next_pow2(frame)),
                          n_mels=128, n_ceps=n_ceps)


def beans_config(sample_rate: float, n_ceps: int = 40) -> SpectralConfig:
    """50 ms frames, 10 ms stride; FFT zero-padded to the next power of two."""
    frame = int(round(0.050 * sample_rate))
    return SpectralConfig(frame_len=0.050, stride=0.010,
                          n_fft=_next_pow2(frame),
                          n_mels=128, n_ceps=n_ceps)


@dataclass
class FeatureSequence:
    frames: np.ndarray  # (T, C)
    frame_times: np.ndarray  # (T,), frame centres in seconds

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if self.frames.ndim != 2 or self.frame_times.shape != (self.frames.shape[0],):
            raise ValueError("frames must be (T, C) with one time stamp per frame")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def frame_count(n_samples: int, frame_len: int, stride: int) -> int:
    """Number of full frames: 1 + floor((N - L) / S)."""
    if n_samples < frame_len:
        raise SignalTooShort(f"{n_samples} samples < one frame of {frame_len}")
    return 1 + (n_samples - frame_len) // stride


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window of the given length."""
    n = np.arange(length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / length))


def frame_signal(w: Waveform, cfg: SpectralConfig) -> np.ndarray:
    """Slice into overlapping frames and apply the Hann window.

    Returns (T, L). Only full frames are produced; the tail shorter than one
    frame is dropped.
    """
    frame_len, stride = cfg.frame_geometry(w.sample_rate)
    n = w.samples.size
    t = frame_count(n, frame_len, stride)
    idx = stride * np.arange(t)[:, None] + np.arange(frame_len)[None, :]
    return w.samples[idx] * hann_window(frame_len)[None, :]


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: float,
                   fmin: float, fmax: float) -> np.ndarray:
    """Triangular mel filterbank, (n_fft // 2 + 1, n_mels)."""
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = to_hz(np.linspace(to_mel(fmin), to_mel(fmax), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    lower, centre, upper = edges[:-2], edges[1:-1], edges[2:]
    rising = (bins[:, None] - lower[None, :]) / (centre - lower)[None, :]
    falling = (upper[None, :] - bins[:, None]) / (upper - centre)[None, :]
    return np.clip(np.minimum(rising, falling), 0.0, None)


def mel_power_spectrogram(framed: np.ndarray, cfg: SpectralConfig,
                          sample_rate: float) -> np.ndarray:
    """Log mel energies per frame, (T, n_mels).

    Frames are zero-padded to n_fft, the magnitude-squared real DFT is taken,
    the mel filterbank is applied, and the natural log of the floored energy
    is returned.
    """
    frame_len = framed.shape[1]
    if frame_len > cfg.n_fft:
        raise ConfigError(f"frame of {frame_len} samples exceeds n_fft={cfg.n_fft}")
    power = np.abs(np.fft.rfft(framed, n=cfg.n_fft, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, sample_rate,
                        cfg.fmin, cfg.resolved_fmax(sample_rate))
    energies = power @ fb
    return np.log(np.maximum(energies, cfg.log_floor))


def mfcc_sequence(w: Waveform, cfg: SpectralConfig) -> FeatureSequence:
    """MFCC sequence (T, n_ceps): framing, log-mel, orthonormal type-II DCT."""
    cfg.validate(w.sample_rate)
    framed = frame_signal(w, cfg)
    logmel = mel_power_spectrogram(framed, cfg, w.sample_rate)
    ceps = dct(logmel, type=2, norm="ortho", axis=1)[:, : cfg.n_ceps]
    frame_len, stride = cfg.frame_geometry(w.sample_rate)
    times = (stride * np.arange(framed.shape[0]) + frame_len / 2) / w.sample_rate
    return FeatureSequence(ceps, times)


def beans_embedding(seq: FeatureSequence | np.ndarray) -> np.ndarray:
    """Concatenated per-column [mean; std; min; max] over the frames (4*C,).

    The standard deviation is the population one (divide by T).
    """
    frames = seq.frames if isinstance(seq, FeatureSequence) else np.asarray(seq, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise EmptySequence("need at least one frame to aggregate")
    return np.concatenate([
        frames.mean(axis=0),
        frames.std(axis=0),
        frames.min(axis=0),
        frames.max(axis=0),
    ])
