"""PCM WAV ingestion and the waveform container used by the feature extractors.

Supports 16-bit and 24-bit integer little-endian PCM, mono or stereo.
Multi-channel audio is averaged down to mono at load time and samples are
scaled to [-1, 1].
"""

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NonFiniteValue


@dataclass
class Waveform:
    samples: np.ndarray  # mono, float64, amplitude in [-1, 1]
    sample_rate: int
    channels: int  # channel count before mixdown

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional after mixdown")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise NonFiniteValue("waveform contains NaN or Inf samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def slice(self, start: float, end: float) -> "Waveform":
        """Cut [start, end) seconds, clamped to the recording."""
        i = max(0, int(round(start * self.sample_rate)))
        j = min(self.samples.size, int(round(end * self.sample_rate)))
        return Waveform(self.samples[i:j].copy(), self.sample_rate, self.channels)


def _decode_pcm(raw: bytes, sampwidth: int) -> np.ndarray:
    if sampwidth == 2:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 2.0**15
    if sampwidth == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        x = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        x = np.where(x >= 1 << 23, x - (1 << 24), x)
        return x.astype(np.float64) / 2.0**23
    raise FormatError(f"unsupported sample width: {8 * sampwidth} bits (expected 16 or 24)")


def load_wav(path: str | Path) -> Waveform:
    """Read a PCM WAV file, averaging channels to mono."""
    with wave.open(str(path), "rb") as wf:
        channels = wf.getnchannels()
        sampwidth = wf.getsampwidth()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = _decode_pcm(raw, sampwidth)
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return Waveform(samples, rate, channels)


def wav_duration(path: str | Path) -> float:
    """Recording length in seconds, from the header only."""
    with wave.open(str(path), "rb") as wf:
        return wf.getnframes() / wf.getframerate()


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int,
              bit_depth: int = 16) -> None:
    """Write float samples in [-1, 1] as PCM WAV (fixture and demo helper).

    ``samples`` may be (N,) mono or (N, channels).
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    channels = samples.shape[1]
    clipped = np.clip(samples, -1.0, 1.0)
    # scale by 2^(bits-1) so the loader's division inverts exactly
    if bit_depth == 16:
        ints = np.clip(np.round(clipped * 2.0**15), -(1 << 15), (1 << 15) - 1).astype("<i2")
        raw = ints.tobytes()
        width = 2
    elif bit_depth == 24:
        ints = np.clip(np.round(clipped * 2.0**23), -(1 << 23), (1 << 23) - 1).astype(np.int32)
        ints = np.where(ints < 0, ints + (1 << 24), ints).astype(np.uint32)
        frames = np.empty((ints.size, 3), dtype=np.uint8)
        frames[:, 0] = ints.ravel() & 0xFF
        frames[:, 1] = (ints.ravel() >> 8) & 0xFF
        frames[:, 2] = (ints.ravel() >> 16) & 0xFF
        raw = frames.tobytes()
        width = 3
    else:
        raise FormatError(f"unsupported bit depth: {bit_depth}")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(sample_rate)
        wf.writeframes(raw)
