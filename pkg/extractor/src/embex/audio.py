"""Audio preprocessing ahead of model inference: PCM WAV loading with mono
mixdown and polyphase resampling to the model's native rate."""

import math
import wave

import numpy as np
from scipy.signal import resample_poly


def load_wav(path):
    """Returns (mono float64 samples in [-1, 1], sample_rate)."""
    with wave.open(str(path), "rb") as wf:
        channels = wf.getnchannels()
        width = wf.getsampwidth()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    if width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 2.0**15
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        x = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        x = np.where(x >= 1 << 23, x - (1 << 24), x)
        samples = x.astype(np.float64) / 2.0**23
    else:
        raise ValueError(f"{path}: unsupported sample width {8 * width} bits")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def resample(samples, source_rate, target_rate):
    """Polyphase resampling; identity when the rates already match."""
    if source_rate == target_rate:
        return samples
    g = math.gcd(int(target_rate), int(source_rate))
    return resample_poly(samples, int(target_rate) // g, int(source_rate) // g)


def cut_segment(samples, rate, start, end):
    i = max(0, int(round(start * rate)))
    j = min(samples.size, int(round(end * rate)))
    return samples[i:j]
