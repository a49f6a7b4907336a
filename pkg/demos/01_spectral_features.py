"""Baseline spectral features on a synthetic recording.

Builds a short two-tone waveform, walks it through framing, log-mel energies
and MFCCs, then forms the aggregate (mean/std/min/max) embedding that the
non-recurrent probes consume.
"""

import numpy as np

from callprobe import Waveform, beans_config, beans_embedding, mfcc_config, mfcc_sequence
from callprobe.dsp import frame_signal, mel_power_spectrogram

rate = 16000
t = np.arange(2 * rate) / rate
# a low rumble-like tone joined by a higher harmonic halfway through
samples = 0.4 * np.sin(2 * np.pi * 60 * t)
samples[rate:] += 0.3 * np.sin(2 * np.pi * 880 * t[rate:])
wave = Waveform(samples, rate, channels=1)
print(f"waveform: {wave.duration:.1f}s at {wave.sample_rate} Hz")

cfg = mfcc_config(rate)
framed = frame_signal(wave, cfg)
print(f"framing: {framed.shape[0]} frames of {framed.shape[1]} samples "
      f"(25 ms window, 10 ms stride)")

logmel = mel_power_spectrogram(framed, cfg, rate)
print(f"log-mel spectrogram: {logmel.shape}, range [{logmel.min():.1f}, {logmel.max():.1f}]")

seq = mfcc_sequence(wave, cfg)
print(f"MFCC sequence: {seq.frames.shape} (40 cepstra per frame)")
print(f"first frame, c0..c4: {np.round(seq.frames[0, :5], 2)}")

# the tone change shows up as a shift in the cepstral trajectory
early = seq.frames[: seq.n_frames // 2].mean(axis=0)
late = seq.frames[seq.n_frames // 2:].mean(axis=0)
print(f"mean |cepstral shift| across the tone change: {np.abs(late - early).mean():.3f}")

beans = beans_embedding(mfcc_sequence(wave, beans_config(rate, n_ceps=20)))
print(f"aggregate embedding (mean;std;min;max over 20 cepstra): length {beans.size}")
