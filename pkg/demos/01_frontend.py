"""
From samples to MFCC vectors: pre-processing and feature extraction on a
synthetic clip.
"""

import numpy as np

from vowsn_asr.frontend import (
    AudioClip,
    FrontendConfig,
    hz_to_mel,
    log_mel_energies,
    mel_filterbank,
    mfcc,
    preprocess,
)

## A 16 kHz clip: 0.3 s of silence, 0.5 s of a 440 Hz + 1800 Hz chord, 0.3 s of silence
sr = 16000
t = np.arange(int(0.5 * sr)) / sr
chord = 6000 * np.sin(2 * np.pi * 440 * t) + 3000 * np.sin(2 * np.pi * 1800 * t)
gap = np.zeros(int(0.3 * sr))
clip = AudioClip(np.round(np.concatenate([gap, chord, gap])).astype(np.int16), sr)
print(f"raw clip: {len(clip)} samples, {clip.duration_s:.2f} s")

## Resample to 8 kHz and trim the silent edges
clean = preprocess(clip, target_rate_hz=8000, trim_threshold=0.01)
print(f"after preprocess: {len(clean)} samples at {clean.sample_rate_hz} Hz, {clean.duration_s:.2f} s")

## The Mel scale compresses high frequencies
for f in (0, 500, 1000, 2000, 4000):
    print(f"  {f:>5} Hz -> {hz_to_mel(f):8.2f} mel")

## Filterbank: 26 triangles, centres equally spaced in mel
cfg = FrontendConfig()
fb = mel_filterbank(cfg.n_mel_filters, cfg.n_dft, clean.sample_rate_hz)
print("first filter centres (Hz):", np.round(fb.center_freqs_hz[:6], 1))

## Log filterbank energies peak in the bands holding the two tones
log_e = log_mel_energies(clean, cfg).mean(axis=0)
top = np.argsort(log_e)[-2:][::-1]
print("loudest bands:", top, "centred at", np.round(fb.center_freqs_hz[top], 0), "Hz")

## MFCC: 25 ms frames every 10 ms, 13 cepstral coefficients
feats = mfcc(clean, cfg)
print(f"MFCC matrix: {feats.n_frames} frames x {feats.dim} coefficients at {feats.frame_rate_hz:.0f} frames/s")
print("mean vector:", np.round(feats.vectors.mean(axis=0), 2))
