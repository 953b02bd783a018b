"""Audio pre-processing and MFCC feature extraction.

Pipeline: pre-emphasis -> framing -> Hamming window -> |DFT|^2 -> Mel
filterbank -> log -> DCT-II (orthonormal), keeping the first ``n_cepstra``
coefficients. No deltas, no liftering.
"""

from __future__ import annotations

import csv
import hashlib
import json
import wave
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import ConfigError, DomainError

SUPPORTED_RATES = (8000, 16000)


@dataclass(frozen=True)
class AudioClip:
    """Mono 16-bit PCM audio."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ConfigError("samples", "audio must be mono (1-D)")
        if samples.dtype != np.int16:
            if samples.size and (samples.min() < -32768 or samples.max() > 32767):
                raise ConfigError("samples", "values outside the int16 range")
            samples = samples.astype(np.int16)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz not in SUPPORTED_RATES:
            raise ConfigError("sample_rate_hz", f"must be one of {SUPPORTED_RATES}, got {self.sample_rate_hz}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class FrontendConfig:
    frame_len_ms: float = 25.0
    hop_ms: float = 10.0
    n_mel_filters: int = 26
    n_dft: int = 512
    n_cepstra: int = 13
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    fmin_hz: float = 0.0
    fmax_hz: float | None = None  # None -> Nyquist of the clip being processed

    def __post_init__(self):
        if not self.hop_ms > 0:
            raise ConfigError("hop_ms", "must be positive")
        if not self.frame_len_ms > self.hop_ms:
            raise ConfigError("frame_len_ms", "must exceed hop_ms")
        if self.n_dft < 2 or self.n_dft & (self.n_dft - 1):
            raise ConfigError("n_dft", "must be a power of two")
        if self.n_mel_filters > self.n_dft // 2:
            raise ConfigError("n_mel_filters", "must not exceed n_dft/2")
        if not 1 <= self.n_cepstra <= self.n_mel_filters:
            raise ConfigError("n_cepstra", "must lie in [1, n_mel_filters]")
        if not 0 <= self.preemphasis < 1:
            raise ConfigError("preemphasis", "must lie in [0, 1)")
        if not self.log_floor > 0:
            raise ConfigError("log_floor", "must be positive")
        if self.fmin_hz < 0:
            raise ConfigError("fmin_hz", "must be non-negative")
        if self.fmax_hz is not None and not self.fmax_hz > self.fmin_hz:
            raise ConfigError("fmax_hz", "must exceed fmin_hz")

    def check_rate(self, sample_rate_hz: int) -> None:
        """Validate the rate-dependent invariants."""
        nyquist = sample_rate_hz / 2
        if self.fmax_hz is not None and self.fmax_hz > nyquist:
            raise ConfigError("fmax_hz", f"exceeds Nyquist ({nyquist} Hz)")
        if self.fmin_hz >= self.band_top(sample_rate_hz):
            raise ConfigError("fmin_hz", "must be below fmax_hz")
        if self.frame_samples(sample_rate_hz) > self.n_dft:
            raise ConfigError("n_dft", "shorter than one analysis frame")

    def band_top(self, sample_rate_hz: int) -> float:
        return sample_rate_hz / 2 if self.fmax_hz is None else self.fmax_hz

    def frame_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_len_ms * sample_rate_hz / 1000))

    def hop_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.hop_ms * sample_rate_hz / 1000))

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureMatrix:
    """T x D observation sequence."""

    vectors: np.ndarray
    frame_rate_hz: float
    source_duration_s: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim == 1 and v.size == 0:
            v = v.reshape(0, 0)
        if v.ndim != 2:
            raise ConfigError("vectors", "must be a 2-D array (frames x coefficients)")
        if not np.all(np.isfinite(v)):
            raise ConfigError("vectors", "contains non-finite entries")
        object.__setattr__(self, "vectors", v)

    @property
    def n_frames(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.n_frames


@dataclass(frozen=True)
class MelFilterbank:
    filters: np.ndarray
    center_freqs_hz: np.ndarray = field(repr=False)


def hz_to_mel(f):
    """Mel(f) = 2595 log10(1 + f/700). Accepts scalars or arrays."""
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr < 0):
        raise DomainError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f_arr / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    """Inverse of :func:`hz_to_mel`."""
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 0):
        raise DomainError("mel value must be non-negative")
    out = 700.0 * (10.0 ** (m_arr / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


def mel_filterbank(n_filters, n_dft, sample_rate_hz, fmin_hz=0.0, fmax_hz=None) -> MelFilterbank:
    """Triangular filters with centers equally spaced on the Mel scale.

    Weights are evaluated at the exact bin frequencies ``k * sr / n_dft``
    rather than snapped to integer bins, so every row is a single triangle
    peaking at 1 on its center frequency.
    """
    if fmax_hz is None:
        fmax_hz = sample_rate_hz / 2
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_filters + 2))
    bins = np.arange(n_dft // 2 + 1) * sample_rate_hz / n_dft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (bins[None, :] - lo) / (mid - lo)
    fall = (hi - bins[None, :]) / (hi - mid)
    weights = np.clip(np.minimum(rise, fall), 0.0, 1.0)
    return MelFilterbank(filters=weights, center_freqs_hz=edges[1:-1])


def n_frames(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        return 0
    return 1 + (n_samples - frame_len) // hop


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    t = n_frames(len(x), frame_len, hop)
    if t == 0:
        return np.zeros((0, frame_len))
    idx = np.arange(frame_len)[None, :] + hop * np.arange(t)[:, None]
    return x[idx]


def log_mel_energies(clip: AudioClip, cfg: FrontendConfig | None = None) -> np.ndarray:
    """Log filterbank energies, one row per frame (the stage before the DCT)."""
    cfg = cfg or FrontendConfig()
    sr = clip.sample_rate_hz
    cfg.check_rate(sr)
    x = clip.samples.astype(np.float64)
    if len(x):
        x = np.concatenate([x[:1], x[1:] - cfg.preemphasis * x[:-1]])
    frames = frame_signal(x, cfg.frame_samples(sr), cfg.hop_samples(sr))
    if len(frames) == 0:
        return np.zeros((0, cfg.n_mel_filters))
    frames = frames * np.hamming(frames.shape[1])
    power = np.abs(np.fft.rfft(frames, cfg.n_dft)) ** 2
    fb = mel_filterbank(cfg.n_mel_filters, cfg.n_dft, sr, cfg.fmin_hz, cfg.band_top(sr))
    energies = power @ fb.filters.T
    return np.log(np.maximum(energies, cfg.log_floor))


def mfcc(clip: AudioClip, cfg: FrontendConfig | None = None) -> FeatureMatrix:
    cfg = cfg or FrontendConfig()
    log_e = log_mel_energies(clip, cfg)
    if len(log_e):
        ceps = dct(log_e, type=2, axis=1, norm="ortho")[:, : cfg.n_cepstra]
    else:
        ceps = np.zeros((0, cfg.n_cepstra))
    return FeatureMatrix(ceps, frame_rate_hz=1000.0 / cfg.hop_ms, source_duration_s=clip.duration_s)


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Linear-interpolation resampler. Low fidelity: no anti-alias filter."""
    if target_rate_hz not in SUPPORTED_RATES:
        raise ConfigError("target_rate_hz", f"must be one of {SUPPORTED_RATES}")
    if target_rate_hz == clip.sample_rate_hz:
        return clip
    n_out = int(round(len(clip) * target_rate_hz / clip.sample_rate_hz))
    if n_out == 0:
        return AudioClip(np.zeros(0, dtype=np.int16), target_rate_hz)
    pos = np.arange(n_out) * (clip.sample_rate_hz / target_rate_hz)
    y = np.interp(pos, np.arange(len(clip)), clip.samples.astype(np.float64))
    y = np.clip(np.round(y), -32768, 32767).astype(np.int16)
    return AudioClip(y, target_rate_hz)


def trim_silence(clip: AudioClip, energy_threshold: float = 0.01, frame_ms: float = 10.0) -> AudioClip:
    """Drop leading and trailing frames whose energy is below
    ``energy_threshold * peak frame energy``. Frames are non-overlapping."""
    if not 0 < energy_threshold < 1:
        raise ConfigError("energy_threshold", "must lie in (0, 1)")
    n = int(round(frame_ms * clip.sample_rate_hz / 1000))
    x = clip.samples.astype(np.float64)
    n_fr = -(-len(x) // n)
    if n_fr == 0:
        return clip
    padded = np.zeros(n_fr * n)
    padded[: len(x)] = x
    energy = (padded.reshape(n_fr, n) ** 2).sum(axis=1)
    peak = energy.max()
    if peak == 0:
        return AudioClip(np.zeros(0, dtype=np.int16), clip.sample_rate_hz)
    loud = np.flatnonzero(energy >= energy_threshold * peak)
    start, stop = loud[0] * n, min(len(x), (loud[-1] + 1) * n)
    return AudioClip(clip.samples[start:stop].copy(), clip.sample_rate_hz)


def preprocess(clip: AudioClip, target_rate_hz: int | None = None, trim_threshold: float | None = 0.01) -> AudioClip:
    """Resample to the recognizer's rate, then trim edge silence."""
    if target_rate_hz is not None:
        clip = resample(clip, target_rate_hz)
    if trim_threshold is not None:
        clip = trim_silence(clip, trim_threshold)
    return clip


def read_wav(path) -> AudioClip:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ConfigError("channels", f"{path}: expected mono audio")
        if w.getsampwidth() != 2:
            raise ConfigError("sample_width", f"{path}: expected 16-bit PCM")
        rate = w.getframerate()
        data = w.readframes(w.getnframes())
    return AudioClip(np.frombuffer(data, dtype="<i2").copy(), rate)


def write_wav(path, clip: AudioClip) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate_hz)
        w.writeframes(clip.samples.astype("<i2").tobytes())


def write_features_csv(dest, feats: FeatureMatrix) -> None:
    """One frame per row; ``dest`` is a path or an open text stream."""
    if hasattr(dest, "write"):
        writer = csv.writer(dest, lineterminator="\n")
        writer.writerow([f"c{i}" for i in range(feats.dim)])
        writer.writerows([repr(float(v)) for v in row] for row in feats.vectors)
        return
    with open(dest, "w", newline="") as fh:
        write_features_csv(fh, feats)


def read_features_csv(path, frame_rate_hz: float = 100.0) -> FeatureMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    vectors = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
    return FeatureMatrix(vectors, frame_rate_hz, source_duration_s=len(body) / frame_rate_hz)


def load_frontend_config(path) -> FrontendConfig:
    return FrontendConfig(**json.loads(Path(path).read_text()))
