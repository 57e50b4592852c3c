"""64-band log-mel spectrogram frontend.

Hann window, magnitude-squared FFT, triangular mel filters (HTK mel scale),
natural log of power with a fixed floor.  An optional per-utterance
mean/variance normalization is off by default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    n_mels: int = 64
    win_s: float = 0.025
    hop_s: float = 0.010
    n_fft: int = 256
    fmin_hz: float = 20.0
    fmax_hz: float = 3800.0
    log_floor: float = 1e-10
    mean_var_norm: bool = False

    def __post_init__(self):
        if self.n_mels < 1:
            raise FeatureError("n_mels must be >= 1")
        if not (0 <= self.fmin_hz < self.fmax_hz):
            raise FeatureError("require 0 <= fmin_hz < fmax_hz")
        if self.win_s <= 0 or self.hop_s <= 0 or self.n_fft < 1:
            raise FeatureError("window, hop and n_fft must be positive")
        if self.log_floor <= 0:
            raise FeatureError("log_floor must be positive")

    def sha256(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class LogMelSpectrogram:
    """frames x n_mels matrix of natural-log mel power."""

    values: np.ndarray
    frame_hop_s: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise FeatureError("values must be 2-D (frames x mels)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig, sample_rate_hz: int) -> np.ndarray:
    """Triangular filters, shape (n_mels, n_fft // 2 + 1).

    Centers are spaced uniformly on the mel scale between fmin and fmax;
    triangles are unit peak (no area normalization).
    """
    if cfg.fmax_hz > sample_rate_hz / 2:
        raise FeatureError("fmax_hz above Nyquist")
    n_bins = cfg.n_fft // 2 + 1
    bin_mels = hz_to_mel(np.arange(n_bins) * sample_rate_hz / cfg.n_fft)
    edges = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_mels[None, :] - lo) / (ctr - lo)
    falling = (hi - bin_mels[None, :]) / (hi - ctr)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.sum(axis=1) == 0.0)
    if empty.size:
        raise FeatureError(
            f"mel filter {empty[0]} has no FFT bins: n_mels too large for FFT resolution"
        )
    return fb


def log_mel(clip, cfg: FeatureConfig = FeatureConfig()) -> LogMelSpectrogram:
    """Extract the log-mel spectrogram of a clip at its native rate."""
    sr = clip.sample_rate_hz
    win = int(round(cfg.win_s * sr))
    hop = int(round(cfg.hop_s * sr))
    if cfg.n_fft < win:
        raise FeatureError(f"n_fft ({cfg.n_fft}) smaller than window ({win} samples)")
    x = clip.samples
    if x.size < win:
        raise FeatureError("clip too short for features")
    n_frames = 1 + (x.size - win) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]
    window = np.hanning(win)
    spec = np.fft.rfft(frames * window, n=cfg.n_fft, axis=1)
    power = spec.real**2 + spec.imag**2
    fb = mel_filterbank(cfg, sr)
    mel_power = power @ fb.T
    out = np.log(np.maximum(mel_power, cfg.log_floor))
    if cfg.mean_var_norm:
        mu = out.mean(axis=0, keepdims=True)
        sd = out.std(axis=0, keepdims=True)
        out = (out - mu) / np.maximum(sd, 1e-8)
    return LogMelSpectrogram(out, cfg.hop_s)


def save_features(feat: LogMelSpectrogram, cfg: FeatureConfig, path) -> None:
    """Dump features as little-endian float32, row-major, with a JSON sidecar."""
    path = Path(path)
    path.write_bytes(feat.values.astype("<f4").tobytes())
    sidecar = {
        "n_frames": feat.n_frames,
        "n_mels": feat.n_mels,
        "frame_hop_s": feat.frame_hop_s,
        "config_sha256": cfg.sha256(),
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n"
    )


def load_features(path) -> LogMelSpectrogram:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    values = raw.reshape(meta["n_frames"], meta["n_mels"]).astype(np.float64)
    return LogMelSpectrogram(values, meta["frame_hop_s"])
