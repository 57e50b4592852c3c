"""Presentation-channel simulation and waveform augmentations.

Turns raw audio into "presented" audio the way it would reach a call:
direct digital injection, analog injection through a wired input, or
loudspeaker playback into a handset, each followed by narrowband telephony
processing.  Also provides the seeded signal-level distortions used for
training-style augmentation (colored noise, multi-notch filtering,
impulsive noise).

Every stochastic operation is a pure function of (input, parameters, seed);
stage seeds inside `present` are derived per stage name, so composed
pipelines can be reproduced stage by stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve, sosfilt, butter

from . import g711
from .audio import AudioClip
from .seeding import derive_seed

PATHS = ("injection_digital", "injection_analog", "playback")
CODECS = ("mulaw", "alaw", "none")

TELEPHONY_BAND_HZ = (300.0, 3400.0)


@dataclass(frozen=True)
class ChannelConfig:
    """One presentation path and its processing parameters.

    gain_db and noise_snr_db may be (lo, hi) ranges sampled per seed.
    bandpass=None applies the path default (on for analog and playback).
    """

    path: str
    ir: AudioClip | None = None
    codec: str = "mulaw"
    bandpass: bool | None = None
    gain_db: float | tuple = 0.0
    noise_snr_db: float | tuple | None = None
    clip_threshold: float = 0.95

    def __post_init__(self):
        if self.path not in PATHS:
            raise ValueError(f"unknown path {self.path!r} (expected one of {PATHS})")
        if self.codec not in CODECS:
            raise ValueError(f"unknown codec {self.codec!r}")
        if not (0.0 < self.clip_threshold <= 1.0):
            raise ValueError("clip_threshold must be in (0, 1]")
        if self.ir is not None and len(self.ir) == 0:
            raise ValueError("impulse response is empty")


@dataclass(frozen=True)
class AugmentSpec:
    """A named waveform distortion with its parameters and seed."""

    kind: str
    seed: int = 0
    gain_db_range: tuple = (-6.0, 6.0)
    snr_db_range: tuple = (10.0, 40.0)
    n_filters: int = 5
    impulse_rate_per_s: float = 10.0
    impulse_amplitude: float = 2.0
    codec: str = "mulaw"

    def __post_init__(self):
        if self.kind not in ("volume", "convolutive", "impulsive", "colored_noise", "codec"):
            raise ValueError(f"unknown augmentation {self.kind!r}")
        for rng in (self.gain_db_range, self.snr_db_range):
            if rng[0] > rng[1]:
                raise ValueError("range must be (lo, hi) with lo <= hi")
        if self.impulse_rate_per_s < 0 or self.n_filters < 0:
            raise ValueError("rates and counts must be >= 0")


def convolve_ir(clip: AudioClip, ir: AudioClip) -> AudioClip:
    """Full linear convolution truncated to the input length.

    If the result peaks above 1.0 it is scaled back to the input peak.
    """
    if len(ir) == 0:
        raise ValueError("impulse response is empty")
    if ir.sample_rate_hz != clip.sample_rate_hz:
        raise ValueError("impulse response sample rate does not match clip")
    y = fftconvolve(clip.samples, ir.samples)[: len(clip)]
    peak = np.max(np.abs(y)) if y.size else 0.0
    if peak > 1.0:
        in_peak = np.max(np.abs(clip.samples))
        y = y * (in_peak / peak)
    return AudioClip(y, clip.sample_rate_hz)


def codec_roundtrip(clip: AudioClip, codec: str) -> AudioClip:
    """G.711 companding round trip at the telephony rate."""
    if clip.sample_rate_hz != 8000:
        raise ValueError("G.711 expects 8 kHz input")
    if codec not in ("mulaw", "alaw"):
        raise ValueError(f"unknown codec {codec!r}")
    return AudioClip(g711.roundtrip(clip.samples, codec), clip.sample_rate_hz)


@lru_cache(maxsize=8)
def _telephony_sos(sample_rate_hz: int):
    lo, hi = TELEPHONY_BAND_HZ
    if hi >= sample_rate_hz / 2:
        raise ValueError("sample rate too low for the telephony band")
    return butter(4, [lo, hi], btype="bandpass", fs=sample_rate_hz, output="sos")


def bandpass_telephony(clip: AudioClip) -> AudioClip:
    """300-3400 Hz Butterworth bandpass, cascaded biquads, zero state."""
    y = sosfilt(_telephony_sos(clip.sample_rate_hz), clip.samples)
    return AudioClip(y, clip.sample_rate_hz)


def apply_gain(clip: AudioClip, gain_db: float) -> AudioClip:
    return AudioClip(clip.samples * 10.0 ** (gain_db / 20.0), clip.sample_rate_hz)


def soft_clip(clip: AudioClip, threshold: float) -> AudioClip:
    """tanh limiter; output magnitude stays below threshold."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    return AudioClip(threshold * np.tanh(clip.samples / threshold), clip.sample_rate_hz)


_NOISE_FIR_TAPS = 31


def add_colored_noise(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Add FIR-colored Gaussian noise at an exact signal-to-noise ratio."""
    x = clip.samples
    p_signal = float(np.mean(x * x)) if x.size else 0.0
    if p_signal == 0.0:
        raise ValueError("cannot set an SNR against a silent clip")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(x.size)
    taps = rng.uniform(-1.0, 1.0, _NOISE_FIR_TAPS)
    noise = fftconvolve(white, taps, mode="same")
    p_noise = float(np.mean(noise * noise))
    noise *= np.sqrt(p_signal / (10.0 ** (snr_db / 10.0) * p_noise))
    return AudioClip(x + noise, clip.sample_rate_hz)


def convolutive_distortion(clip: AudioClip, n_filters: int, seed: int, depth: float = 1.0) -> AudioClip:
    """Zero-phase filtering by a seeded product of random spectral notches.

    depth in [0, 1] scales the notch depths; 0 is the identity.  The gain
    curve is normalized to unit mean, so overall level is preserved.
    """
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    if not (0.0 <= depth <= 1.0):
        raise ValueError("depth must be in [0, 1]")
    if depth == 0.0 or len(clip) == 0:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz)
    rng = np.random.default_rng(seed)
    nyq = clip.sample_rate_hz / 2.0
    n_fft = int(2 ** np.ceil(np.log2(len(clip) + 256)))
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / clip.sample_rate_hz)
    gain = np.ones_like(freqs)
    for _ in range(n_filters):
        center = rng.uniform(0.05, 0.9) * nyq
        width = rng.uniform(0.01, 0.06) * nyq
        notch_depth = rng.uniform(0.2, 1.0) * depth
        gain *= 1.0 - notch_depth * np.exp(-0.5 * ((freqs - center) / width) ** 2)
    gain /= gain.mean()
    y = np.fft.irfft(np.fft.rfft(clip.samples, n_fft) * gain, n_fft)[: len(clip)]
    return AudioClip(y, clip.sample_rate_hz)


_IMPULSE_RMS_WIN_S = 0.025


def impulsive_noise(clip: AudioClip, rate_per_s: float, amplitude_rel: float, seed: int) -> AudioClip:
    """Sprinkle impulses whose height follows the local signal RMS.

    Each sample hosts an impulse with probability rate/sr, so the expected
    count is rate x duration.
    """
    if rate_per_s < 0:
        raise ValueError("rate_per_s must be >= 0")
    x = clip.samples
    if rate_per_s == 0.0 or x.size == 0:
        return AudioClip(x.copy(), clip.sample_rate_hz)
    rng = np.random.default_rng(seed)
    hits = rng.random(x.size) < rate_per_s / clip.sample_rate_hz
    signs = np.where(rng.random(x.size) < 0.5, -1.0, 1.0)
    win = max(int(_IMPULSE_RMS_WIN_S * clip.sample_rate_hz), 1)
    local_power = fftconvolve(x * x, np.ones(win) / win, mode="same")
    local_rms = np.sqrt(np.maximum(local_power, 0.0))
    return AudioClip(x + hits * signs * amplitude_rel * local_rms, clip.sample_rate_hz)


def _draw(value, rng):
    if isinstance(value, tuple) or isinstance(value, list):
        lo, hi = value
        return float(rng.uniform(lo, hi))
    return float(value)


def present(clip: AudioClip, cfg: ChannelConfig, seed: int) -> AudioClip:
    """Run one presentation path end to end.

    playback:          gain -> IR convolution -> bandpass -> codec -> noise
    injection_analog:  gain -> soft clip -> noise -> bandpass -> codec
    injection_digital: gain -> codec
    """
    gain_db = _draw(cfg.gain_db, np.random.default_rng(derive_seed(seed, "gain")))
    out = apply_gain(clip, gain_db)

    def maybe_noise(c: AudioClip) -> AudioClip:
        if cfg.noise_snr_db is None:
            return c
        snr = _draw(cfg.noise_snr_db, np.random.default_rng(derive_seed(seed, "snr")))
        return add_colored_noise(c, snr, derive_seed(seed, "noise"))

    bandpass_on = cfg.bandpass if cfg.bandpass is not None else cfg.path != "injection_digital"
    if cfg.path == "playback":
        if cfg.ir is None:
            raise ValueError("playback path requires an impulse response")
        out = convolve_ir(out, cfg.ir)
        if bandpass_on:
            out = bandpass_telephony(out)
        if cfg.codec != "none":
            out = codec_roundtrip(out, cfg.codec)
        out = maybe_noise(out)
    elif cfg.path == "injection_analog":
        out = soft_clip(out, cfg.clip_threshold)
        out = maybe_noise(out)
        if bandpass_on:
            out = bandpass_telephony(out)
        if cfg.codec != "none":
            out = codec_roundtrip(out, cfg.codec)
    else:  # injection_digital
        if cfg.codec != "none":
            out = codec_roundtrip(out, cfg.codec)
    return out


def apply_augment(clip: AudioClip, spec: AugmentSpec) -> AudioClip:
    """Apply one training-style augmentation described by an AugmentSpec."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "volume":
        return apply_gain(clip, _draw(spec.gain_db_range, rng))
    if spec.kind == "colored_noise":
        snr = _draw(spec.snr_db_range, rng)
        return add_colored_noise(clip, snr, derive_seed(spec.seed, "noise"))
    if spec.kind == "convolutive":
        return convolutive_distortion(clip, spec.n_filters, derive_seed(spec.seed, "filters"))
    if spec.kind == "impulsive":
        return impulsive_noise(
            clip, spec.impulse_rate_per_s, spec.impulse_amplitude, derive_seed(spec.seed, "impulses")
        )
    return codec_roundtrip(clip, spec.codec)
