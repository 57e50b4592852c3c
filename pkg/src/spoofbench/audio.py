"""Audio primitives: WAV I/O, resampling, energy VAD and net-speech bookkeeping.

Everything downstream (features, channel simulation, the evaluation
protocol) operates on :class:`AudioClip` values at a canonical 8 kHz rate
and accounts for speech duration through :class:`VadMask`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import upfirdn

CANONICAL_RATE_HZ = 8000

# Guard used when converting frame power to dB so that digital silence maps
# to a finite floor (-120 dB) instead of -inf.
_POWER_FLOOR = 1e-12


class WavFormatError(ValueError):
    """Base error for unreadable or unsupported WAV files."""


class UnsupportedWavError(WavFormatError):
    """Encoding other than mono PCM16 / IEEE float32."""


class MultichannelWavError(WavFormatError):
    """More than one channel (multichannel unsupported)."""


class TruncatedWavError(WavFormatError):
    """File ends before the declared chunk data."""


@dataclass(frozen=True)
class AudioClip:
    """Mono sample sequence with its sample rate.

    Samples are float64 in nominal [-1, 1] and the array is frozen after
    construction, so clips are safe to share across threads.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class VadConfig:
    """Frame geometry and thresholds for the energy VAD."""

    frame_len_s: float = 0.025
    hop_s: float = 0.010
    energy_margin_db: float = 12.0
    abs_floor_db: float = -55.0
    hangover_frames: int = 5

    def __post_init__(self):
        if not (self.frame_len_s >= self.hop_s > 0):
            raise ValueError("require frame_len_s >= hop_s > 0")
        if self.hangover_frames < 0:
            raise ValueError("hangover_frames must be >= 0")


@dataclass(frozen=True)
class VadMask:
    """Per-frame speech flags at a fixed hop."""

    flags: np.ndarray
    hop_s: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.flags, dtype=bool)
        arr.setflags(write=False)
        object.__setattr__(self, "flags", arr)
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")


def load_wav(path) -> AudioClip:
    """Read a mono RIFF/WAVE file (PCM16 or IEEE float32).

    PCM16 samples are scaled by 1/32768 so that -32768 maps exactly to -1.0.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise TruncatedWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise TruncatedWavError(
                    f"{path}: data chunk declares {size} bytes, file has {len(body)}"
                )
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None or payload is None:
        raise TruncatedWavError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels != 1:
        raise MultichannelWavError(f"{path}: multichannel unsupported ({channels} channels)")
    if (audio_format, bits) == (1, 16):
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif (audio_format, bits) == (3, 32):
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedWavError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits})"
        )
    return AudioClip(samples, rate)


def save_wav(clip: AudioClip, path) -> None:
    """Write a mono PCM16 WAV. Inverse of load_wav for PCM16 content."""
    pcm = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    hdr = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(body),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        clip.sample_rate_hz,
        clip.sample_rate_hz * 2,
        2,
        16,
        b"data",
        len(body),
    )
    Path(path).write_bytes(hdr + body)


# Resampler: windowed-sinc polyphase with a Kaiser window, ~64 taps per
# phase.  Each polyphase branch is normalized to unit DC gain so constant
# signals survive any rational ratio.
_KAISER_BETA = 9.0
_ROLLOFF = 0.945
_TAPS_PER_PHASE = 64


def _design_polyphase(up: int, down: int) -> tuple[np.ndarray, int]:
    half = int(math.ceil((_TAPS_PER_PHASE // 2) * up / down)) * down
    n = np.arange(-half, half + 1, dtype=np.float64)
    fc = 0.5 * _ROLLOFF / max(up, down)
    h = 2.0 * fc * np.sinc(2.0 * fc * n) * np.kaiser(2 * half + 1, _KAISER_BETA)
    for p in range(up):
        branch = h[p::up]
        h[p::up] = branch / branch.sum()
    return h, half


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Resample to target_hz; identical rates return a verbatim copy."""
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    src = clip.sample_rate_hz
    if target_hz == src:
        return AudioClip(clip.samples.copy(), target_hz)
    n_out = int(round(len(clip) * target_hz / src))
    if len(clip) == 0 or n_out == 0:
        return AudioClip(np.zeros(n_out), target_hz)
    g = math.gcd(src, target_hz)
    up, down = target_hz // g, src // g
    h, half = _design_polyphase(up, down)
    y = upfirdn(h, clip.samples, up=up, down=down)
    delay = half // down
    out = y[delay : delay + n_out]
    if out.size < n_out:
        out = np.concatenate([out, np.zeros(n_out - out.size)])
    return AudioClip(out, target_hz)


def _frame_energies_db(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Mean-square energy in dB per frame.

    Frames start every `hop` samples; the trailing partial frames average
    over the samples they actually cover, so appending silence to a clip
    never changes the energy of existing frames.
    """
    n_frames = -(-x.size // hop)  # ceil
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    starts = np.arange(n_frames) * hop
    ends = np.minimum(starts + frame_len, x.size)
    e = (csum[ends] - csum[starts]) / (ends - starts)
    return 10.0 * np.log10(np.maximum(e, _POWER_FLOOR))


def detect_voice(clip: AudioClip, cfg: VadConfig = VadConfig()) -> VadMask:
    """Energy VAD with percentile noise floor and hangover.

    A frame is speech when its energy exceeds

        max(abs_floor_db,
            min(floor + margin, peak - margin),
            peak - margin / 2)

    where floor is the 10th percentile of frame energies and peak their
    maximum.  The min() cap keeps all-speech clips (floor == peak) fully
    flagged; the peak-relative term rejects low-coverage frames straddling
    speech boundaries.  Speech runs are then extended forward by
    hangover_frames.
    """
    sr = clip.sample_rate_hz
    frame_len = int(round(cfg.frame_len_s * sr))
    hop = int(round(cfg.hop_s * sr))
    if len(clip) < frame_len or frame_len == 0 or hop == 0:
        return VadMask(np.zeros(0, dtype=bool), cfg.hop_s)
    e = _frame_energies_db(clip.samples, frame_len, hop)
    floor = np.percentile(e, 10)
    peak = e.max()
    thr = max(
        cfg.abs_floor_db,
        min(floor + cfg.energy_margin_db, peak - cfg.energy_margin_db),
        peak - cfg.energy_margin_db / 2.0,
    )
    flags = e > thr
    out = flags.copy()
    for k in range(1, cfg.hangover_frames + 1):
        out[k:] |= flags[:-k]
    return VadMask(out, cfg.hop_s)


def net_speech_seconds(mask: VadMask) -> float:
    return float(mask.flags.sum()) * mask.hop_s


def _speech_chunks(clip: AudioClip, mask: VadMask):
    hop = int(round(mask.hop_s * clip.sample_rate_hz))
    x = clip.samples
    for i in np.flatnonzero(mask.flags):
        seg = x[i * hop : (i + 1) * hop]
        if seg.size:
            yield seg


def trim_nonspeech(clip: AudioClip, mask: VadMask) -> AudioClip:
    """Concatenate the speech-flagged hops of the clip, in order."""
    chunks = list(_speech_chunks(clip, mask))
    if not chunks:
        return AudioClip(np.zeros(0), clip.sample_rate_hz)
    return AudioClip(np.concatenate(chunks), clip.sample_rate_hz)


def net_speech_prefix(clip: AudioClip, mask: VadMask, k_seconds: float) -> AudioClip:
    """Shortest clip prefix holding >= k seconds of flagged speech, trimmed.

    Returns all available speech when the clip holds less than k seconds.
    """
    if k_seconds <= 0:
        raise ValueError("k_seconds must be positive")
    flags = mask.flags
    need = int(math.ceil(k_seconds / mask.hop_s - 1e-9))
    counts = np.cumsum(flags)
    hit = np.flatnonzero(counts >= need)
    if hit.size == 0:
        return trim_nonspeech(clip, mask)
    j = int(hit[0])
    hop = int(round(mask.hop_s * clip.sample_rate_hz))
    prefix = AudioClip(clip.samples[: (j + 1) * hop], clip.sample_rate_hz)
    return trim_nonspeech(prefix, VadMask(flags[: j + 1], mask.hop_s))
