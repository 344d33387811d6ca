"""Audio loading, normalization, screening, and segmentation.

Every downstream stage consumes canonical 16 kHz mono waveforms produced
here. All functions are pure; AudioClip is immutable once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

DEFAULT_RATE_HZ = 16_000
DEFAULT_SILENCE_FLOOR_DB = -50.0
SILENCE_DB = -120.0

# final segment keeps its own slot only if >= this fraction of segment_s
TAIL_MERGE_FRACTION = 0.25


class AudioError(Exception):
    """Base class for audio input failures."""


class UnreadableFileError(AudioError):
    pass


class UnsupportedFormatError(AudioError):
    pass


class EmptyAudioError(AudioError):
    pass


@dataclass(frozen=True)
class AudioClip:
    """Decoded mono waveform with sample rate."""

    id: str
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise EmptyAudioError(f"clip {self.id!r}: samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise AudioError(f"clip {self.id!r}: non-finite samples")
        if self.sample_rate_hz <= 0:
            raise AudioError(f"clip {self.id!r}: sample rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class ScreenVerdict:
    clip_id: str
    rms_db: float
    passed: bool


def _to_float(samples: np.ndarray) -> np.ndarray:
    """Map integer PCM to float64 in [-1, 1]; pass floats through."""
    if samples.dtype == np.uint8:  # 8-bit WAV is unsigned
        return (samples.astype(np.float64) - 128.0) / 128.0
    if samples.dtype == np.int16:
        return samples.astype(np.float64) / 32768.0
    if samples.dtype == np.int32:  # covers 24-bit payloads promoted by scipy
        return samples.astype(np.float64) / 2147483648.0
    if samples.dtype in (np.float32, np.float64):
        return samples.astype(np.float64)
    raise UnsupportedFormatError(f"unsupported WAV sample format {samples.dtype}")


def load_audio(path: str | Path, target_rate_hz: int = DEFAULT_RATE_HZ) -> AudioClip:
    """Load a PCM WAV file as a mono clip resampled to target_rate_hz.

    Stereo input is downmixed by channel averaging. Resampling uses a
    polyphase windowed-sinc filter and is bypassed when the file is
    already at the target rate.
    """
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise UnsupportedFormatError(f"{path}: {exc}") from exc
    except Exception as exc:  # truncated header, permissions, ...
        raise UnreadableFileError(f"{path}: {exc}") from exc

    if data.size == 0:
        raise EmptyAudioError(f"{path}: zero-length payload")
    if data.ndim == 2:
        if data.shape[1] > 2:
            raise UnsupportedFormatError(f"{path}: {data.shape[1]} channels (only 1-2 supported)")
        samples = _to_float(data).mean(axis=1)
    elif data.ndim == 1:
        samples = _to_float(data)
    else:
        raise UnsupportedFormatError(f"{path}: unexpected shape {data.shape}")

    if rate != target_rate_hz:
        ratio = Fraction(target_rate_hz, rate)
        samples = resample_poly(samples, ratio.numerator, ratio.denominator)
    samples = np.clip(samples, -1.0, 1.0)
    return AudioClip(id=path.stem, samples=samples, sample_rate_hz=target_rate_hz)


def save_wav(path: str | Path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM WAV."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), clip.sample_rate_hz, pcm)


def screen_volume(clip: AudioClip, floor_db: float = DEFAULT_SILENCE_FLOOR_DB) -> ScreenVerdict:
    """RMS level of the whole clip in dBFS; passes iff at or above floor_db."""
    rms = math.sqrt(float(np.mean(clip.samples**2)))
    rms_db = SILENCE_DB if rms == 0.0 else max(20.0 * math.log10(rms), SILENCE_DB)
    return ScreenVerdict(clip_id=clip.id, rms_db=rms_db, passed=rms_db >= floor_db)


def segment_clips(clip: AudioClip, segment_s: float) -> list[AudioClip]:
    """Split into consecutive non-overlapping segments of segment_s seconds.

    The final remainder keeps its own segment when it is at least 25% of
    segment_s, otherwise it is merged into the previous segment.
    Concatenating the result reproduces the source sample-exactly.
    """
    if segment_s <= 0:
        raise ValueError("segment_s must be positive")
    seg_len = int(round(segment_s * clip.sample_rate_hz))
    n = len(clip.samples)
    if n <= seg_len:
        return [AudioClip(id=f"{clip.id}_000", samples=clip.samples, sample_rate_hz=clip.sample_rate_hz)]

    bounds = list(range(0, n, seg_len))
    tail = n - bounds[-1]
    if tail < TAIL_MERGE_FRACTION * seg_len and len(bounds) > 1:
        bounds.pop()  # merge the short tail into the previous segment
    bounds.append(n)

    return [
        AudioClip(
            id=f"{clip.id}_{i:03d}",
            samples=clip.samples[lo:hi],
            sample_rate_hz=clip.sample_rate_hz,
        )
        for i, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:]))
    ]
