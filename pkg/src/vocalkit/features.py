"""Frame-level acoustic features: F0 contour, note onsets, mel spectrogram.

All features share a 10 ms hop so pitch, onset novelty, and mel frames
live on one time base. Pitch is expressed in cents above 8.1758 Hz
(MIDI note number x 100), which turns transposition into a subtraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip

HOP_S = 0.010
F0_WINDOW_S = 0.040
STFT_WINDOW_S = 0.025
MEL_FMAX_HZ = 8000.0
LOG_ENERGY_FLOOR = 1e-10
CENTS_REF_HZ = 8.1758  # MIDI 0

DEFAULT_FMIN_HZ = 65.0
DEFAULT_FMAX_HZ = 1100.0
DEFAULT_N_MELS = 80
DEFAULT_WINDOW_S = 3.0
DEFAULT_STRIDE_S = 1.5

# voiced iff clarity (1 - normalized difference minimum) reaches this
VOICING_CLARITY = 0.35
# absolute threshold for the first-dip pick in the lag search
_DIP_THRESHOLD = 0.1
# frames quieter than this RMS are unvoiced outright
_SILENCE_RMS = 1e-4

ONSET_MIN_GAP_S = 0.050
ONSET_MEDIAN_HALF_WINDOW_S = 0.5
ONSET_DELTA = 0.10  # added to the local median of max-normalized flux


class FeatureError(Exception):
    pass


@dataclass(frozen=True)
class PitchContour:
    frame_times_s: np.ndarray
    f0_cents: np.ndarray
    voiced: np.ndarray
    hop_s: float

    def __post_init__(self):
        if not (len(self.frame_times_s) == len(self.f0_cents) == len(self.voiced)):
            raise FeatureError("contour arrays must share length")


@dataclass(frozen=True)
class OnsetSequence:
    onset_times_s: np.ndarray


@dataclass(frozen=True)
class MelMatrix:
    frames: np.ndarray  # (T, n_mels) natural-log energies
    n_mels: int
    hop_s: float


@dataclass(frozen=True)
class FeatureWindows:
    windows: list[tuple[float, np.ndarray]]  # (start_s, (w_frames, n_mels))
    window_s: float
    stride_s: float
    n_mels: int
    hop_s: float


def hz_to_cents(f0_hz: np.ndarray | float) -> np.ndarray | float:
    return 1200.0 * np.log2(np.asarray(f0_hz, dtype=np.float64) / CENTS_REF_HZ)


def cents_to_hz(cents: np.ndarray | float) -> np.ndarray | float:
    return CENTS_REF_HZ * np.exp2(np.asarray(cents, dtype=np.float64) / 1200.0)


def _frame_matrix(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Strided view of consecutive frames; caller must not write to it."""
    n_frames = 1 + (len(x) - frame_len) // hop
    stride = x.strides[0]
    return np.lib.stride_tricks.as_strided(
        x, shape=(n_frames, frame_len), strides=(hop * stride, stride), writeable=False
    )


def extract_f0(
    clip: AudioClip,
    fmin_hz: float = DEFAULT_FMIN_HZ,
    fmax_hz: float = DEFAULT_FMAX_HZ,
) -> PitchContour:
    """Autocorrelation-based pitch tracking (difference function with
    cumulative-mean normalization), 10 ms hop, 40 ms analysis window.

    Frames whose normalized-difference clarity falls below the voicing
    threshold are marked unvoiced; f0 is reported in cents above 8.1758 Hz.
    """
    if not (40.0 <= fmin_hz < fmax_hz <= 1200.0):
        raise FeatureError("need 40 <= fmin < fmax <= 1200 Hz")
    sr = clip.sample_rate_hz
    hop = int(round(HOP_S * sr))
    win = int(round(F0_WINDOW_S * sr))
    if len(clip.samples) < win:
        raise FeatureError("clip shorter than one analysis window")

    max_lag = int(math.ceil(sr / fmin_hz))
    min_lag = max(2, int(math.floor(sr / fmax_hz)))
    buf_len = win + max_lag
    x = np.concatenate([clip.samples, np.zeros(buf_len)])
    n_frames = 1 + (len(clip.samples) - win) // hop
    frames = _frame_matrix(x, buf_len, hop)[:n_frames]

    # d(tau) = p(0) + p(tau) - 2 c(tau), all terms batched over frames
    sq = np.concatenate(
        [np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1
    )
    p = sq[:, win : win + max_lag + 1] - sq[:, 0 : max_lag + 1]
    nfft = 1 << int(math.ceil(math.log2(buf_len + win)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    ref = np.fft.rfft(frames[:, :win], nfft, axis=1)
    corr = np.fft.irfft(spec * np.conj(ref), nfft, axis=1)[:, : max_lag + 1]
    d = p[:, :1] + p - 2.0 * corr
    d = np.maximum(d, 0.0)

    # cumulative-mean normalization
    csum = np.cumsum(d[:, 1:], axis=1)
    taus = np.arange(1, max_lag + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf = np.where(csum > 0, d[:, 1:] * taus / csum, 1.0)
    cmndf = np.concatenate([np.ones((n_frames, 1)), cmndf], axis=1)

    f0_cents = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    frame_rms = np.sqrt(p[:, 0] / win)
    search = cmndf[:, min_lag : max_lag + 1]

    for i in range(n_frames):
        if frame_rms[i] < _SILENCE_RMS:
            continue
        row = search[i]
        below = np.flatnonzero(row < _DIP_THRESHOLD)
        if below.size:
            # walk to the bottom of the first dip
            j = below[0]
            while j + 1 < len(row) and row[j + 1] < row[j]:
                j += 1
        else:
            j = int(np.argmin(row))
        tau = j + min_lag
        clarity = 1.0 - cmndf[i, tau]
        if clarity < VOICING_CLARITY:
            continue
        # parabolic refinement of the difference-function minimum
        if 1 <= tau < max_lag:
            a, b, c = d[i, tau - 1], d[i, tau], d[i, tau + 1]
            denom = a - 2.0 * b + c
            shift = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
            tau_ref = tau + float(np.clip(shift, -0.5, 0.5))
        else:
            tau_ref = float(tau)
        f0 = sr / tau_ref
        if not (fmin_hz * 0.9 <= f0 <= fmax_hz * 1.1):
            continue
        f0_cents[i] = hz_to_cents(f0)
        voiced[i] = True

    times = np.arange(n_frames) * HOP_S
    return PitchContour(frame_times_s=times, f0_cents=f0_cents, voiced=voiced, hop_s=HOP_S)


def _power_spectrogram(clip: AudioClip) -> tuple[np.ndarray, np.ndarray]:
    """Hann STFT power spectrogram at the shared 10 ms hop.

    Returns (power (T, bins), bin center frequencies).
    """
    sr = clip.sample_rate_hz
    hop = int(round(HOP_S * sr))
    win = int(round(STFT_WINDOW_S * sr))
    if len(clip.samples) < win:
        raise FeatureError("clip shorter than one STFT window")
    nfft = 1 << int(math.ceil(math.log2(win)))
    frames = _frame_matrix(clip.samples, win, hop)
    window = np.hanning(win)
    spec = np.fft.rfft(frames * window, nfft, axis=1)
    freqs = np.fft.rfftfreq(nfft, d=1.0 / sr)
    return np.abs(spec) ** 2, freqs


def detect_onsets(clip: AudioClip) -> OnsetSequence:
    """Half-wave-rectified spectral-flux onsets at 10 ms hop.

    Peaks above a local median-plus-delta threshold are kept, with a
    50 ms minimum inter-onset gap. Silence yields an empty sequence.
    """
    if clip.duration_s < 0.1:
        raise FeatureError("clip shorter than 100 ms")
    power, _ = _power_spectrogram(clip)
    mag = np.sqrt(power)
    flux = np.sum(np.maximum(mag[1:] - mag[:-1], 0.0), axis=1)
    flux = np.concatenate([[0.0], flux])
    peak = flux.max()
    if peak <= 0.0:
        return OnsetSequence(onset_times_s=np.array([]))
    flux = flux / peak  # gain invariance

    half = int(round(ONSET_MEDIAN_HALF_WINDOW_S / HOP_S))
    n = len(flux)
    threshold = np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        threshold[i] = np.median(flux[lo:hi]) + ONSET_DELTA

    min_gap = int(round(ONSET_MIN_GAP_S / HOP_S))
    onsets = []
    last = -min_gap - 1
    for i in range(1, n - 1):
        if flux[i] > threshold[i] and flux[i] >= flux[i - 1] and flux[i] > flux[i + 1]:
            if i - last > min_gap:
                onsets.append(i * HOP_S)
                last = i
    times = np.asarray(onsets)
    return OnsetSequence(onset_times_s=times[times <= clip.duration_s])


def mel_filterbank(n_mels: int, n_fft_bins: int, sr: int, fmax_hz: float = MEL_FMAX_HZ) -> np.ndarray:
    """Triangular mel filterbank (n_mels, n_fft_bins) over [0, fmax_hz]."""

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    nfft = 2 * (n_fft_bins - 1)
    freqs = np.arange(n_fft_bins) * sr / nfft
    edges = from_mel(np.linspace(to_mel(0.0), to_mel(fmax_hz), n_mels + 2))
    fb = np.zeros((n_mels, n_fft_bins))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / max(center - lo, 1e-9)
        falling = (hi - freqs) / max(hi - center, 1e-9)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_center_frequencies(n_mels: int, fmax_hz: float = MEL_FMAX_HZ) -> np.ndarray:
    mel_edges = np.linspace(0.0, 2595.0 * math.log10(1.0 + fmax_hz / 700.0), n_mels + 2)
    return 700.0 * (10.0 ** (mel_edges[1:-1] / 2595.0) - 1.0)


def mel_features(clip: AudioClip, n_mels: int = DEFAULT_N_MELS) -> MelMatrix:
    """Log mel energies: 25 ms window, 10 ms hop, floor 1e-10, natural log."""
    if not (20 <= n_mels <= 128):
        raise FeatureError("n_mels must be in [20, 128]")
    power, freqs = _power_spectrogram(clip)
    fb = mel_filterbank(n_mels, power.shape[1], clip.sample_rate_hz)
    energies = power @ fb.T
    return MelMatrix(
        frames=np.log(np.maximum(energies, LOG_ENERGY_FLOOR)),
        n_mels=n_mels,
        hop_s=HOP_S,
    )


def window_features(
    mel: MelMatrix,
    window_s: float = DEFAULT_WINDOW_S,
    stride_s: float = DEFAULT_STRIDE_S,
) -> FeatureWindows:
    """Slice a mel matrix into fixed-length windows on a uniform stride.

    Covers the whole matrix; the final partial window is zero-padded so
    every window has the same frame count.
    """
    if not (0 < stride_s <= window_s):
        raise FeatureError("need 0 < stride_s <= window_s")
    w = int(round(window_s / mel.hop_s))
    s = int(round(stride_s / mel.hop_s))
    t = mel.frames.shape[0]
    count = 1 if t <= w else int(math.ceil((t - w) / s)) + 1
    windows = []
    for i in range(count):
        start = i * s
        chunk = mel.frames[start : start + w]
        if chunk.shape[0] < w:
            pad = np.zeros((w - chunk.shape[0], mel.n_mels))
            chunk = np.concatenate([chunk, pad], axis=0)
        windows.append((start * mel.hop_s, chunk))
    return FeatureWindows(
        windows=windows, window_s=window_s, stride_s=stride_s, n_mels=mel.n_mels, hop_s=mel.hop_s
    )
