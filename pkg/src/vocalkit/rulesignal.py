"""Reference-based scoring of a user take against the original vocal.

Pitch accuracy via band-constrained DTW over cents contours, rhythm
accuracy via greedy onset matching, timbre consistency via cosine
similarity of normalized mel frames, a combined report with UI-style
annotations, and top-K% pre-screening.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from numba import njit

from .audio import AudioClip
from .features import (
    MelMatrix,
    OnsetSequence,
    PitchContour,
    detect_onsets,
    extract_f0,
    mel_features,
)

PITCH_COST_CAP_CENTS = 600.0
VOICING_MISMATCH_COST_CENTS = 100.0
DEFAULT_BAND_S = 10.0

ANNOT_MIN_RUN_S = 0.3
ANNOT_MIN_DEVIATION_CENTS = 50.0
ANNOT_MIN_OFFSET_S = 0.08

DEFAULT_RHYTHM_TOL_S = 0.25
DEFAULT_WEIGHTS = (0.5, 0.3, 0.2)  # pitch, rhythm, timbre

BADGES = (("Perfect", 90.0), ("Good", 75.0), ("Fair", 50.0))


class RuleSignalError(Exception):
    pass


@dataclass(frozen=True)
class DtwAlignment:
    path: np.ndarray  # (N, 2) of (user_frame, ref_frame)
    total_cost_cents: float
    mean_deviation_cents: float
    # per-pair detail used by pitch_accuracy annotations
    pair_deviation_cents: np.ndarray  # signed user - ref, NaN unless both voiced
    hop_s: float


@dataclass
class RuleSignalReport:
    clip_id: str
    pitch_score: float
    rhythm_score: float
    timbre_score: float
    combined: float
    transposition_offset_cents: float
    pitch_annotations: list[tuple[float, float, str]]
    rhythm_annotations: list[tuple[float, float, str]]
    timbre_badge: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "RuleSignalReport":
        obj = json.loads(line)
        obj["pitch_annotations"] = [tuple(a) for a in obj["pitch_annotations"]]
        obj["rhythm_annotations"] = [tuple(a) for a in obj["rhythm_annotations"]]
        return cls(**obj)


@dataclass
class RuleSignalConfig:
    fmin_hz: float = 65.0
    fmax_hz: float = 1100.0
    n_mels: int = 80
    rhythm_tol_s: float = DEFAULT_RHYTHM_TOL_S
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    band_frames: int | None = None  # default: max(|U-R|, 10 s of frames)


def normalize_transposition(
    user: PitchContour, ref: PitchContour
) -> tuple[PitchContour, float]:
    """Remove the whole-semitone median offset between two contours.

    Returns the shifted user contour and the removed offset in cents.
    Rounding to whole semitones keeps genuine intonation error intact.
    """
    if not user.voiced.any() or not ref.voiced.any():
        raise RuleSignalError("both contours must contain at least one voiced frame")
    raw = float(np.median(user.f0_cents[user.voiced]) - np.median(ref.f0_cents[ref.voiced]))
    offset = 100.0 * math.floor(raw / 100.0 + 0.5)
    shifted = np.where(user.voiced, user.f0_cents - offset, user.f0_cents)
    return (
        PitchContour(
            frame_times_s=user.frame_times_s,
            f0_cents=shifted,
            voiced=user.voiced,
            hop_s=user.hop_s,
        ),
        offset,
    )


@njit(cache=True)
def _dtw_fill(cost: np.ndarray, band: int) -> np.ndarray:
    u, r = cost.shape
    big = np.inf
    acc = np.full((u, r), big)
    for i in range(u):
        jlo = max(0, i - band)
        jhi = min(r - 1, i + band)
        for j in range(jlo, jhi + 1):
            if i == 0 and j == 0:
                acc[0, 0] = cost[0, 0]
                continue
            best = big
            if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
                best = acc[i - 1, j - 1]
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            if best < big:
                acc[i, j] = cost[i, j] + best
    return acc


@njit(cache=True)
def _dtw_backtrack(acc: np.ndarray) -> np.ndarray:
    u, r = acc.shape
    path = np.empty((u + r, 2), dtype=np.int64)
    k = 0
    i, j = u - 1, r - 1
    path[k, 0], path[k, 1] = i, j
    while i > 0 or j > 0:
        # preference: diagonal > vertical (user step) > horizontal
        best = np.inf
        if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
            best = acc[i - 1, j - 1]
        if i > 0 and acc[i - 1, j] < best:
            best = acc[i - 1, j]
        if j > 0 and acc[i, j - 1] < best:
            best = acc[i, j - 1]
        if i > 0 and j > 0 and acc[i - 1, j - 1] == best:
            i, j = i - 1, j - 1
        elif i > 0 and acc[i - 1, j] == best:
            i = i - 1
        else:
            j = j - 1
        k += 1
        path[k, 0], path[k, 1] = i, j
    return path[: k + 1][::-1].copy()


def dtw_align(user: PitchContour, ref: PitchContour, band_frames: int | None = None) -> DtwAlignment:
    """Band-constrained DTW over two cents contours.

    Frame cost: |u - r| capped at 600 cents when both frames are voiced,
    100 cents when exactly one is, 0 when neither. Steps are
    {(1,0),(0,1),(1,1)} with diagonal preferred on ties.
    """
    u, r = len(user.f0_cents), len(ref.f0_cents)
    if u == 0 or r == 0:
        raise RuleSignalError("empty contour")
    min_band = abs(u - r)
    if band_frames is None:
        band_frames = max(min_band, int(round(DEFAULT_BAND_S / user.hop_s)))
    if band_frames < min_band:
        raise RuleSignalError(f"band {band_frames} narrower than length gap {min_band}")

    uv = user.voiced[:, None]
    rv = ref.voiced[None, :]
    diff = np.abs(user.f0_cents[:, None] - ref.f0_cents[None, :])
    cost = np.where(
        uv & rv,
        np.minimum(diff, PITCH_COST_CAP_CENTS),
        np.where(uv ^ rv, VOICING_MISMATCH_COST_CENTS, 0.0),
    )
    acc = _dtw_fill(cost, band_frames)
    if not np.isfinite(acc[-1, -1]):
        raise RuleSignalError("band too narrow to reach the end of both contours")
    path = _dtw_backtrack(acc)

    pi, pj = path[:, 0], path[:, 1]
    both = user.voiced[pi] & ref.voiced[pj]
    dev = np.full(len(path), np.nan)
    dev[both] = user.f0_cents[pi[both]] - ref.f0_cents[pj[both]]
    mean_dev = float(np.mean(np.abs(dev[both]))) if both.any() else 0.0
    return DtwAlignment(
        path=path,
        total_cost_cents=float(acc[-1, -1]),
        mean_deviation_cents=mean_dev,
        pair_deviation_cents=dev,
        hop_s=user.hop_s,
    )


def pitch_accuracy(align: DtwAlignment) -> tuple[float, list[tuple[float, float, str]]]:
    """Score pitch from mean aligned deviation; annotate sustained drifts.

    100 cents mean error costs 20 points. A maximal run of same-signed
    deviations of at least 50 cents lasting >= 0.3 s is annotated in the
    "X.Y Semitones Lower/Higher" style.
    """
    score = max(0.0, 100.0 - align.mean_deviation_cents / 5.0)
    annotations: list[tuple[float, float, str]] = []
    dev = align.pair_deviation_cents
    user_frames = align.path[:, 0]

    def flush(start: int, end: int):
        run = dev[start:end]
        duration = (user_frames[end - 1] - user_frames[start] + 1) * align.hop_s
        if duration < ANNOT_MIN_RUN_S:
            return
        d = float(np.mean(run))
        direction = "Lower" if d < 0 else "Higher"
        label = f"{abs(d) / 100.0:.1f} Semitones {direction}"
        annotations.append((float(user_frames[start] * align.hop_s), d, label))

    run_start = None
    run_sign = 0
    for k in range(len(dev)):
        v = dev[k]
        big = not math.isnan(v) and abs(v) >= ANNOT_MIN_DEVIATION_CENTS
        sign = 0 if not big else (1 if v > 0 else -1)
        if run_start is not None and sign != run_sign:
            flush(run_start, k)
            run_start = None
        if big and run_start is None:
            run_start, run_sign = k, sign
    if run_start is not None:
        flush(run_start, len(dev))
    return score, annotations


def rhythm_accuracy(
    user: OnsetSequence, ref: OnsetSequence, tol_s: float = DEFAULT_RHYTHM_TOL_S
) -> tuple[float, list[tuple[float, float, str]]]:
    """Greedy one-to-one onset matching; score from miss rate and offsets.

    Each reference onset, in time order, claims the nearest unmatched
    user onset within +/- tol_s. Matches offset by >= 0.08 s get an
    "Early/Late" annotation.
    """
    if tol_s <= 0:
        raise RuleSignalError("tol_s must be positive")
    ref_times = np.asarray(ref.onset_times_s, dtype=np.float64)
    user_times = np.asarray(user.onset_times_s, dtype=np.float64)
    if len(ref_times) == 0:
        raise RuleSignalError("empty reference onset sequence")

    taken = np.zeros(len(user_times), dtype=bool)
    offsets = []
    annotations: list[tuple[float, float, str]] = []
    for rt in ref_times:
        if len(user_times) == 0:
            break
        dist = np.abs(user_times - rt)
        dist[taken] = np.inf
        k = int(np.argmin(dist))
        if dist[k] <= tol_s:
            taken[k] = True
            offset = float(user_times[k] - rt)
            offsets.append(offset)
            if abs(offset) >= ANNOT_MIN_OFFSET_S:
                direction = "Early" if offset < 0 else "Late"
                annotations.append(
                    (float(user_times[k]), offset, f"{abs(offset):.2f} Seconds {direction}")
                )
    m = len(offsets)
    mean_abs = float(np.mean(np.abs(offsets))) if m else 0.0
    miss = (len(ref_times) - m) / len(ref_times)
    score = max(0.0, 100.0 * (1.0 - miss) - mean_abs / tol_s * 20.0)
    return score, annotations


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    centered = mat - mat.mean(axis=1, keepdims=True)
    std = centered.std(axis=1, keepdims=True)
    return np.divide(centered, std, out=np.zeros_like(centered), where=std > 1e-12)


def timbre_badge_for(score: float) -> str:
    for badge, floor in BADGES:
        if score >= floor:
            return badge
    return "Poor"


def timbre_consistency(
    user_mel: MelMatrix, ref_mel: MelMatrix, align: DtwAlignment
) -> tuple[float, str]:
    """Mean cosine similarity of mean-variance-normalized mel frames
    over the aligned frame pairs, mapped to [0, 100] with a badge."""
    pi, pj = align.path[:, 0], align.path[:, 1]
    if pi.max() >= user_mel.frames.shape[0] or pj.max() >= ref_mel.frames.shape[0]:
        raise RuleSignalError("alignment frame indices out of range for mel matrices")
    a = _normalize_rows(user_mel.frames[pi])
    b = _normalize_rows(ref_mel.frames[pj])
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    sims = np.empty(len(a))
    silent = (na < 1e-9) | (nb < 1e-9)
    both_silent = (na < 1e-9) & (nb < 1e-9)
    denom = np.where(silent, 1.0, na * nb)
    sims = np.sum(a * b, axis=1) / denom
    sims[silent] = 0.0
    sims[both_silent] = 1.0  # two constant frames are identical in shape
    score = float(np.clip(100.0 * np.mean(sims), 0.0, 100.0))
    return score, timbre_badge_for(score)


def rulesignal_report(
    user_clip: AudioClip, ref_clip: AudioClip, cfg: RuleSignalConfig | None = None
) -> RuleSignalReport:
    """Run the full reference-based chain and combine the three scores."""
    cfg = cfg or RuleSignalConfig()
    user_f0 = extract_f0(user_clip, cfg.fmin_hz, cfg.fmax_hz)
    ref_f0 = extract_f0(ref_clip, cfg.fmin_hz, cfg.fmax_hz)
    norm_user, offset = normalize_transposition(user_f0, ref_f0)
    align = dtw_align(norm_user, ref_f0, cfg.band_frames)
    p_score, p_annot = pitch_accuracy(align)
    r_score, r_annot = rhythm_accuracy(
        detect_onsets(user_clip), detect_onsets(ref_clip), cfg.rhythm_tol_s
    )
    t_score, badge = timbre_consistency(
        mel_features(user_clip, cfg.n_mels), mel_features(ref_clip, cfg.n_mels), align
    )
    wp, wr, wt = cfg.weights
    return RuleSignalReport(
        clip_id=user_clip.id,
        pitch_score=p_score,
        rhythm_score=r_score,
        timbre_score=t_score,
        combined=wp * p_score + wr * r_score + wt * t_score,
        transposition_offset_cents=offset,
        pitch_annotations=p_annot,
        rhythm_annotations=r_annot,
        timbre_badge=badge,
    )


def prescreen(reports: list[RuleSignalReport], keep_fraction: float) -> list[str]:
    """Keep the ids of the top keep_fraction of reports by combined score."""
    if not reports:
        raise RuleSignalError("no reports to screen")
    if not (0.0 < keep_fraction <= 1.0):
        raise RuleSignalError("keep_fraction must be in (0, 1]")
    ranked = sorted(reports, key=lambda rep: (-rep.combined, rep.clip_id))
    keep = max(1, int(math.floor(keep_fraction * len(reports) + 0.5)))
    return [rep.clip_id for rep in ranked[:keep]]
