"""Multi-stage descriptive feedback.

A pluggable per-segment critic (rule-based default mapping feature
statistics to template sentences, each citing its numeric evidence),
concatenation into a diagnostic document with de-duplication, and a
client for an external summarizer endpoint with a degraded-mode
fallback that never loses notes.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import httpx

from .audio import AudioClip
from .features import MelMatrix, OnsetSequence, PitchContour, LOG_ENERGY_FLOOR

DIMENSIONS = ("breath", "timbre", "emotion", "technique")

MAX_SEGMENT_S = 35.0
DEDUP_MIN_CONSECUTIVE = 3
SUMMARIZER_RETRIES = 3
SUMMARIZER_BACKOFF_S = 0.5

INSUFFICIENT_NOTE = "insufficient voiced material to assess this segment"


class FeedbackError(Exception):
    pass


@dataclass
class CriticThresholds:
    jitter_stable_cents: float = 35.0
    jitter_unstable_cents: float = 80.0
    intonation_stable_cents: float = 8.0
    intonation_unstable_cents: float = 15.0
    gap_irregular_s: float = 0.35
    droop_cents: float = 60.0
    dynamic_flat: float = 0.8
    dynamic_rich: float = 2.0
    centroid_unstable: float = 8.0
    min_voiced_fraction: float = 0.05


@dataclass
class ClipCritique:
    clip_id: str
    segment_index: int
    dimension_notes: dict[str, str]
    evidence: dict[str, list[tuple[float, str, float]]]  # (time_s, metric, value)


@dataclass
class DiagnosticDocument:
    clip_id: str
    critiques: list[ClipCritique]
    summary: str | None = None

    def plain_text(self) -> str:
        lines = [f"Diagnostic notes for {self.clip_id}"]
        for c in self.critiques:
            lines.append(f"[segment {c.segment_index}]")
            for dim in DIMENSIONS:
                if dim in c.dimension_notes:
                    lines.append(f"  {dim}: {c.dimension_notes[dim]}")
        if self.summary:
            lines.append(f"Summary: {self.summary}")
        return "\n".join(lines)


def _voiced_runs(voiced: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) index ranges of consecutive voiced frames."""
    runs = []
    start = None
    for i, v in enumerate(voiced):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(voiced)))
    return runs


def _rule_based_critic(
    segment: AudioClip,
    contour: PitchContour,
    onsets: OnsetSequence,
    mel: MelMatrix,
    segment_index: int,
    thresholds: CriticThresholds,
) -> ClipCritique:
    notes: dict[str, str] = {}
    evidence: dict[str, list[tuple[float, str, float]]] = {d: [] for d in DIMENSIONS}
    hop = contour.hop_s
    voiced_fraction = float(np.mean(contour.voiced)) if len(contour.voiced) else 0.0

    if voiced_fraction < thresholds.min_voiced_fraction:
        for dim in DIMENSIONS:
            notes[dim] = INSUFFICIENT_NOTE
            evidence[dim].append((0.0, "voiced_fraction", voiced_fraction))
        return ClipCritique(segment.id, segment_index, notes, evidence)

    runs = [(s, e) for s, e in _voiced_runs(contour.voiced) if (e - s) * hop >= 0.15]

    # technique: pitch jitter (cent std within sustained notes) plus
    # off-key offset (note medians vs. the semitone grid); a note held
    # rock-steady at the wrong pitch has zero jitter but a large offset
    jitters = [float(np.std(contour.f0_cents[s:e])) for s, e in runs if e - s >= 5]
    jitter = float(np.mean(jitters)) if jitters else 0.0
    grid_errs = []
    for s, e in runs:
        median = float(np.median(contour.f0_cents[s:e]))
        wrapped = (median + 50.0) % 100.0 - 50.0
        grid_errs.append(abs(wrapped))
    grid_err = float(np.mean(grid_errs)) if grid_errs else 0.0
    t0 = float(runs[0][0] * hop) if runs else 0.0
    detail = f"pitch jitter {jitter:.0f} cents, off-key offset {grid_err:.0f} cents"
    if jitter >= thresholds.jitter_unstable_cents or grid_err >= thresholds.intonation_unstable_cents:
        notes["technique"] = f"unstable intonation within notes ({detail})"
    elif jitter <= thresholds.jitter_stable_cents and grid_err <= thresholds.intonation_stable_cents:
        notes["technique"] = f"stable intonation within notes ({detail})"
    else:
        notes["technique"] = f"moderately steady intonation ({detail})"
    evidence["technique"].append((t0, "pitch_jitter_cents", jitter))
    evidence["technique"].append((t0, "note_grid_error_cents", grid_err))

    # breath: inter-phrase gap irregularity and pitch droop at phrase ends
    gaps = [
        (runs[i + 1][0] - runs[i][1]) * hop for i in range(len(runs) - 1)
    ]
    gap_std = float(np.std(gaps)) if len(gaps) >= 2 else 0.0
    droops = []
    for s, e in runs:
        if e - s >= 10:
            tail = contour.f0_cents[e - 5 : e]
            body = contour.f0_cents[s : e - 5]
            droops.append(float(np.mean(body) - np.mean(tail)))
    droop = float(np.mean(droops)) if droops else 0.0
    if gap_std >= thresholds.gap_irregular_s or droop >= thresholds.droop_cents:
        notes["breath"] = (
            f"irregular phrase support; audible breaks between phrases "
            f"(gap spread {gap_std:.2f} s, end-of-phrase droop {droop:.0f} cents)"
        )
    else:
        notes["breath"] = (
            f"steady phrase support (gap spread {gap_std:.2f} s, "
            f"end-of-phrase droop {droop:.0f} cents)"
        )
    evidence["breath"].append((t0, "phrase_gap_std_s", gap_std))
    evidence["breath"].append((t0, "phrase_end_droop_cents", droop))

    # emotion: dynamic range of mel frame energy
    frame_energy = mel.frames.mean(axis=1)
    active = frame_energy[frame_energy > np.log(LOG_ENERGY_FLOOR) + 1.0]
    dyn = float(np.std(active)) if active.size else 0.0
    if dyn <= thresholds.dynamic_flat:
        notes["emotion"] = f"flat dynamics, little expressive contrast (energy spread {dyn:.2f})"
    elif dyn >= thresholds.dynamic_rich:
        notes["emotion"] = f"wide dynamic range supporting expression (energy spread {dyn:.2f})"
    else:
        notes["emotion"] = f"moderate dynamic shaping (energy spread {dyn:.2f})"
    evidence["emotion"].append((0.0, "energy_spread", dyn))

    # timbre: spectral-centroid stability over mel bins
    weights = np.exp(mel.frames - mel.frames.max(axis=1, keepdims=True))
    centroid = (weights * np.arange(mel.n_mels)).sum(axis=1) / weights.sum(axis=1)
    cent_std = float(np.std(centroid[frame_energy > np.log(LOG_ENERGY_FLOOR) + 1.0])) if active.size else 0.0
    if cent_std >= thresholds.centroid_unstable:
        notes["timbre"] = f"uneven tone color across the segment (centroid spread {cent_std:.1f} bins)"
    else:
        notes["timbre"] = f"consistent tone color (centroid spread {cent_std:.1f} bins)"
    evidence["timbre"].append((0.0, "centroid_spread_bins", cent_std))

    return ClipCritique(segment.id, segment_index, notes, evidence)


_CRITICS = {"rule-based": _rule_based_critic}


def critique_clip(
    segment: AudioClip,
    features: tuple[PitchContour, OnsetSequence, MelMatrix],
    critic_id: str = "rule-based",
    segment_index: int = 0,
    thresholds: CriticThresholds | None = None,
) -> ClipCritique:
    """Per-segment critique. The rule-based default maps feature
    statistics to template sentences, each citing numeric evidence."""
    if segment.duration_s > MAX_SEGMENT_S:
        raise FeedbackError(f"segment {segment.id} longer than {MAX_SEGMENT_S} s")
    if critic_id not in _CRITICS:
        raise FeedbackError(f"unknown critic {critic_id!r}")
    contour, onsets, mel = features
    return _CRITICS[critic_id](
        segment, contour, onsets, mel, segment_index, thresholds or CriticThresholds()
    )


def _base_clip_id(critique: ClipCritique) -> str:
    # segment ids carry a _NNN suffix added by the segmenter
    return re.sub(r"_\d{3}$", "", critique.clip_id)


def aggregate_critiques(
    critiques: list[ClipCritique], segment_s: float = 30.0
) -> DiagnosticDocument:
    """Concatenate per-segment critiques in order.

    Identical notes repeated in >= 3 consecutive segments collapse into
    one note annotated with the covered time range.
    """
    if not critiques:
        raise FeedbackError("no critiques to aggregate")
    base_ids = {_base_clip_id(c) for c in critiques}
    if len(base_ids) != 1:
        raise FeedbackError(f"mixed clip ids: {sorted(base_ids)}")
    ordered = sorted(critiques, key=lambda c: c.segment_index)
    indices = [c.segment_index for c in ordered]
    if indices != list(range(indices[0], indices[0] + len(indices))) or indices[0] != 0:
        raise FeedbackError(f"segment indices not contiguous from 0: {indices}")

    merged = [
        ClipCritique(c.clip_id, c.segment_index, dict(c.dimension_notes), dict(c.evidence))
        for c in ordered
    ]
    for dim in DIMENSIONS:
        i = 0
        while i < len(merged):
            note = merged[i].dimension_notes.get(dim)
            if note is None:
                i += 1
                continue
            j = i
            while j + 1 < len(merged) and merged[j + 1].dimension_notes.get(dim) == note:
                j += 1
            if j - i + 1 >= DEDUP_MIN_CONSECUTIVE:
                start_s = ordered[i].segment_index * segment_s
                end_s = (ordered[j].segment_index + 1) * segment_s
                merged[i].dimension_notes[dim] = f"{note} (throughout {start_s:.0f}-{end_s:.0f} s)"
                for k in range(i + 1, j + 1):
                    merged[k].dimension_notes.pop(dim, None)
            i = j + 1
    return DiagnosticDocument(clip_id=base_ids.pop(), critiques=merged)


@dataclass
class SummaryResult:
    text: str
    degraded: bool


def build_summary_request(doc: DiagnosticDocument) -> dict:
    """Wire envelope sent to the external summarizer."""
    return {
        "clip_id": doc.clip_id,
        "dimensions": list(DIMENSIONS),
        "critiques": [
            {
                "segment_index": c.segment_index,
                "notes": c.dimension_notes,
                "evidence": {
                    d: [{"time_s": t, "metric": m, "value": v} for t, m, v in ev]
                    for d, ev in c.evidence.items()
                },
            }
            for c in doc.critiques
        ],
    }


def summarize_external(
    doc: DiagnosticDocument,
    endpoint: str,
    timeout_s: float = 10.0,
    retries: int = SUMMARIZER_RETRIES,
    backoff_s: float = SUMMARIZER_BACKOFF_S,
) -> SummaryResult:
    """POST the document to the summarizer; fall back to the plain
    concatenation (degraded mode) after exhausting retries."""
    envelope = build_summary_request(doc)
    delay = backoff_s
    for attempt in range(retries):
        try:
            resp = httpx.post(endpoint, json=envelope, timeout=timeout_s)
            if resp.status_code == 200:
                body = resp.json()
                if not isinstance(body, dict) or not isinstance(body.get("summary"), str):
                    raise FeedbackError(f"malformed summarizer response: {body!r}")
                return SummaryResult(text=body["summary"], degraded=False)
        except FeedbackError:
            raise
        except Exception:
            pass
        if attempt < retries - 1:
            time.sleep(delay)
            delay *= 2
    return SummaryResult(text=doc.plain_text(), degraded=True)
