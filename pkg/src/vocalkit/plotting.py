"""Figure rendering for reference-based score reports.

Each report gets a three-panel figure (pitch contours with deviation
annotations, onset timing, score summary with the timbre badge) saved
next to the delimited CLI output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .features import OnsetSequence, PitchContour
from .rulesignal import RuleSignalReport

USER_COLOR = "#8e44ad"  # user take
REF_COLOR = "#2e6da4"  # original track


def _plot_contour(ax, contour: PitchContour, color: str, label: str) -> None:
    cents = np.where(contour.voiced, contour.f0_cents, np.nan)
    ax.plot(contour.frame_times_s, cents / 100.0, color=color, lw=1.0, label=label)


def render_report_figure(
    report: RuleSignalReport,
    user_contour: PitchContour,
    ref_contour: PitchContour,
    user_onsets: OnsetSequence,
    ref_onsets: OnsetSequence,
    out_path: str | Path,
) -> Path:
    fig, (ax_pitch, ax_rhythm, ax_scores) = plt.subplots(
        3, 1, figsize=(10, 8), gridspec_kw={"height_ratios": [3, 1.5, 1]}
    )

    _plot_contour(ax_pitch, ref_contour, REF_COLOR, "original")
    _plot_contour(ax_pitch, user_contour, USER_COLOR, "user")
    for time_s, _dev, label in report.pitch_annotations:
        ax_pitch.annotate(
            label,
            xy=(time_s, np.nanmin(np.where(user_contour.voiced, user_contour.f0_cents, np.nan)) / 100.0),
            fontsize=8,
            color=USER_COLOR,
        )
    ax_pitch.set_ylabel("pitch (semitones, MIDI)")
    ax_pitch.set_title(f"pitch accuracy {report.pitch_score:.1f}")
    ax_pitch.legend(loc="upper right", fontsize=8)

    ax_rhythm.vlines(ref_onsets.onset_times_s, 0.55, 1.0, color=REF_COLOR, label="original")
    ax_rhythm.vlines(user_onsets.onset_times_s, 0.0, 0.45, color=USER_COLOR, label="user")
    for time_s, _off, label in report.rhythm_annotations:
        ax_rhythm.annotate(label, xy=(time_s, 0.48), fontsize=8, color=USER_COLOR)
    ax_rhythm.set_yticks([])
    ax_rhythm.set_xlabel("time (s)")
    ax_rhythm.set_title(f"rhythm accuracy {report.rhythm_score:.1f}")
    ax_rhythm.legend(loc="upper right", fontsize=8)

    names = ["pitch", "rhythm", "timbre", "combined"]
    values = [report.pitch_score, report.rhythm_score, report.timbre_score, report.combined]
    ax_scores.barh(names, values, color=[USER_COLOR, USER_COLOR, USER_COLOR, "#444444"])
    ax_scores.set_xlim(0, 100)
    ax_scores.set_title(f"timbre badge: {report.timbre_badge}")

    fig.suptitle(f"{report.clip_id} (transposition {report.transposition_offset_cents:+.0f} cents)")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
