"""Per-segment critic, critique aggregation, and summarizer client."""

import numpy as np
import pytest

from vocalkit.audio import AudioClip
from vocalkit.feedback import (
    ClipCritique,
    DIMENSIONS,
    FeedbackError,
    INSUFFICIENT_NOTE,
    aggregate_critiques,
    build_summary_request,
    critique_clip,
    summarize_external,
)
from vocalkit.features import detect_onsets, extract_f0, mel_features

import synthutil

SR = synthutil.SR


def features_for(clip):
    return extract_f0(clip), detect_onsets(clip), mel_features(clip)


def critique_of(clip, segment_index=0):
    return critique_clip(clip, features_for(clip), segment_index=segment_index)


class TestRuleBasedCritic:
    def test_steady_tone_stable_technique(self):
        clip = synthutil.render_take([57, 57, 57, 57], clip_id="steady", seed=0)
        critique = critique_of(clip)
        assert critique.dimension_notes["technique"].startswith("stable intonation")
        metrics = [m for _, m, _ in critique.evidence["technique"]]
        assert "pitch_jitter_cents" in metrics
        assert "note_grid_error_cents" in metrics

    def test_detuned_notes_unstable_technique(self):
        melody = synthutil.random_melody(20, 0)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            detune = rng.normal(0.0, 150.0, len(melody)).tolist()
            clip = synthutil.render_take(
                melody, detune_cents=detune, clip_id=f"detuned{seed}", seed=seed
            )
            critique = critique_of(clip)
            assert critique.dimension_notes["technique"].startswith("unstable intonation"), seed

    def test_silent_segment_insufficient(self):
        clip = AudioClip(samples=np.zeros(5 * SR), sample_rate_hz=SR, id="silent")
        critique = critique_of(clip)
        for dim in DIMENSIONS:
            assert critique.dimension_notes[dim] == INSUFFICIENT_NOTE
            assert critique.evidence[dim]

    def test_every_note_has_evidence(self):
        clip = synthutil.render_take(synthutil.random_melody(10, 3), clip_id="ev", seed=3)
        critique = critique_of(clip)
        for dim, note in critique.dimension_notes.items():
            assert note
            assert len(critique.evidence[dim]) >= 1

    def test_deterministic(self):
        clip = synthutil.render_take([60, 64, 67], clip_id="det", seed=5)
        a = critique_of(clip)
        b = critique_of(clip)
        assert a.dimension_notes == b.dimension_notes
        assert a.evidence == b.evidence

    def test_overlong_segment_rejected(self):
        clip = AudioClip(samples=np.zeros(40 * SR), sample_rate_hz=SR, id="long")
        with pytest.raises(FeedbackError):
            critique_clip(clip, (None, None, None))

    def test_unknown_critic_rejected(self):
        clip = synthutil.render_take([60], clip_id="x", seed=0)
        with pytest.raises(FeedbackError):
            critique_clip(clip, features_for(clip), critic_id="mllm-v2")


def critique_stub(clip_id, idx, notes):
    return ClipCritique(
        clip_id=clip_id,
        segment_index=idx,
        dimension_notes=dict(notes),
        evidence={d: [(0.0, "stub", 0.0)] for d in notes},
    )


class TestAggregateCritiques:
    def test_single_critique(self):
        doc = aggregate_critiques([critique_stub("song_000", 0, {"breath": "fine"})])
        assert doc.clip_id == "song"
        assert len(doc.critiques) == 1
        assert doc.summary is None

    def test_repeated_note_merged_with_range(self):
        critiques = [
            critique_stub("song_%03d" % i, i, {"breath": "audible breaths between phrases"})
            for i in range(4)
        ]
        doc = aggregate_critiques(critiques)
        notes = [c.dimension_notes.get("breath") for c in doc.critiques]
        assert notes[0] == "audible breaths between phrases (throughout 0-120 s)"
        assert notes[1:] == [None, None, None]

    def test_two_repeats_not_merged(self):
        critiques = [
            critique_stub("song_%03d" % i, i, {"timbre": "thin tone"}) for i in range(2)
        ]
        doc = aggregate_critiques(critiques)
        assert [c.dimension_notes["timbre"] for c in doc.critiques] == ["thin tone"] * 2

    def test_gap_in_indices_rejected(self):
        critiques = [critique_stub("song_%03d" % i, i, {"breath": "x"}) for i in (0, 1, 3)]
        with pytest.raises(FeedbackError):
            aggregate_critiques(critiques)

    def test_mixed_clip_ids_rejected(self):
        with pytest.raises(FeedbackError):
            aggregate_critiques(
                [critique_stub("a_000", 0, {"breath": "x"}),
                 critique_stub("b_001", 1, {"breath": "x"})]
            )

    def test_out_of_order_input_sorted(self):
        critiques = [critique_stub("song_%03d" % i, i, {"emotion": f"n{i}"}) for i in (2, 0, 1)]
        doc = aggregate_critiques(critiques)
        assert [c.segment_index for c in doc.critiques] == [0, 1, 2]


class FakeResponse:
    def __init__(self, status_code, body):
        self.status_code = status_code
        self._body = body

    def json(self):
        return self._body


class TestSummarizeExternal:
    def _doc(self, n=3):
        critiques = [
            critique_stub("song_%03d" % i, i, {"breath": f"note {i}"}) for i in range(n)
        ]
        return aggregate_critiques(critiques)

    def test_echo_server(self, monkeypatch):
        captured = {}

        def fake_post(url, json=None, timeout=None):
            captured["envelope"] = json
            return FakeResponse(200, {"summary": "work on breath support"})

        monkeypatch.setattr("vocalkit.feedback.httpx.post", fake_post)
        result = summarize_external(self._doc(), "http://summarizer/api", backoff_s=0.0)
        assert result.text == "work on breath support"
        assert not result.degraded

    def test_envelope_schema(self, monkeypatch):
        captured = {}

        def fake_post(url, json=None, timeout=None):
            captured["envelope"] = json
            return FakeResponse(200, {"summary": "ok"})

        monkeypatch.setattr("vocalkit.feedback.httpx.post", fake_post)
        doc = self._doc(3)
        summarize_external(doc, "http://summarizer/api", backoff_s=0.0)
        env = captured["envelope"]
        assert env["clip_id"] == "song"
        assert env["dimensions"] == list(DIMENSIONS)
        assert len(env["critiques"]) == 3
        for i, c in enumerate(env["critiques"]):
            assert c["segment_index"] == i
            assert isinstance(c["notes"], dict)
            for entries in c["evidence"].values():
                for e in entries:
                    assert set(e) == {"time_s", "metric", "value"}

    def test_server_error_degrades_to_plain_text(self, monkeypatch):
        calls = {"n": 0}

        def fake_post(url, json=None, timeout=None):
            calls["n"] += 1
            return FakeResponse(500, {"status": "error"})

        monkeypatch.setattr("vocalkit.feedback.httpx.post", fake_post)
        doc = self._doc()
        result = summarize_external(doc, "http://summarizer/api", backoff_s=0.0)
        assert result.degraded
        assert result.text == doc.plain_text()
        assert calls["n"] == 3
        for c in doc.critiques:
            for note in c.dimension_notes.values():
                assert note in result.text

    def test_transport_failure_degrades(self, monkeypatch):
        def fake_post(url, json=None, timeout=None):
            raise ConnectionError("down")

        monkeypatch.setattr("vocalkit.feedback.httpx.post", fake_post)
        doc = self._doc()
        result = summarize_external(doc, "http://summarizer/api", backoff_s=0.0)
        assert result.degraded and result.text == doc.plain_text()

    def test_malformed_response_raises(self, monkeypatch):
        def fake_post(url, json=None, timeout=None):
            return FakeResponse(200, {"text": "missing summary key"})

        monkeypatch.setattr("vocalkit.feedback.httpx.post", fake_post)
        with pytest.raises(FeedbackError):
            summarize_external(self._doc(), "http://summarizer/api", backoff_s=0.0)

    def test_build_summary_request_matches_doc(self):
        doc = self._doc(2)
        env = build_summary_request(doc)
        assert [c["segment_index"] for c in env["critiques"]] == [0, 1]
