"""Per-dimension hybrid model registry and full-song inference.

Each scored dimension keeps its own best (encoder, head) pair, selected
by tiered-ranking benchmark score on a validation set. Inference windows
the whole song by default; the clip30 mode scores 30 s segments
independently and averages distributions, kept only to demonstrate the
instability of clip-based scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..audio import AudioClip, segment_clips
from ..features import mel_features, window_features
from .. import htpr
from .encoder import EmbeddingSequence, MelProjParams, encode_windows
from .heads import HeadConfig, TrainedHead, head_forward, predict_score

DIMENSIONS = ("breath", "timbre", "emotion", "technique")
CLIP30_SEGMENT_S = 30.0
_KIND_ORDER = {"mlp": 0, "rnn": 1, "transformer": 2}


class RegistryError(Exception):
    pass


@dataclass(frozen=True)
class DimensionModel:
    encoder_id: str
    encoder_params: MelProjParams
    head: TrainedHead
    benchmark_score: float | None = None


@dataclass
class DimensionRegistry:
    models: dict[str, DimensionModel]
    n_mels: int = 80
    window_s: float = 3.0
    stride_s: float = 1.5

    def __post_init__(self):
        missing = [d for d in DIMENSIONS if d not in self.models]
        if missing:
            raise RegistryError(f"registry missing dimensions: {missing}")


@dataclass(frozen=True)
class DimensionScores:
    clip_id: str
    distributions: dict[str, np.ndarray]
    expected: dict[str, float]
    argmax: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "distributions": {d: list(map(float, p)) for d, p in self.distributions.items()},
            "expected": self.expected,
            "argmax": self.argmax,
        }


def _score_embeddings(seq: EmbeddingSequence, registry: DimensionRegistry, clip_id: str) -> DimensionScores:
    dists, exps, args = {}, {}, {}
    for dim, model in registry.models.items():
        p = head_forward(seq, model.head)
        e, a = predict_score(p)
        dists[dim], exps[dim], args[dim] = p, e, a
    return DimensionScores(clip_id=clip_id, distributions=dists, expected=exps, argmax=args)


def _embed_clip(clip: AudioClip, registry: DimensionRegistry, model: DimensionModel) -> EmbeddingSequence:
    mel = mel_features(clip, registry.n_mels)
    windows = window_features(mel, registry.window_s, registry.stride_s)
    return encode_windows(windows, model.encoder_id, model.encoder_params, clip.id)


def _dists_from_clip(clip: AudioClip, registry: DimensionRegistry) -> dict[str, np.ndarray]:
    out = {}
    cache: dict[int, EmbeddingSequence] = {}
    for dim, model in registry.models.items():
        key = id(model.encoder_params)
        if key not in cache:
            cache[key] = _embed_clip(clip, registry, model)
        out[dim] = head_forward(cache[key], model.head)
    return out


def infer_segments(clip: AudioClip, registry: DimensionRegistry) -> list[DimensionScores]:
    """Independent scores for each 30 s segment of a clip."""
    scores = []
    for segment in segment_clips(clip, CLIP30_SEGMENT_S):
        dists = _dists_from_clip(segment, registry)
        exps = {d: predict_score(p)[0] for d, p in dists.items()}
        args = {d: predict_score(p)[1] for d, p in dists.items()}
        scores.append(
            DimensionScores(clip_id=segment.id, distributions=dists, expected=exps, argmax=args)
        )
    return scores


def infer_song(clip: AudioClip, registry: DimensionRegistry, mode: str = "fullsong") -> DimensionScores:
    """Score a full song across the four dimensions.

    fullsong windows the entire clip once; clip30 averages per-segment
    distributions (baseline reproduction, not for production use).
    """
    if mode == "fullsong":
        dists = _dists_from_clip(clip, registry)
    elif mode == "clip30":
        per_segment = infer_segments(clip, registry)
        dists = {
            d: np.mean([s.distributions[d] for s in per_segment], axis=0) for d in registry.models
        }
    else:
        raise RegistryError(f"unknown inference mode {mode!r}")
    exps = {d: predict_score(p)[0] for d, p in dists.items()}
    args = {d: predict_score(p)[1] for d, p in dists.items()}
    return DimensionScores(clip_id=clip.id, distributions=dists, expected=exps, argmax=args)


def evaluate_candidate(
    head: TrainedHead,
    validation: list[EmbeddingSequence],
    judge,
    n_triplets: int = 50,
    seed: int = 0,
) -> float:
    """Tiered-ranking benchmark score of one head on validation embeddings.

    judge(high_id, medium_id, low_id) -> bool answers whether the ranking
    is perceptually consistent.
    """
    if not validation:
        raise RegistryError("empty validation set")
    keys = {}
    for seq in validation:
        expected, _ = predict_score(head_forward(seq, head))
        keys[seq.clip_id] = expected
    tiers = htpr.assign_tiers(keys)
    triplets = htpr.sample_triplets(tiers, n_triplets, seed)
    consistent = sum(bool(judge(t.high_clip, t.medium_clip, t.low_clip)) for t in triplets)
    return consistent / len(triplets)


def build_registry(
    candidates: dict[str, list[tuple[str, MelProjParams, TrainedHead]]],
    validation_by_encoder: dict[str, list[EmbeddingSequence]],
    judge,
    n_triplets: int = 50,
    seed: int = 0,
    n_mels: int = 80,
    window_s: float = 3.0,
    stride_s: float = 1.5,
) -> DimensionRegistry:
    """Pick the best (encoder, head) per dimension by benchmark score.

    Ties break mlp < rnn < transformer, then encoder id ascending.
    validation_by_encoder holds the validation clips embedded once per
    candidate encoder id.
    """
    models = {}
    for dim in DIMENSIONS:
        entries = candidates.get(dim) or []
        if not entries:
            raise RegistryError(f"no candidates for dimension {dim!r}")
        scored = []
        for encoder_id, enc_params, head in entries:
            validation = validation_by_encoder[encoder_id]
            score = evaluate_candidate(head, validation, judge, n_triplets, seed)
            scored.append((score, _KIND_ORDER[head.config.kind], encoder_id, enc_params, head))
        scored.sort(key=lambda e: (-e[0], e[1], e[2]))
        best = scored[0]
        models[dim] = DimensionModel(
            encoder_id=best[2], encoder_params=best[3], head=best[4], benchmark_score=best[0]
        )
    return DimensionRegistry(models=models, n_mels=n_mels, window_s=window_s, stride_s=stride_s)
