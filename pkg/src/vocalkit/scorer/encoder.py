"""Pluggable window encoders.

The default "mel-proj" encoder summarizes each mel window with per-bin
mean, std, and delta-mean statistics (3 * n_mels values) and applies one
trainable affine map plus tanh. Heavier pre-trained encoders can be
registered under their own ids without touching downstream code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..features import FeatureWindows

# fixed normalization of the raw window statistics before the affine map;
# log-mel energies live in roughly [-23, 0]
_MEAN_CENTER, _MEAN_SCALE = -11.5, 11.5
_STD_CENTER, _STD_SCALE = 4.0, 4.0
_DELTA_SCALE = 2.0


class EncoderError(Exception):
    pass


@dataclass(frozen=True)
class EmbeddingSequence:
    embeddings: np.ndarray  # (n_windows, dim)
    dim: int
    clip_id: str

    def __post_init__(self):
        if self.embeddings.ndim != 2 or self.embeddings.shape[1] != self.dim:
            raise EncoderError("embeddings must be (n_windows, dim)")
        if not np.all(np.isfinite(self.embeddings)):
            raise EncoderError("non-finite embeddings")


@dataclass(frozen=True)
class MelProjParams:
    weight: np.ndarray  # (dim, 3 * n_mels)
    bias: np.ndarray  # (dim,)


def make_encoder_params(encoder_id: str, n_mels: int, dim: int, seed: int) -> MelProjParams:
    if encoder_id not in _ENCODERS:
        raise EncoderError(f"unknown encoder id {encoder_id!r}")
    rng = np.random.default_rng(seed)
    stats_dim = 3 * n_mels
    weight = rng.normal(0.0, 1.0 / math.sqrt(stats_dim), (dim, stats_dim))
    return MelProjParams(weight=weight, bias=np.zeros(dim))


def _window_stats(matrix: np.ndarray) -> np.ndarray:
    mean = (matrix.mean(axis=0) - _MEAN_CENTER) / _MEAN_SCALE
    std = (matrix.std(axis=0) - _STD_CENTER) / _STD_SCALE
    if matrix.shape[0] > 1:
        delta = np.diff(matrix, axis=0).mean(axis=0) / _DELTA_SCALE
    else:
        delta = np.zeros(matrix.shape[1])
    return np.concatenate([mean, std, delta])


def _encode_mel_proj(windows: FeatureWindows, params: MelProjParams, clip_id: str) -> EmbeddingSequence:
    stats = np.stack([_window_stats(mat) for _, mat in windows.windows])
    if stats.shape[1] != params.weight.shape[1]:
        raise EncoderError(
            f"encoder expects {params.weight.shape[1] // 3} mel bins, got {windows.n_mels}"
        )
    emb = np.tanh(stats @ params.weight.T + params.bias)
    return EmbeddingSequence(embeddings=emb, dim=params.weight.shape[0], clip_id=clip_id)


_ENCODERS = {"mel-proj": _encode_mel_proj}


def registered_encoders() -> list[str]:
    return sorted(_ENCODERS)


def register_encoder(encoder_id: str, encode_fn) -> None:
    _ENCODERS[encoder_id] = encode_fn


def encode_windows(
    windows: FeatureWindows,
    encoder_id: str,
    encoder_params,
    clip_id: str = "",
) -> EmbeddingSequence:
    """One embedding per window, order preserved."""
    if encoder_id not in _ENCODERS:
        raise EncoderError(f"unknown encoder id {encoder_id!r}")
    return _ENCODERS[encoder_id](windows, encoder_params, clip_id)
