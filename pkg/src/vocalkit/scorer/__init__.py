"""Reference-free multi-dimensional full-song scoring.

Pluggable window encoders, three downstream heads (mean-pool MLP,
gated recurrent, self-attention), a deterministic training loop with
gradient checking, and the per-dimension hybrid registry.
"""

from .params import ParamLayout
from .encoder import (
    EmbeddingSequence,
    MelProjParams,
    encode_windows,
    make_encoder_params,
    registered_encoders,
)
from .heads import HeadConfig, TrainedHead, head_forward, init_params, predict_score
from .train import OptimizerConfig, TrainError, grad_check, train_head
from .registry import (
    DIMENSIONS,
    DimensionRegistry,
    DimensionScores,
    build_registry,
    infer_segments,
    infer_song,
)
from .modelio import load_registry, save_registry

__all__ = [
    "ParamLayout",
    "EmbeddingSequence",
    "MelProjParams",
    "encode_windows",
    "make_encoder_params",
    "registered_encoders",
    "HeadConfig",
    "TrainedHead",
    "head_forward",
    "init_params",
    "predict_score",
    "OptimizerConfig",
    "TrainError",
    "grad_check",
    "train_head",
    "DIMENSIONS",
    "DimensionRegistry",
    "DimensionScores",
    "build_registry",
    "infer_segments",
    "infer_song",
    "load_registry",
    "save_registry",
]
