"""Versioned binary container for trained registries.

Layout (little-endian):
    magic  b"VKRG"
    u16    format version (currently 1)
    u32    header length in bytes
    bytes  UTF-8 JSON header: registry geometry, per-dimension encoder id,
           head config, train_meta, and the element count of each payload
           array in order
    bytes  float64 payload arrays, concatenated in header order

A JSON sidecar (<path>.meta.json) duplicates the train_meta for
human inspection.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoder import MelProjParams
from .heads import HeadConfig, TrainedHead
from .registry import DimensionModel, DimensionRegistry

MAGIC = b"VKRG"
VERSION = 1


class ModelIOError(Exception):
    pass


def save_registry(path: str | Path, registry: DimensionRegistry) -> None:
    path = Path(path)
    arrays: list[np.ndarray] = []
    dims = []
    for dim, model in registry.models.items():
        entry = {
            "dimension": dim,
            "encoder_id": model.encoder_id,
            "head_config": asdict(model.head.config),
            "train_meta": model.head.train_meta,
            "benchmark_score": model.benchmark_score,
            "encoder_weight_shape": list(model.encoder_params.weight.shape),
            "sizes": [
                model.encoder_params.weight.size,
                model.encoder_params.bias.size,
                model.head.parameters.size,
            ],
        }
        arrays += [
            model.encoder_params.weight.ravel(),
            model.encoder_params.bias.ravel(),
            model.head.parameters.ravel(),
        ]
        dims.append(entry)
    header = json.dumps(
        {
            "dimensions": dims,
            "n_mels": registry.n_mels,
            "window_s": registry.window_s,
            "stride_s": registry.stride_s,
        }
    ).encode("utf-8")
    payload = np.concatenate(arrays).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    sidecar = {e["dimension"]: e["train_meta"] for e in dims}
    Path(str(path) + ".meta.json").write_text(json.dumps(sidecar, indent=2))


def load_registry(path: str | Path) -> DimensionRegistry:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ModelIOError(f"{path}: bad magic")
    version, header_len = struct.unpack("<HI", raw[4:10])
    if version != VERSION:
        raise ModelIOError(f"{path}: unsupported version {version}")
    header = json.loads(raw[10 : 10 + header_len].decode("utf-8"))
    payload = np.frombuffer(raw[10 + header_len :], dtype="<f8")
    models = {}
    cursor = 0
    for entry in header["dimensions"]:
        w_size, b_size, p_size = entry["sizes"]
        weight = payload[cursor : cursor + w_size].reshape(entry["encoder_weight_shape"]).copy()
        cursor += w_size
        bias = payload[cursor : cursor + b_size].copy()
        cursor += b_size
        params = payload[cursor : cursor + p_size].copy()
        cursor += p_size
        head = TrainedHead(
            config=HeadConfig(**entry["head_config"]),
            parameters=params,
            train_meta=entry["train_meta"],
        )
        models[entry["dimension"]] = DimensionModel(
            encoder_id=entry["encoder_id"],
            encoder_params=MelProjParams(weight=weight, bias=bias),
            head=head,
            benchmark_score=entry["benchmark_score"],
        )
    if cursor != payload.size:
        raise ModelIOError(f"{path}: payload size mismatch")
    return DimensionRegistry(
        models=models,
        n_mels=header["n_mels"],
        window_s=header["window_s"],
        stride_s=header["stride_s"],
    )
