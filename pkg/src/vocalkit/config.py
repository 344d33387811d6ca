"""Nested key-value configuration (YAML) with documented defaults.

Every key below can be overridden from a config file passed to the CLI
via ``--config``; unknown keys are rejected to catch typos.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

DEFAULTS: dict = {
    "audio": {
        "target_rate_hz": 16000,
        "silence_floor_db": -50.0,
    },
    "features": {
        "fmin_hz": 65.0,
        "fmax_hz": 1100.0,
        "n_mels": 80,
        "window_s": 3.0,
        "stride_s": 1.5,
    },
    "rulesignal": {
        "rhythm_tol_s": 0.25,
        "weight_pitch": 0.5,
        "weight_rhythm": 0.3,
        "weight_timbre": 0.2,
        "band_frames": None,
        "render_figures": True,
    },
    "scorer": {
        "embedding_dim": 64,
        "hidden_dim": 128,
        "layers": 2,
        "learning_rate": 1e-4,
        "weight_decay": 0.01,
        "batch_size": 16,
        "max_epochs": 500,
        "patience": 10,
        "val_fraction": 0.15,
    },
    "htpr": {
        "n_triplets": 50,
    },
    "feedback": {
        "segment_s": 30.0,
        "summarizer_endpoint": None,
        "critic_id": "rule-based",
    },
}


class ConfigError(Exception):
    pass


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path} must be a mapping")
            out[key] = _merge(base[key], value, path + ".")
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults, optionally overlaid with a YAML file."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _merge(DEFAULTS, data)
