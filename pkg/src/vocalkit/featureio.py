"""Feature cache files: one record per clip.

Binary container (little-endian):
    magic  b"VKFC"
    u16    format version (currently 1)
    u32    header length
    bytes  UTF-8 JSON header with clip id, hop, and array shapes
    bytes  float64 arrays: frame_times, f0_cents, voiced (as 0/1),
           onset_times, mel frames — concatenated in that order

A ``.json`` path suffix switches to a plain-JSON debug encoding.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .features import MelMatrix, OnsetSequence, PitchContour

MAGIC = b"VKFC"
VERSION = 1


class FeatureCacheError(Exception):
    pass


def save_features(
    path: str | Path,
    clip_id: str,
    contour: PitchContour,
    onsets: OnsetSequence,
    mel: MelMatrix,
) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(
            json.dumps(
                {
                    "clip_id": clip_id,
                    "hop_s": contour.hop_s,
                    "frame_times_s": contour.frame_times_s.tolist(),
                    "f0_cents": contour.f0_cents.tolist(),
                    "voiced": contour.voiced.astype(int).tolist(),
                    "onset_times_s": np.asarray(onsets.onset_times_s).tolist(),
                    "n_mels": mel.n_mels,
                    "mel_hop_s": mel.hop_s,
                    "mel": mel.frames.tolist(),
                }
            )
        )
        return
    arrays = [
        contour.frame_times_s.astype("<f8"),
        contour.f0_cents.astype("<f8"),
        contour.voiced.astype("<f8"),
        np.asarray(onsets.onset_times_s, dtype="<f8"),
        mel.frames.astype("<f8").ravel(),
    ]
    header = json.dumps(
        {
            "clip_id": clip_id,
            "hop_s": contour.hop_s,
            "n_frames": len(contour.f0_cents),
            "n_onsets": len(onsets.onset_times_s),
            "mel_shape": list(mel.frames.shape),
            "n_mels": mel.n_mels,
            "mel_hop_s": mel.hop_s,
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header)))
        fh.write(header)
        fh.write(np.concatenate(arrays).tobytes())


def load_features(path: str | Path) -> tuple[str, PitchContour, OnsetSequence, MelMatrix]:
    path = Path(path)
    if path.suffix == ".json":
        obj = json.loads(path.read_text())
        contour = PitchContour(
            frame_times_s=np.asarray(obj["frame_times_s"]),
            f0_cents=np.asarray(obj["f0_cents"]),
            voiced=np.asarray(obj["voiced"], dtype=bool),
            hop_s=obj["hop_s"],
        )
        onsets = OnsetSequence(onset_times_s=np.asarray(obj["onset_times_s"]))
        mel = MelMatrix(frames=np.asarray(obj["mel"]), n_mels=obj["n_mels"], hop_s=obj["mel_hop_s"])
        return obj["clip_id"], contour, onsets, mel

    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise FeatureCacheError(f"{path}: bad magic")
    version, header_len = struct.unpack("<HI", raw[4:10])
    if version != VERSION:
        raise FeatureCacheError(f"{path}: unsupported version {version}")
    header = json.loads(raw[10 : 10 + header_len].decode("utf-8"))
    payload = np.frombuffer(raw[10 + header_len :], dtype="<f8")
    n = header["n_frames"]
    n_on = header["n_onsets"]
    mel_shape = tuple(header["mel_shape"])
    cursor = 0
    times = payload[cursor : cursor + n].copy(); cursor += n
    cents = payload[cursor : cursor + n].copy(); cursor += n
    voiced = payload[cursor : cursor + n].astype(bool); cursor += n
    onset_times = payload[cursor : cursor + n_on].copy(); cursor += n_on
    mel_frames = payload[cursor : cursor + mel_shape[0] * mel_shape[1]].reshape(mel_shape).copy()
    cursor += mel_shape[0] * mel_shape[1]
    if cursor != payload.size:
        raise FeatureCacheError(f"{path}: payload size mismatch")
    contour = PitchContour(frame_times_s=times, f0_cents=cents, voiced=voiced, hop_s=header["hop_s"])
    return (
        header["clip_id"],
        contour,
        OnsetSequence(onset_times_s=onset_times),
        MelMatrix(frames=mel_frames, n_mels=header["n_mels"], hop_s=header["mel_hop_s"]),
    )
