"""Checkpoint persistence: framed binary parameters plus a JSON sidecar.

The binary file holds four consecutive matrix frames (video weight,
video bias, text weight, text bias); the sidecar, written next to it
with a ``.json`` suffix, stores the flattened training config and the
per-epoch history. Nothing time-dependent is written, so identical runs
produce byte-identical checkpoints.
"""

from __future__ import annotations

import json
from pathlib import Path

from .exceptions import RelevancyParseError
from .matrix_io import read_matrix_frame, write_matrix_frame
from .train import EncoderParams, TrainConfig, train_config_from_dict, train_config_to_dict

_FRAME_ORDER = ("video_weight", "video_bias", "text_weight", "text_bias")


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(
    path,
    params: EncoderParams,
    cfg: TrainConfig,
    history=(),
) -> Path:
    """Write parameters and metadata; returns the sidecar path."""
    path = Path(path)
    with open(path, "wb") as fh:
        write_matrix_frame(fh, params.video_weight)
        write_matrix_frame(fh, params.video_bias.reshape(1, -1))
        write_matrix_frame(fh, params.text_weight)
        write_matrix_frame(fh, params.text_bias.reshape(1, -1))
    meta = {
        "config": train_config_to_dict(cfg),
        "history": [h.to_dict() if hasattr(h, "to_dict") else h for h in history],
    }
    side = sidecar_path(path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return side


def load_checkpoint(path) -> tuple[EncoderParams, TrainConfig, list]:
    """Read parameters, config, and history back from disk."""
    path = Path(path)
    frames = {}
    with open(path, "rb") as fh:
        for name in _FRAME_ORDER:
            frames[name] = read_matrix_frame(fh)
        if fh.read(1):
            raise RelevancyParseError(f"{path} contains data past the last frame")
    params = EncoderParams(
        video_weight=frames["video_weight"],
        video_bias=frames["video_bias"].reshape(-1),
        text_weight=frames["text_weight"],
        text_bias=frames["text_bias"].reshape(-1),
    )
    meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    cfg = train_config_from_dict(meta["config"])
    return params, cfg, meta.get("history", [])
