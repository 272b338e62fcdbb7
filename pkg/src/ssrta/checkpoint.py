"""Single-file model checkpoints: JSON header plus raw float32 payloads."""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .model import ModelConfig, ModelError, SSRTA
from .vocab import Vocabulary

_MAGIC = b"SSRT"
FORMAT_VERSION = 1


def save_checkpoint(
    model: SSRTA,
    path: str | Path,
    vocab: Vocabulary,
    expert_names: list[str],
    metadata: dict | None = None,
) -> None:
    """Write config, shape manifest, vocab/expert tables, then tensor bytes.

    Payloads are little-endian float32 in manifest order; training may run at
    float64 but checkpoints are fixed at 32 bits.
    """
    manifest = [
        {"name": name, "shape": list(param.shape)}
        for name, param in model.named_parameters()
    ]
    header = {
        "format_version": FORMAT_VERSION,
        "config": dataclasses.asdict(model.config),
        "manifest": manifest,
        "vocab": list(vocab.index_to_token),
        "experts": list(expert_names),
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for name, param in model.named_parameters():
            data = param.detach().numpy().astype("<f4", copy=False)
            fh.write(np.ascontiguousarray(data).tobytes())


def load_checkpoint(path: str | Path) -> tuple[SSRTA, Vocabulary, list[str], dict]:
    """Rebuild the model, validating every payload shape against the manifest."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ModelError(f"{path}: not a checkpoint file")
    (header_len,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint format version")

    config = ModelConfig(**header["config"])
    model = SSRTA(config)
    expected = {name: tuple(param.shape) for name, param in model.named_parameters()}

    offset = 8 + header_len
    state = {}
    for entry in header["manifest"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if expected.get(name) != shape:
            raise ModelError(
                f"{path}: manifest shape {shape} for '{name}' does not match "
                f"the configured model ({expected.get(name)})"
            )
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise ModelError(f"{path}: truncated payload for '{name}'")
        array = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(array.copy()).to(torch.float64)
        offset = end
    if set(state) != set(expected):
        raise ModelError(f"{path}: manifest does not cover every parameter")
    if offset != len(raw):
        raise ModelError(f"{path}: trailing bytes after the last payload")

    model.load_state_dict(state)
    model.audit_shapes()
    vocab = Vocabulary(index_to_token=tuple(header["vocab"]))
    return model, vocab, list(header["experts"]), header.get("metadata", {})
