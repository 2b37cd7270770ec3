"""Checkpoints: ``model.json`` (tensor name -> shape, dtype, byte offset) plus ``model.bin``.

The blob holds every tensor back to back as row-major little-endian IEEE-754.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .model import IDCLRec

FORMAT = "idclrec-checkpoint/1"
_NP_DTYPES = {"float32": "<f4", "float64": "<f8"}


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: IDCLRec, config: TrainConfig, directory: str | Path, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tensors = {}
    chunks = []
    offset = 0
    for name, t in model.state_dict().items():
        dtype = str(t.dtype).removeprefix("torch.")
        raw = t.detach().cpu().numpy().astype(_NP_DTYPES[dtype], copy=False).tobytes(order="C")
        tensors[name] = {"shape": list(t.shape), "dtype": dtype, "offset": offset, "nbytes": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format": FORMAT,
        "num_items": model.num_items,
        "config": config.to_dict(),
        "tensors": tensors,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "extra": extra or {},
    }
    (d / "model.bin").write_bytes(blob)
    (d / "model.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return d


def load_checkpoint(directory: str | Path, num_items: int | None = None) -> tuple[IDCLRec, TrainConfig, dict]:
    """Rebuild the model; shapes are validated against the stored config and ``num_items``."""
    d = Path(directory)
    try:
        manifest = json.loads((d / "model.json").read_text())
        blob = (d / "model.bin").read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{d}: unreadable checkpoint ({exc})") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{d}: unknown checkpoint format {manifest.get('format')!r}")
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise CheckpointError(f"{d}: blob checksum mismatch (corrupted checkpoint)")
    config = TrainConfig.from_dict(manifest["config"])
    n_items = manifest["num_items"]
    if num_items is not None and num_items != n_items:
        raise CheckpointError(f"{d}: checkpoint has {n_items} items, dataset has {num_items}")
    model = IDCLRec.from_config(config, n_items, seed=0)
    expected = model.state_dict()
    if set(expected) != set(manifest["tensors"]):
        raise CheckpointError(f"{d}: tensor names do not match the model built from its config")
    state = {}
    for name, meta in manifest["tensors"].items():
        if list(expected[name].shape) != meta["shape"]:
            raise CheckpointError(f"{d}: {name} has shape {meta['shape']}, config implies {list(expected[name].shape)}")
        raw = blob[meta["offset"]:meta["offset"] + meta["nbytes"]]
        arr = np.frombuffer(raw, dtype=_NP_DTYPES[meta["dtype"]]).reshape(meta["shape"])
        state[name] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))
    model.load_state_dict(state)
    return model, config, manifest.get("extra", {})
