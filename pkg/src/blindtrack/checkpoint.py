"""Binary checkpoint container.

Layout: an 8-byte magic, an 8-byte little-endian header length, a
canonical-JSON header, then each array as raw little-endian float64 in the
order the header lists them. No timestamps or other ambient state, so the
same model bytes always produce the same file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import HashMismatch, SchemaError
from .nn import Adam
from .pipeline import ModelConfig, TrainConfig

MAGIC = b"BTCKPT01"

ADAM_M = "adam.m:"
ADAM_V = "adam.v:"


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(
    path,
    model,
    optimizer: Adam,
    tcfg: TrainConfig,
    config_hash: str = "",
    epoch: int = -1,
    best_val_sum: float | None = None,
) -> None:
    named = list(model.named_parameters())
    if len(optimizer.params) != len(named) or any(
        opt_p is not p for opt_p, (_, p) in zip(optimizer.params, named)
    ):
        raise ValueError("optimizer does not track exactly the model parameters, in order")
    arrays: list[tuple[str, np.ndarray]] = [(name, p.data) for name, p in named]
    arrays += [(ADAM_M + name, m) for (name, _), m in zip(named, optimizer.m)]
    arrays += [(ADAM_V + name, v) for (name, _), v in zip(named, optimizer.v)]
    header = {
        "kind": model.name,
        "model": asdict(model.cfg),
        "train": asdict(tcfg),
        "config_hash": config_hash,
        "epoch": int(epoch),
        "best_val_sum": best_val_sum,
        "adam": {
            "t": optimizer.t,
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
        },
        "arrays": [{"name": n, "rows": a.shape[0], "cols": a.shape[1]} for n, a in arrays],
    }
    blob = _canonical(header)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (header, arrays by name)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise SchemaError(f"{path}: not a checkpoint (magic {magic!r})", field="magic")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len))
        arrays = {}
        for entry in header["arrays"]:
            rows, cols = entry["rows"], entry["cols"]
            raw = fh.read(rows * cols * 8)
            if len(raw) != rows * cols * 8:
                raise SchemaError(f"{path}: truncated array {entry['name']!r}", field="arrays")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()
        if fh.read(1):
            raise SchemaError(f"{path}: trailing bytes after arrays", field="arrays")
    return header, arrays


def model_config_from_header(header: dict) -> ModelConfig:
    fields = dict(header["model"])
    return ModelConfig(**fields)


def train_config_from_header(header: dict) -> TrainConfig:
    return TrainConfig(**header["train"])


def restore_model(model, header: dict, arrays: dict[str, np.ndarray]) -> Adam:
    """Copy parameters into a freshly built model and rebuild its
    optimizer, including moment estimates and step count."""
    optimizer = Adam(
        model.parameters(),
        lr=header["adam"]["lr"],
        betas=(header["adam"]["beta1"], header["adam"]["beta2"]),
        eps=header["adam"]["eps"],
    )
    optimizer.t = header["adam"]["t"]
    for i, (name, p) in enumerate(model.named_parameters()):
        for key, dest in ((name, p.data), (ADAM_M + name, optimizer.m[i]), (ADAM_V + name, optimizer.v[i])):
            if key not in arrays:
                raise SchemaError(f"checkpoint missing array {key!r}", field=key)
            if arrays[key].shape != dest.shape:
                raise SchemaError(
                    f"array {key!r} has shape {arrays[key].shape}, model needs {dest.shape}",
                    field=key,
                )
            dest[...] = arrays[key]
    return optimizer


def require_hash(header: dict, expected: str, what: str) -> None:
    if expected and header.get("config_hash") and header["config_hash"] != expected:
        raise HashMismatch(
            f"{what}: checkpoint built for config {header['config_hash'][:12]}, "
            f"got {expected[:12]}"
        )
