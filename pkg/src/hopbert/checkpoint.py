"""Binary model checkpoints with bit-exact round trips.

Layout, all integers little endian:

    4s    magic  b"HOPB"
    u32   format version (currently 1)
    u64   meta length, then UTF-8 JSON (model config, vocab, training meta)
    u32   parameter count
    per parameter:
        u16   name length, then UTF-8 name
        u8    ndim, then ndim u64 dimension sizes
        raw   '<f8' row-major data

Parameters are written in sorted-name order; tied weights appear once under
their canonical name and are re-aliased by the builder on load.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import Model, ModelConfig, build

MAGIC = b"HOPB"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or mismatched checkpoint file."""


def save_checkpoint(path, model: Model, vocab_tokens: list[str] | None = None,
                    meta: dict | None = None) -> None:
    """Write the model, its config, and optional vocab/meta to path."""
    header = {"model_config": model.cfg.to_dict()}
    if vocab_tokens is not None:
        header["vocab"] = list(vocab_tokens)
    if meta:
        header["meta"] = meta
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    named = model.named_parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(named)))
        for name in sorted(named):
            data = np.ascontiguousarray(named[name].data, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(data.tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_checkpoint(path) -> tuple[Model, dict]:
    """Rebuild the model from path; returns (model, header dict).

    The header holds "model_config", optionally "vocab" and "meta". Raises
    CheckpointError on bad magic, unsupported version, truncation, or any
    name/shape mismatch against the rebuilt architecture.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointError("bad magic bytes: not a model checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {version}")
        (meta_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        header = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
        (n_params,) = struct.unpack("<I", _read_exact(fh, 4))
        stored: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = tuple(struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").reshape(shape)
            stored[name] = data.astype(np.float64)
        if fh.read(1):
            raise CheckpointError("trailing bytes after last parameter")

    try:
        cfg = ModelConfig.from_dict(header["model_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid model config in checkpoint: {exc}") from exc
    model = build(cfg)
    named = model.named_parameters()
    if set(named) != set(stored):
        missing = sorted(set(named) - set(stored))
        extra = sorted(set(stored) - set(named))
        raise CheckpointError(
            f"parameter names do not match config (missing {missing}, extra {extra})")
    for name, tensor in named.items():
        if stored[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file {stored[name].shape}, "
                f"config {tensor.data.shape}")
        tensor.data = stored[name].copy()
    return model, header
