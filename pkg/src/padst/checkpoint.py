"""Binary checkpoints.

Layout: the magic ``PADST1\\n``, one line of UTF-8 JSON (header), then raw
little-endian float32 tensors in manifest order. Manifest offsets are byte
offsets from the start of the payload.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .model import ModelConfig, Seq2Seq, TransferModel
from .text import Vocab

MAGIC = b"PADST1\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: TransferModel | Seq2Seq, path: str | Path, extra: dict | None = None) -> None:
    kind = "translator" if isinstance(model, Seq2Seq) else "transfer"
    manifest = []
    offset = 0
    arrays = []
    for name, p in model.named_parameters():
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": "float32", "offset": offset})
        offset += arr.nbytes
        arrays.append(arr)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "model_config": model.config.to_dict(),
        "vocab": model.vocab.itos,
        "tensors": manifest,
        "payload_bytes": offset,
        "extra": extra or {},
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
        for arr in arrays:
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def read_header(path: str | Path) -> tuple[dict, bytes]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic, expected {MAGIC!r}, found {raw[:len(MAGIC)]!r}")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[len(MAGIC) : end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version mismatch, expected {FORMAT_VERSION}, found {version}")
    return header, raw[end + 1 :]


def load_checkpoint(path: str | Path) -> TransferModel | Seq2Seq:
    header, payload = read_header(path)
    expected = header.get("payload_bytes")
    if len(payload) != expected:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, header promises {expected} (truncated?)")
    config = ModelConfig.from_dict(header["model_config"])
    vocab = Vocab(header["vocab"][7:])
    if vocab.itos != header["vocab"]:
        raise CheckpointError(f"{path}: vocabulary does not start with the reserved symbols")
    cls = Seq2Seq if header.get("kind") == "translator" else TransferModel
    model = cls(config, vocab)
    params = dict(model.named_parameters())
    names = [t["name"] for t in header["tensors"]]
    if sorted(names) != sorted(params) or len(set(names)) != len(names):
        raise CheckpointError(f"{path}: tensor manifest does not match a {config.variant} model")
    for entry in header["tensors"]:
        target = params[entry["name"]]
        shape = tuple(entry["shape"])
        if shape != target.shape or entry.get("dtype") != "float32":
            raise CheckpointError(f"{path}: tensor {entry['name']} has shape {shape}, expected {target.shape}")
        n = int(np.prod(shape)) * 4
        chunk = payload[entry["offset"] : entry["offset"] + n]
        if len(chunk) != n:
            raise CheckpointError(f"{path}: tensor {entry['name']} is truncated")
        target.data = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float32)
    model.extra = header.get("extra", {})
    model.eval()
    return model
