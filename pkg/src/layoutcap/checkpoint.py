"""Checkpoint container: JSON header plus raw little-endian float64 payload.

Layout: 8-byte little-endian header length, UTF-8 JSON header (format
version, config echo, vocabularies, loop state, tensor manifest with
byte offsets), then the concatenated tensor payloads.  Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ParseError
from .text import CategoryVocabulary, Vocabulary
from .training import Checkpoint, TrainConfig

FORMAT_VERSION = 1


def _manifest_entries(ckpt: Checkpoint):
    for prefix, table in (("", ckpt.values), ("m:", ckpt.adam_m), ("v:", ckpt.adam_v)):
        for name, arr in table.items():
            yield prefix + name, arr


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    manifest = []
    offset = 0
    blobs = []
    for name, arr in _manifest_entries(ckpt):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_json(),
        "word_vocab": ckpt.word_vocab.to_json(),
        "category_vocab": ckpt.cat_vocab.to_json(),
        "iteration": ckpt.iteration,
        "rng_state": ckpt.rng_state,
        "cursor": list(ckpt.cursor),
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(struct.pack("<Q", len(header_bytes)))
            fh.write(header_bytes)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ParseError(f"{path}: truncated checkpoint")
    (header_len,) = struct.unpack("<Q", raw[:8])
    try:
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: invalid checkpoint header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported format version {header.get('format_version')}")
    payload = raw[8 + header_len:]

    values: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arr = arr.reshape(shape).astype(np.float64, copy=True)
        name = entry["name"]
        if name.startswith("m:"):
            adam_m[name[2:]] = arr
        elif name.startswith("v:"):
            adam_v[name[2:]] = arr
        else:
            values[name] = arr
    return Checkpoint(
        config=TrainConfig.from_json(header["config"]),
        word_vocab=Vocabulary.from_json(header["word_vocab"]),
        cat_vocab=CategoryVocabulary.from_json(header["category_vocab"]),
        values=values,
        adam_m=adam_m,
        adam_v=adam_v,
        iteration=header["iteration"],
        rng_state=header["rng_state"],
        cursor=tuple(header["cursor"]),
        format_version=header["format_version"],
    )
