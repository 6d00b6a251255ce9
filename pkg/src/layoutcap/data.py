"""Dataset types, bounding-box normalization, JSONL io, and splitting.

The on-disk dataset format is line-delimited JSON, one example per line:

    {"id": ..., "image_size": [w, h], "objects": [{"category": str,
     "bbox": [x, y, w, h]}], "captions": [str], "aux_features": [float]?}

with bbox already normalized to [0, 1].  This file format is the contract
between the data-generation, training, and evaluation stages.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidBoxError, ParseError
from .text import CategoryVocabulary, Vocabulary, tokenize
from .rng import Rng

_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class BoundingBox:
    """Normalized box: left/top corner plus width/height, all in [0, 1]."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"box must have positive extent, got w={self.w}, h={self.h}")
        if not (0 <= self.x <= 1 and 0 <= self.y <= 1 and self.w <= 1 and self.h <= 1):
            raise InvalidBoxError(f"box {self.as_list()} out of the unit square")
        if self.x + self.w > 1 + _EDGE_TOL or self.y + self.h > 1 + _EDGE_TOL:
            raise InvalidBoxError(f"box {self.as_list()} extends past the unit square")

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


def normalize_bbox(raw: Sequence[float], image_w: float, image_h: float) -> BoundingBox:
    """Pixel [left, top, width, height] -> normalized box, clamped to [0, 1]."""
    if image_w <= 0 or image_h <= 0:
        raise InvalidBoxError(f"image size must be positive, got {image_w}x{image_h}")
    left, top, width, height = (float(v) for v in raw)
    if width <= 0 or height <= 0:
        raise InvalidBoxError(f"box must have positive extent, got w={width}, h={height}")
    x = min(max(left / image_w, 0.0), 1.0)
    y = min(max(top / image_h, 0.0), 1.0)
    w = min(width / image_w, 1.0 - x)
    h = min(height / image_h, 1.0 - y)
    if w <= 0 or h <= 0:
        raise InvalidBoxError(f"box {list(raw)} lies outside the {image_w}x{image_h} image")
    return BoundingBox(x, y, w, h)


@dataclass(frozen=True)
class ObjectLayout:
    """Ordered (category_id, box) pairs; the model input."""

    entries: tuple[tuple[int, BoundingBox], ...]

    def __post_init__(self):
        if len(self.entries) == 0:
            raise InvalidBoxError("an object layout needs at least one object")

    def __len__(self) -> int:
        return len(self.entries)

    def category_ids(self) -> list[int]:
        return [cid for cid, _ in self.entries]


@dataclass
class RawExample:
    """One dataset record as stored on disk (caption strings, not ids)."""

    id: int | str
    image_size: tuple[float, float]
    objects: list[tuple[str, BoundingBox]]
    captions: list[str]
    aux_features: list[float] | None = None

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "image_size": list(self.image_size),
            "objects": [{"category": c, "bbox": b.as_list()} for c, b in self.objects],
            "captions": self.captions,
        }
        if self.aux_features is not None:
            obj["aux_features"] = self.aux_features
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "RawExample":
        try:
            objects = [(o["category"], BoundingBox(*o["bbox"])) for o in obj["objects"]]
            return cls(
                id=obj["id"],
                image_size=tuple(obj.get("image_size", [1.0, 1.0])),
                objects=objects,
                captions=list(obj["captions"]),
                aux_features=list(obj["aux_features"]) if "aux_features" in obj else None,
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed dataset record {obj.get('id', '?')!r}: {exc}") from exc


@dataclass
class CaptionedExample:
    """Vocabulary-encoded example: layout plus BOS..EOS token-id captions."""

    id: int | str
    layout: ObjectLayout
    captions: list[list[int]]
    raw_captions: list[str]
    aux_features: np.ndarray | None = None


def write_dataset(path: str, examples: Sequence[RawExample]) -> None:
    """Atomic JSONL write; no partial file remains on failure."""
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            for ex in examples:
                fh.write(json.dumps(ex.to_json(), sort_keys=True) + "\n")
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_dataset(path: str) -> list[RawExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            examples.append(RawExample.from_json(obj))
    return examples


def category_vocabulary(examples: Sequence[RawExample]) -> CategoryVocabulary:
    vocab = CategoryVocabulary()
    for ex in examples:
        for name, _ in ex.objects:
            vocab.add(name)
    return vocab


def encode_dataset(
    examples: Sequence[RawExample],
    word_vocab: Vocabulary,
    cat_vocab: CategoryVocabulary,
    max_caption_len: int = 16,
    order: str = "source",
    order_seed: int = 0,
) -> list[CaptionedExample]:
    """Map names and caption strings to ids; captions truncate at max length."""
    out = []
    for i, ex in enumerate(examples):
        objects = reorder_objects(ex.objects, order, order_seed, salt=i)
        layout = ObjectLayout(tuple((cat_vocab.category_id(c), b) for c, b in objects))
        encoded = []
        for caption in ex.captions:
            ids = word_vocab.encode(tokenize(caption)[:max_caption_len])
            encoded.append(ids)
        aux = np.asarray(ex.aux_features, dtype=np.float64) if ex.aux_features else None
        out.append(CaptionedExample(ex.id, layout, encoded, list(ex.captions), aux))
    return out


def split(
    dataset: Sequence,
    fractions: Sequence[float],
    seed: int,
) -> tuple[list, ...]:
    """Disjoint, exhaustive, seed-deterministic partition."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {list(fractions)}")
    order = Rng(seed).permutation(len(dataset))
    bounds = []
    acc = 0.0
    for f in fractions:
        acc += f
        bounds.append(int(round(acc * len(dataset))))
    bounds[-1] = len(dataset)
    parts = []
    start = 0
    for end in bounds:
        parts.append([dataset[i] for i in order[start:end]])
        start = end
    return tuple(parts)


def scored_token_count(ids: Sequence[int]) -> int:
    """Number of likelihood terms for a BOS..EOS caption (content plus EOS)."""
    return len(ids) - 1


ORDER_MODES = ("source", "by-category", "by-position", "shuffled")


def reorder_objects(objects: list[tuple[str, BoundingBox]], mode: str = "source",
                    seed: int = 0, salt: int = 0) -> list[tuple[str, BoundingBox]]:
    """Encoder input ordering switch; 'shuffled' is deterministic per (seed, salt)."""
    if mode == "source":
        return list(objects)
    if mode == "by-category":
        return sorted(objects, key=lambda o: o[0])
    if mode == "by-position":
        return sorted(objects, key=lambda o: o[1].center)
    if mode == "shuffled":
        from .rng import derive_seed

        out = list(objects)
        Rng(derive_seed(seed, salt)).shuffle(out)
        return out
    raise ConfigError(f"unknown object order mode {mode!r}; choose from {ORDER_MODES}")
