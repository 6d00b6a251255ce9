"""MS-COCO-style annotation ingestion.

Consumes the public JSON schema: an instances file (images, annotations
with pixel [x, y, w, h] boxes and category ids, categories) and a
captions file (annotations with caption strings keyed by image id).
Produces one record per image that has at least one object and one
caption; object order follows the annotation file.
"""

from __future__ import annotations

import json
import logging

from .data import RawExample, normalize_bbox
from .errors import InvalidBoxError, ParseError
from .text import CategoryVocabulary

log = logging.getLogger(__name__)


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing required field {key!r}")
    return obj[key]


def load_coco(instances_file: str, captions_file: str
              ) -> tuple[list[RawExample], CategoryVocabulary]:
    """Parse instance + caption files into dataset records.

    Images without objects or captions are skipped (counted in one
    warning); boxes slightly out of bounds are clamped.
    """
    instances = _load_json(instances_file)
    captions = _load_json(captions_file)

    images: dict = {}
    for rec in _require(instances, "images", instances_file):
        img_id = _require(rec, "id", f"{instances_file} images entry")
        images[img_id] = (
            float(_require(rec, "width", f"image {img_id}")),
            float(_require(rec, "height", f"image {img_id}")),
        )

    cat_names: dict = {}
    cat_vocab = CategoryVocabulary()
    for rec in _require(instances, "categories", instances_file):
        cid = _require(rec, "id", f"{instances_file} categories entry")
        name = _require(rec, "name", f"category {cid}")
        cat_names[cid] = name
        cat_vocab.add(name)

    objects_by_image: dict = {img_id: [] for img_id in images}
    for rec in _require(instances, "annotations", instances_file):
        ann_id = rec.get("id", "?")
        img_id = _require(rec, "image_id", f"annotation {ann_id}")
        if img_id not in images:
            raise ParseError(f"annotation {ann_id}: unknown image_id {img_id}")
        cat_id = _require(rec, "category_id", f"annotation {ann_id}")
        if cat_id not in cat_names:
            raise ParseError(f"annotation {ann_id}: unknown category_id {cat_id}")
        bbox = _require(rec, "bbox", f"annotation {ann_id}")
        width, height = images[img_id]
        try:
            box = normalize_bbox(bbox, width, height)
        except InvalidBoxError as exc:
            raise InvalidBoxError(f"annotation {ann_id}: {exc}") from exc
        objects_by_image[img_id].append((cat_names[cat_id], box))

    captions_by_image: dict = {img_id: [] for img_id in images}
    for rec in _require(captions, "annotations", captions_file):
        ann_id = rec.get("id", "?")
        img_id = _require(rec, "image_id", f"caption annotation {ann_id}")
        if img_id not in images:
            raise ParseError(f"caption annotation {ann_id}: unknown image_id {img_id}")
        captions_by_image[img_id].append(str(_require(rec, "caption", f"caption {ann_id}")))

    examples = []
    skipped_no_objects = 0
    skipped_no_captions = 0
    for img_id in images:
        objs = objects_by_image[img_id]
        caps = captions_by_image[img_id]
        if not objs:
            skipped_no_objects += 1
            continue
        if not caps:
            skipped_no_captions += 1
            continue
        examples.append(RawExample(
            id=img_id,
            image_size=(1.0, 1.0),  # boxes are stored normalized
            objects=objs,
            captions=caps,
        ))
    if skipped_no_objects or skipped_no_captions:
        log.warning("skipped %d images without objects and %d without captions",
                    skipped_no_objects, skipped_no_captions)
    return examples, cat_vocab
