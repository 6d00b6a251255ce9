"""Synthetic spatial-caption corpus.

Scenes are sampled on a unit canvas: 1-4 objects from a small category
set, with duplicate categories encouraged so that count words appear.
Captions come from a template grammar whose surface form depends on both
box geometry (left/right/above/below/"on top of", or the horizontal
third for single-category scenes) and instance counts ("two dogs"), so
the ideal caption is recoverable neither from the category multiset
alone nor from the category set alone.

With ``template_variants`` enabled, each scene randomly flips to an
alternative surface form (role-reversed relation or an existential
opening), and the variant id is emitted as a one-hot auxiliary feature
vector; layouts alone cannot disambiguate the variant, which is exactly
what the fused model can exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import BoundingBox, RawExample
from .rng import Rng

DEFAULT_CATEGORIES = ("dog", "cat", "ball", "car", "tree",
                      "bird", "chair", "table", "bike", "lamp")

COUNT_WORDS = {1: "a", 2: "two", 3: "three", 4: "four"}

# (phrase, role-reversed phrase)
_RELATIONS = {
    "on_top": ("on top of", "under"),
    "left": ("to the left of", "to the right of"),
    "right": ("to the right of", "to the left of"),
    "above": ("above", "below"),
    "below": ("below", "above"),
}

# 3x3 grid of position phrases indexed by (row, col) of the box center
_POSITIONS = (
    ("at the top left", "at the top", "at the top right"),
    ("on the left", "in the middle", "on the right"),
    ("at the bottom left", "at the bottom", "at the bottom right"),
)

AUX_DIM = 2  # one-hot surface-variant id


@dataclass
class SyntheticConfig:
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    min_objects: int = 1
    max_objects: int = 4
    duplicate_prob: float = 0.45
    template_variants: bool = False
    emit_aux: bool = False

    def __post_init__(self):
        if self.min_objects < 1 or self.max_objects < self.min_objects:
            raise ValueError("objects per scene must satisfy 1 <= min <= max")


def _sample_box(rng: Rng) -> BoundingBox:
    w = rng.uniform(0.08, 0.35)
    h = rng.uniform(0.08, 0.35)
    x = rng.uniform(0.0, 1.0 - w)
    y = rng.uniform(0.0, 1.0 - h)
    return BoundingBox(x, y, w, h)


def spatial_relation(a: BoundingBox, b: BoundingBox) -> str:
    """Relation key for 'a REL b' from box geometry alone."""
    overlap_x = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    if overlap_x > 0 and abs((a.y + a.h) - b.y) <= 0.08:
        return "on_top"
    (ax, ay), (bx, by) = a.center, b.center
    if abs(ax - bx) >= abs(ay - by):
        return "left" if ax < bx else "right"
    return "above" if ay < by else "below"


def _noun_phrase(category: str, count: int) -> str:
    word = COUNT_WORDS[min(count, max(COUNT_WORDS))]
    noun = category if count == 1 else category + "s"
    return f"{word} {noun}"


def position_phrase(box: BoundingBox) -> str:
    cx, cy = box.center
    return _POSITIONS[min(int(cy * 3), 2)][min(int(cx * 3), 2)]


def render_caption(objects: list[tuple[str, BoundingBox]], variant: int = 0) -> str:
    """Deterministic caption for a scene; variant flips the surface form."""
    groups: list[tuple[str, int, BoundingBox]] = []
    index: dict[str, int] = {}
    for name, box in objects:
        if name in index:
            cat, cnt, first = groups[index[name]]
            groups[index[name]] = (cat, cnt + 1, first)
        else:
            index[name] = len(groups)
            groups.append((name, 1, box))

    if len(groups) == 1:
        cat, cnt, box = groups[0]
        body = f"{_noun_phrase(cat, cnt)} {position_phrase(box)}"
        return f"there is {body}" if variant else body

    (cat_a, cnt_a, box_a), (cat_b, cnt_b, box_b) = groups[0], groups[1]
    rel_key = spatial_relation(box_a, box_b)
    forward, reverse = _RELATIONS[rel_key]
    if variant:
        lead = f"{_noun_phrase(cat_b, cnt_b)} {reverse} {_noun_phrase(cat_a, cnt_a)}"
    else:
        lead = f"{_noun_phrase(cat_a, cnt_a)} {forward} {_noun_phrase(cat_b, cnt_b)}"
    extras = "".join(f" and {_noun_phrase(c, n)}" for c, n, _ in groups[2:])
    return lead + extras


def generate_scene(rng: Rng, config: SyntheticConfig) -> list[tuple[str, BoundingBox]]:
    n = config.min_objects + rng.randint(config.max_objects - config.min_objects + 1)
    names: list[str] = []
    for i in range(n):
        if names and rng.uniform() < config.duplicate_prob:
            names.append(rng.choice(names))
        else:
            names.append(rng.choice(list(config.categories)))
    return [(name, _sample_box(rng)) for name in names]


def generate_synthetic(seed: int, n_examples: int,
                       config: SyntheticConfig | None = None) -> list[RawExample]:
    """Deterministic dataset of captioned scenes; same seed, same bytes."""
    config = config or SyntheticConfig()
    rng = Rng(seed)
    examples = []
    for i in range(n_examples):
        objects = generate_scene(rng, config)
        variant = rng.randint(2) if config.template_variants else 0
        caption = render_caption(objects, variant)
        aux = None
        if config.emit_aux:
            aux = [0.0] * AUX_DIM
            aux[variant] = 1.0
        examples.append(RawExample(
            id=i,
            image_size=(1.0, 1.0),
            objects=objects,
            captions=[caption],
            aux_features=aux,
        ))
    return examples
