"""Layout encoder: (category, box) sequence -> fixed-size scene vector.

Each object contributes a category embedding plus a linear projection of
its [x, y, w, h] box; the sum feeds one LSTM step and the final hidden
state summarizes the layout.  An optional auxiliary feature vector can
be projected and added to that summary before decoding.

Ablations: ``no_locations`` drops the box projection entirely;
``no_counts`` collapses repeated categories to their first occurrence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .data import BoundingBox, ObjectLayout
from .errors import DimensionError, EmptyLayoutError
from .lstm import LstmParams, RecurrentState, init_lstm, lstm_step, zero_state
from .rng import Rng


@dataclass(frozen=True)
class AblationFlags:
    no_locations: bool = False
    no_counts: bool = False

    def to_json(self) -> dict:
        return {"no_locations": self.no_locations, "no_counts": self.no_counts}

    @classmethod
    def from_json(cls, obj: dict) -> "AblationFlags":
        return cls(bool(obj.get("no_locations", False)), bool(obj.get("no_counts", False)))


@dataclass
class EncoderParams:
    w_cat: Parameter            # (k, V) category embedding columns
    w_loc: Parameter            # (k, 4) box projection
    b_loc: Parameter            # (1, k)
    lstm: LstmParams
    w_aux: Parameter | None = None  # (k, d_aux) auxiliary-feature projection
    b_aux: Parameter | None = None  # (1, k)

    @property
    def hidden_size(self) -> int:
        return self.w_cat.rows

    @property
    def num_categories(self) -> int:
        return self.w_cat.cols


def init_encoder(k: int, num_categories: int, rng: Rng, aux_dim: int = 0,
                 init_scale: float = 0.08) -> EncoderParams:
    w_cat = Parameter(rng.uniform_array((k, num_categories), -init_scale, init_scale), "encoder.w_cat")
    w_loc = Parameter(rng.uniform_array((k, 4), -init_scale, init_scale), "encoder.w_loc")
    b_loc = Parameter(np.zeros((1, k)), "encoder.b_loc")
    lstm = init_lstm(k, rng, "encoder.lstm", init_scale)
    w_aux = b_aux = None
    if aux_dim > 0:
        w_aux = Parameter(rng.uniform_array((k, aux_dim), -init_scale, init_scale), "encoder.w_aux")
        b_aux = Parameter(np.zeros((1, k)), "encoder.b_aux")
    return EncoderParams(w_cat, w_loc, b_loc, lstm, w_aux, b_aux)


def dedup_layout(layout: ObjectLayout) -> ObjectLayout:
    """Keep the first occurrence of each category, in order."""
    seen: set[int] = set()
    kept = []
    for cid, box in layout.entries:
        if cid not in seen:
            seen.add(cid)
            kept.append((cid, box))
    return ObjectLayout(tuple(kept))


def embed_step(params: EncoderParams, category_id: int, bbox: BoundingBox,
               flags: AblationFlags = AblationFlags()) -> Tensor:
    """Input vector for one object: embedding column (+ projected box)."""
    if not 0 <= category_id < params.num_categories:
        raise IndexError(
            f"category id {category_id} out of range for {params.num_categories} categories")
    emb = ad.embed_cols(params.w_cat, [category_id])
    if flags.no_locations:
        return emb
    loc = Tensor([bbox.as_list()])
    return ad.add(emb, ad.linear(loc, params.w_loc, params.b_loc))


def _embed_batch(params: EncoderParams, ids: np.ndarray, boxes: np.ndarray,
                 flags: AblationFlags) -> Tensor:
    emb = ad.embed_cols(params.w_cat, ids)
    if flags.no_locations:
        return emb
    return ad.add(emb, ad.linear(Tensor(boxes), params.w_loc, params.b_loc))


def encode_layout(params: EncoderParams, layout: ObjectLayout,
                  flags: AblationFlags = AblationFlags()) -> Tensor:
    """Final hidden state after running the LSTM over the object sequence."""
    if flags.no_counts:
        layout = dedup_layout(layout)
    if len(layout) == 0:
        raise EmptyLayoutError("cannot encode an empty layout")
    state = zero_state(params.hidden_size)
    for cid, box in layout.entries:
        x = embed_step(params, cid, box, flags)
        state = lstm_step(params.lstm, x, state)
    return state.h


def encode_batch(params: EncoderParams, layouts: list[ObjectLayout],
                 flags: AblationFlags = AblationFlags()) -> Tensor:
    """Lockstep encoding of a batch; masking freezes finished sequences.

    Agrees with per-example encode_layout to float64 rounding (matmul
    kernels vary with operand shape).
    """
    if flags.no_counts:
        layouts = [dedup_layout(l) for l in layouts]
    if not layouts or any(len(l) == 0 for l in layouts):
        raise EmptyLayoutError("cannot encode an empty layout")
    batch = len(layouts)
    k = params.hidden_size
    max_len = max(len(l) for l in layouts)
    state = zero_state(k, batch)
    for t in range(max_len):
        ids = np.zeros(batch, dtype=np.intp)
        boxes = np.zeros((batch, 4))
        live = np.zeros((batch, 1))
        for i, layout in enumerate(layouts):
            if t < len(layout):
                cid, box = layout.entries[t]
                ids[i] = cid
                boxes[i] = box.as_list()
                live[i, 0] = 1.0
        x = _embed_batch(params, ids, boxes, flags)
        new = lstm_step(params.lstm, x, state)
        if live.all():
            state = new
        else:
            mask = np.broadcast_to(live, (batch, k))
            state = RecurrentState(
                h=ad.where_mask(mask, new.h, state.h),
                c=ad.where_mask(mask, new.c, state.c),
            )
    return state.h


def fuse_auxiliary(params: EncoderParams, h_layout: Tensor,
                   aux: np.ndarray | None) -> Tensor:
    """Add the projected auxiliary feature vector(s); identity when absent."""
    if params.w_aux is None or aux is None:
        return h_layout
    a = np.asarray(aux, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.shape != (h_layout.rows, params.w_aux.cols):
        raise DimensionError(
            f"auxiliary features of shape {a.shape} do not match "
            f"(batch {h_layout.rows}, dim {params.w_aux.cols})")
    return ad.add(h_layout, ad.linear(Tensor(a), params.w_aux, params.b_aux))
