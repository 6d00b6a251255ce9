"""Standard LSTM cell on top of the autodiff kernel.

One weight block per cell: a (4k, 2k) matrix applied to [x; h] plus a
(1, 4k) bias, with gate blocks ordered i, f, o, g.  The gate
nonlinearities, cell update, and output are fused into a single tape
node with a hand-derived backward pass; its gradients are pinned down
by finite-difference tests.  Both the layout encoder and the caption
decoder instantiate this cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, _make, _sigmoid_value
from .errors import DimensionError
from .rng import Rng


@dataclass
class LstmParams:
    w: Parameter  # (4k, 2k), acts on the concatenation [x; h]
    b: Parameter  # (1, 4k)

    @property
    def hidden_size(self) -> int:
        return self.w.rows // 4


@dataclass
class RecurrentState:
    h: Tensor
    c: Tensor


def init_lstm(k: int, rng: Rng, name: str, init_scale: float = 0.08,
              forget_bias: float = 1.0) -> LstmParams:
    w = Parameter(rng.uniform_array((4 * k, 2 * k), -init_scale, init_scale), name=f"{name}.w")
    bias = np.zeros((1, 4 * k))
    bias[0, k:2 * k] = forget_bias
    return LstmParams(w=w, b=Parameter(bias, name=f"{name}.b"))


def zero_state(k: int, batch: int = 1) -> RecurrentState:
    zeros = np.zeros((batch, k))
    return RecurrentState(h=Tensor(zeros), c=Tensor(zeros.copy()))


def _lstm_cell(z: Tensor, c_prev: Tensor, k: int) -> Tensor:
    """Gate computation fused into one node; returns [h_new | c_new] (B, 2k).

    i, f, o = sigmoid of the first three gate blocks, g = tanh of the
    fourth; c' = f*c + i*g; h' = o*tanh(c').
    """
    zv = z.value
    i = _sigmoid_value(zv[:, :k])
    f = _sigmoid_value(zv[:, k:2 * k])
    o = _sigmoid_value(zv[:, 2 * k:3 * k])
    g = np.tanh(zv[:, 3 * k:])
    c_new = f * c_prev.value + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    out_val = np.concatenate([h_new, c_new], axis=1)

    def bwd():
        grad = out.grad
        gh = grad[:, :k]
        dc = grad[:, k:] + gh * o * (1.0 - tc * tc)
        if z.requires_grad:
            gz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev.value * f * (1.0 - f),
                gh * tc * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=1)
            z._accum(gz)
        if c_prev.requires_grad:
            c_prev._accum(dc * f)

    out = _make(out_val, (z, c_prev), bwd)
    return out


def lstm_step(params: LstmParams, x: Tensor, state: RecurrentState) -> RecurrentState:
    """One cell update: gates i,f,o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c')."""
    k = params.hidden_size
    if x.cols != k or state.h.cols != k:
        raise DimensionError(
            f"lstm_step: expected inputs of width {k}, got x {x.shape} and h {state.h.shape}")
    z = ad.linear(ad.concat_cols(x, state.h), params.w, params.b)
    hc = _lstm_cell(z, state.c, k)
    return RecurrentState(h=ad.slice_cols(hc, 0, k), c=ad.slice_cols(hc, k, 2 * k))
