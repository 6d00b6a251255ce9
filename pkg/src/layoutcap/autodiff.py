"""Dense 2-D float64 tensors with reverse-mode gradients.

Every value is a row-major (rows, cols) float64 matrix; vectors are
represented as single-row matrices.  Operations record a tape implicitly
through parent links, and ``backward`` on a scalar (1x1) result fills the
``grad`` buffer of every reachable :class:`Parameter`.  Inference code can
skip recording entirely with :func:`no_grad`.

The gradient contract is verified externally by
:func:`finite_difference_check`; the tape is an implementation detail.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericError, StateError

# Mathematically sigmoid never reaches 0; flooring at the smallest positive
# double keeps downstream log() finite even in saturated gates.
_SIGMOID_FLOOR = np.nextafter(0.0, 1.0)

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / fd probes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_value(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DimensionError(f"only 2-D matrices supported, got shape {a.shape}")
    return np.ascontiguousarray(a)


class Tensor:
    """Node in the computation graph; wraps a (rows, cols) float64 array."""

    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad", "_backward_done")

    def __init__(self, value, requires_grad: bool = False):
        self.value = _as_value(value)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        self.requires_grad = requires_grad
        self._backward_done = False

    @classmethod
    def _from_array(cls, value: np.ndarray) -> "Tensor":
        """Fast path for op outputs: value is a fresh 2-D float64 array."""
        out = cls.__new__(cls)
        out.value = value
        out.grad = None
        out._parents = ()
        out._backward = None
        out.requires_grad = False
        out._backward_done = False
        return out

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Learnable tensor: persistent grad buffer plus Adam moment estimates."""

    __slots__ = ("name", "adam_m", "adam_v")

    def __init__(self, value, name: str = ""):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def zero_grads(params: Sequence[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def _make(value: np.ndarray, parents: tuple[Tensor, ...], backward: Callable[[], None]) -> Tensor:
    out = Tensor._from_array(value)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise family
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_same_shape("add", a, b)
    out_val = a.value + b.value

    def bwd():
        g = out.grad
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(g)

    out = _make(out_val, (a, b), bwd)
    return out


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_same_shape("sub", a, b)
    out_val = a.value - b.value

    def bwd():
        g = out.grad
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(-g)

    out = _make(out_val, (a, b), bwd)
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_same_shape("mul", a, b)
    out_val = a.value * b.value

    def bwd():
        g = out.grad
        if a.requires_grad:
            a._accum(g * b.value)
        if b.requires_grad:
            b._accum(g * a.value)

    out = _make(out_val, (a, b), bwd)
    return out


def scale(a, s: float) -> Tensor:
    a = _wrap(a)
    s = float(s)
    out_val = a.value * s

    def bwd():
        if a.requires_grad:
            a._accum(out.grad * s)

    out = _make(out_val, (a,), bwd)
    return out


def neg(a) -> Tensor:
    return scale(a, -1.0)


def _sigmoid_value(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows; branches merge the two stable forms
    t = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    np.maximum(out, _SIGMOID_FLOOR, out=out)
    return out


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out_val = _sigmoid_value(a.value)

    def bwd():
        if a.requires_grad:
            s = out.value
            a._accum(out.grad * s * (1.0 - s))

    out = _make(out_val, (a,), bwd)
    return out


def tanh(a) -> Tensor:
    a = _wrap(a)
    out_val = np.tanh(a.value)

    def bwd():
        if a.requires_grad:
            a._accum(out.grad * (1.0 - out.value * out.value))

    out = _make(out_val, (a,), bwd)
    return out


def elementwise(fn: str, *inputs) -> Tensor:
    """Dispatch by name; the four supported kernels of the math core."""
    table = {"sigmoid": sigmoid, "tanh": tanh, "add": add, "mul": mul}
    if fn not in table:
        raise ValueError(f"unknown elementwise function {fn!r}; choose from {sorted(table)}")
    return table[fn](*inputs)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.cols != b.rows:
        raise DimensionError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    out_val = a.value @ b.value

    def bwd():
        g = out.grad
        if a.requires_grad:
            a._accum(g @ b.value.T)
        if b.requires_grad:
            b._accum(a.value.T @ g)

    out = _make(out_val, (a, b), bwd)
    return out


def linear(x, w, b) -> Tensor:
    """x @ w.T + b for x:(m,in), w:(out,in), b:(1,out) -> (m,out)."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.cols != w.cols:
        raise DimensionError(f"linear: input shape {x.shape} does not match weight shape {w.shape}")
    if b.shape != (1, w.rows):
        raise DimensionError(f"linear: bias shape {b.shape} does not match weight shape {w.shape}")
    out_val = x.value @ w.value.T + b.value

    def bwd():
        g = out.grad
        if x.requires_grad:
            x._accum(g @ w.value)
        if w.requires_grad:
            w._accum(g.T @ x.value)
        if b.requires_grad:
            b._accum(g.sum(axis=0, keepdims=True))

    out = _make(out_val, (x, w, b), bwd)
    return out


def add_bias(x, b) -> Tensor:
    """Row-broadcast add: (m,n) + (1,n)."""
    x, b = _wrap(x), _wrap(b)
    if b.shape != (1, x.cols):
        raise DimensionError(f"add_bias: bias shape {b.shape} does not broadcast over {x.shape}")
    out_val = x.value + b.value

    def bwd():
        g = out.grad
        if x.requires_grad:
            x._accum(g)
        if b.requires_grad:
            b._accum(g.sum(axis=0, keepdims=True))

    out = _make(out_val, (x, b), bwd)
    return out


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

def concat_cols(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.rows != b.rows:
        raise DimensionError(f"concat_cols: row counts differ for shapes {a.shape} and {b.shape}")
    out_val = np.concatenate([a.value, b.value], axis=1)
    n1 = a.cols

    def bwd():
        g = out.grad
        if a.requires_grad:
            a._accum(g[:, :n1])
        if b.requires_grad:
            b._accum(g[:, n1:])

    out = _make(out_val, (a, b), bwd)
    return out


def slice_cols(x, j0: int, j1: int) -> Tensor:
    x = _wrap(x)
    if not (0 <= j0 <= j1 <= x.cols):
        raise DimensionError(f"slice_cols: range [{j0}, {j1}) invalid for shape {x.shape}")
    out_val = x.value[:, j0:j1].copy()

    def bwd():
        if x.requires_grad:
            g_full = np.zeros_like(x.value)
            g_full[:, j0:j1] = out.grad
            x._accum(g_full)

    out = _make(out_val, (x,), bwd)
    return out


def embed_cols(w, ids) -> Tensor:
    """Gather columns of w:(k,V) at ids:(m,) -> (m,k); duplicates accumulate."""
    w = _wrap(w)
    idx = np.asarray(ids, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= w.cols):
        raise IndexError(f"embed_cols: index out of range for {w.cols} columns")
    out_val = w.value[:, idx].T.copy()

    def bwd():
        if w.requires_grad:
            g_w = np.zeros_like(w.value)
            np.add.at(g_w.T, idx, out.grad)
            w._accum(g_w)

    out = _make(out_val, (w,), bwd)
    return out


def where_mask(mask, a, b) -> Tensor:
    """mask*a + (1-mask)*b with a constant 0/1 mask array."""
    a, b = _wrap(a), _wrap(b)
    _check_same_shape("where_mask", a, b)
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != a.shape:
        raise DimensionError(f"where_mask: mask shape {m.shape} does not match {a.shape}")
    out_val = m * a.value + (1.0 - m) * b.value

    def bwd():
        g = out.grad
        if a.requires_grad:
            a._accum(g * m)
        if b.requires_grad:
            b._accum(g * (1.0 - m))

    out = _make(out_val, (a, b), bwd)
    return out


# ---------------------------------------------------------------------------
# softmax / reductions
# ---------------------------------------------------------------------------

def _softmax_rows_value(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(logits) -> Tensor:
    """Row-wise softmax with per-row max subtraction; rows sum to 1."""
    t = _wrap(logits)
    if not np.isfinite(t.value).all():
        raise NumericError("softmax_rows: logits must be finite")
    out_val = _softmax_rows_value(t.value)

    def bwd():
        if t.requires_grad:
            s = out.value
            g = out.grad
            t._accum(s * (g - (g * s).sum(axis=1, keepdims=True)))

    out = _make(out_val, (t,), bwd)
    return out


def log_softmax_rows(logits) -> Tensor:
    t = _wrap(logits)
    if not np.isfinite(t.value).all():
        raise NumericError("log_softmax_rows: logits must be finite")
    shifted = t.value - t.value.max(axis=1, keepdims=True)
    out_val = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def bwd():
        if t.requires_grad:
            g = out.grad
            t._accum(g - np.exp(out.value) * g.sum(axis=1, keepdims=True))

    out = _make(out_val, (t,), bwd)
    return out


def pick_rows(x, ids) -> Tensor:
    """Per-row gather: x:(m,n), ids:(m,) -> (m,1)."""
    x = _wrap(x)
    idx = np.asarray(ids, dtype=np.intp).ravel()
    if idx.size != x.rows:
        raise DimensionError(f"pick_rows: got {idx.size} indices for {x.rows} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= x.cols):
        raise IndexError(f"pick_rows: index out of range for {x.cols} columns")
    rows = np.arange(x.rows)
    out_val = x.value[rows, idx].reshape(-1, 1)

    def bwd():
        if x.requires_grad:
            g_full = np.zeros_like(x.value)
            g_full[rows, idx] = out.grad[:, 0]
            x._accum(g_full)

    out = _make(out_val, (x,), bwd)
    return out


def sum_all(x) -> Tensor:
    x = _wrap(x)
    out_val = np.array([[x.value.sum()]])

    def bwd():
        if x.requires_grad:
            x._accum(np.full_like(x.value, out.grad[0, 0]))

    out = _make(out_val, (x,), bwd)
    return out


def mean_all(x) -> Tensor:
    x = _wrap(x)
    return scale(sum_all(x), 1.0 / x.value.size)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate grads of every Parameter reachable from a scalar loss."""
    if loss.value.shape != (1, 1):
        raise DimensionError(f"backward: loss must be 1x1, got {loss.shape}")
    if loss._backward_done:
        raise StateError("backward already ran for this result; run a new forward pass first")
    loss._backward_done = True

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def finite_difference_check(
    f: Callable[[], Tensor],
    p: Parameter,
    eps: float = 1e-5,
    max_coords: int = 64,
    rng=None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a deterministic scalar function closing over ``p``.  Coordinates
    are checked exhaustively up to ``max_coords``, then sampled.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    p.zero_grad()
    loss = f()
    backward(loss)
    if not np.isfinite(loss.value).all():
        raise NumericError("finite_difference_check: f() returned a non-finite value")
    analytic = p.grad.copy()

    flat = p.value.reshape(-1)
    n = flat.size
    if n <= max_coords:
        coords = list(range(n))
    else:
        if rng is None:
            from .rng import Rng

            rng = Rng(0)
        coords = sorted({rng.randint(n) for _ in range(max_coords)})

    worst = 0.0
    for i in coords:
        orig = flat[i]
        flat[i] = orig + eps
        with no_grad():
            up = f().item()
        flat[i] = orig - eps
        with no_grad():
            down = f().item()
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError("finite_difference_check: f() returned a non-finite value")
        numeric = (up - down) / (2.0 * eps)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst
