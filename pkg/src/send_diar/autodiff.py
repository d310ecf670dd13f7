"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every op records its parents and a closure mapping the output gradient to
parent gradients. ``backward`` walks the recorded graph in reverse
topological order and accumulates into :class:`Parameter` gradients.

The primitive set is deliberately small: it covers exactly what the
diarization models need (dense layers, tanh/sigmoid, softmax, FIR memory
filters, layer norm, embedding lookup, reductions and the fused losses).
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
# grad_check re-evaluates the loss in extended precision where the platform has it
EXTENDED = np.longdouble


def _as_real(data) -> np.ndarray:
    arr = np.asarray(data)
    return arr if arr.dtype == EXTENDED else arr.astype(DTYPE, copy=False)


class ShapeError(ValueError):
    """Raised when the operands of a primitive have incompatible shapes."""


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, name: str = "", *, _parents=(), _backward=None, _check=True):
        arr = _as_real(data)
        if _check and not np.all(np.isfinite(arr)):
            raise ValueError(f"tensor {name or '<anon>'}: non-finite values")
        self.data = arr
        self.grad = None
        self.parents = _parents
        self.backward_fn = _backward
        self.requires_grad = any(p.requires_grad for p in _parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def __float__(self):
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """A trainable leaf. ``grad`` always has the shape of ``data``."""

    __slots__ = ()

    def __init__(self, data, name: str = ""):
        super().__init__(data, name)
        self.requires_grad = True
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward, op: str) -> Tensor:
    out = Tensor(data, op, _parents=tuple(parents), _backward=backward, _check=False)
    if not out.requires_grad:
        out.parents = ()
        out.backward_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ----------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward, "mul")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


# ----------------------------------------------------------------------------
# linear algebra and shape


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), backward, "matmul")


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    return _node(y, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        y = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(y, xs, backward, "concat")


def embedding(table: Tensor, indices) -> Tensor:
    """Gather rows of ``table`` (V x D) at integer ``indices``."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding: index out of range for vocabulary of {table.shape[0]}")

    def backward(g):
        out = np.zeros_like(table.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(table.data[idx], (table,), backward, "embedding")


# ----------------------------------------------------------------------------
# reductions


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(y, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ----------------------------------------------------------------------------
# normalization / probability


def _softmax_np(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(logits, axis: int = -1):
    """Max-subtracted softmax.

    Accepts a :class:`Tensor` (returns a graph node) or any array-like
    (returns a plain ndarray).
    """
    if not isinstance(logits, Tensor):
        z = np.asarray(logits, dtype=DTYPE)
        if not np.all(np.isfinite(z)):
            raise ValueError("softmax: logits must be finite")
        return _softmax_np(z, axis)
    y = _softmax_np(logits.data, axis)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (logits,), backward, "softmax")


def cross_entropy(probabilities, target: int) -> float:
    """Negative log-probability of ``target`` under a categorical distribution."""
    p = np.asarray(probabilities, dtype=DTYPE)
    if not 0 <= target < p.shape[-1]:
        raise IndexError(f"cross_entropy: target {target} outside 0..{p.shape[-1] - 1}")
    with np.errstate(divide="ignore"):
        return float(-np.log(p[target]))


def softmax_cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[target]`` via log-sum-exp.

    ``weights`` optionally rescales rows (0 drops a row); the mean is taken
    over the total weight.
    """
    t = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or t.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs targets {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= logits.shape[1]):
        raise IndexError("softmax_cross_entropy: target class out of range")
    w = np.ones(len(t)) if weights is None else np.asarray(weights, dtype=DTYPE)
    total = w.sum()
    if total <= 0:
        raise ValueError("softmax_cross_entropy: no rows carry weight")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(t))
    nll = lse - z[rows, t]
    loss = (w * nll).sum() / total

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, t] -= 1.0
        return (g * p * (w / total)[:, None],)

    return _node(loss, (logits,), backward, "softmax_cross_entropy")


def sigmoid_binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean elementwise binary cross-entropy of ``sigmoid(logits)``, computed stably."""
    y = np.asarray(targets, dtype=DTYPE)
    if y.shape != logits.shape:
        raise ShapeError(f"sigmoid_binary_cross_entropy: logits {logits.shape} vs targets {y.shape}")
    z = logits.data
    # log(1 + exp(-|z|)) + max(z, 0) - z*y
    per = np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * y
    n = z.size

    def backward(g):
        return (g * (_sigmoid(z) - y) / n,)

    return _node(per.sum() / n, (logits,), backward, "sigmoid_binary_cross_entropy")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs features {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain, gbias

    return _node(y, (x, gain, bias), backward, "layer_norm")


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Scale each vector along ``axis`` to unit length. Zero vectors map to zero."""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    y = np.where(norm > 0, x.data / safe, 0.0)

    def backward(g):
        proj = (g * y).sum(axis=axis, keepdims=True)
        return (np.where(norm > 0, (g - y * proj) / safe, 0.0),)

    return _node(y, (x,), backward, "l2_normalize")


# ----------------------------------------------------------------------------
# sequence memory


def _fir_windows(x: np.ndarray, half: int) -> np.ndarray:
    t, p = x.shape
    padded = np.zeros((t + 2 * half, p), dtype=x.dtype)
    padded[half:half + t] = x
    step = padded.strides[0]
    return np.lib.stride_tricks.as_strided(
        padded, shape=(t, 2 * half + 1, p), strides=(step, step, padded.strides[1]), writeable=False)


def fir_filter(x: Tensor, taps: Tensor) -> Tensor:
    """Per-channel FIR filter over time, centred and zero-padded.

    ``x`` is T x P, ``taps`` is K x P with K odd. Output row t is
    ``sum_k taps[k] * x[t + k - K//2]``.
    """
    if x.ndim != 2 or taps.ndim != 2:
        raise ShapeError(f"fir_filter: expected 2-D input and taps, got {x.shape}, {taps.shape}")
    k, p = taps.shape
    if k % 2 == 0:
        raise ShapeError(f"fir_filter: filter size must be odd, got {k}")
    if x.shape[1] != p:
        raise ShapeError(f"fir_filter: input has {x.shape[1]} channels, taps have {p}")
    half = k // 2
    windows = _fir_windows(x.data, half)  # T x K x P view
    y = np.einsum("tkp,kp->tp", windows, taps.data)

    def backward(g):
        gtaps = np.einsum("tkp,tp->kp", windows, g)
        gx = np.einsum("tkp,kp->tp", _fir_windows(g, half), taps.data[::-1])
        return gx, gtaps

    return _node(y, (x, taps), backward, "fir_filter")


# ----------------------------------------------------------------------------
# driving the graph


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every reachable Parameter's ``grad``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad = node.grad + g
            continue
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def forward_backward(loss_fn: Callable[[], Tensor], params: Iterable[Parameter]) -> float:
    """Zero ``params`` gradients, build the graph, backpropagate; return the loss."""
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if loss.data.size != 1:
        raise ShapeError(f"forward_backward: loss must be scalar, got shape {loss.shape}")
    backward(loss)
    return float(loss.data)


def grad_check(loss_fn: Callable[[], Tensor], params: Iterable[Parameter], epsilon: float = 1e-4) -> float:
    """Largest relative disagreement between backprop and central differences.

    Relative error per entry is ``|a - c| / max(|a|, |c|, 1e-8)``. The
    finite differences run with parameters promoted to ``np.longdouble`` so
    that loss rounding does not swamp entries with gradients near 1e-8.
    A smaller epsilon is not better: at 1e-6 the rounding noise on a
    gradient that is exactly zero reaches about 1e-12, which the 1e-8 floor
    turns into a relative error near 1e-4. Parameter values are restored
    afterwards.
    """
    if epsilon <= 0:
        raise ValueError("grad_check: epsilon must be positive")
    params = list(params)
    if not params:
        return 0.0
    forward_backward(loss_fn, params)
    analytic = [p.grad.copy() for p in params]
    originals = [p.data for p in params]
    worst = 0.0
    try:
        for p in params:
            p.data = p.data.astype(EXTENDED)
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = loss_fn().data
                flat[i] = orig - epsilon
                down = loss_fn().data
                flat[i] = orig
                numeric = float((up - down) / (2 * EXTENDED(epsilon)))
                ai = float(a.reshape(-1)[i])
                err = abs(ai - numeric) / max(abs(ai), abs(numeric), 1e-8)
                worst = max(worst, err)
    finally:
        for p, orig in zip(params, originals):
            p.data = orig
    return worst


# ----------------------------------------------------------------------------
# checkpoints: <stem>.bin holds little-endian float64 data back to back,
# <stem>.manifest has one "name shape offset" line per array.


def _format_shape(shape: tuple[int, ...]) -> str:
    return "x".join(str(s) for s in shape) if shape else "-"


def _parse_shape(text: str) -> tuple[int, ...]:
    return () if text == "-" else tuple(int(s) for s in text.split("x"))


def save_arrays(stem, arrays: dict[str, np.ndarray]) -> None:
    stem = Path(stem)
    lines = []
    offset = 0
    with open(stem.with_suffix(".bin"), "wb") as fh:
        for name, arr in arrays.items():
            if not name or any(c.isspace() for c in name):
                raise ValueError(f"save_arrays: invalid array name {name!r}")
            arr = np.asarray(arr, dtype="<f8")
            fh.write(arr.tobytes(order="C"))
            lines.append(f"{name} {_format_shape(arr.shape)} {offset}\n")
            offset += arr.nbytes
    stem.with_suffix(".manifest").write_text("".join(lines))


def load_arrays(stem) -> dict[str, np.ndarray]:
    stem = Path(stem)
    blob = stem.with_suffix(".bin").read_bytes()
    out = {}
    for lineno, line in enumerate(stem.with_suffix(".manifest").read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            name, shape_text, offset_text = line.split()
            shape, offset = _parse_shape(shape_text), int(offset_text)
        except ValueError:
            raise ValueError(f"{stem}.manifest:{lineno}: malformed entry {line!r}") from None
        count = int(np.prod(shape)) if shape else 1
        out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(DTYPE)
    return out


def save_checkpoint(stem, params: Iterable[Parameter]) -> None:
    save_arrays(stem, {p.name: p.data for p in params})


def load_checkpoint(stem, params: Iterable[Parameter]) -> None:
    """Copy stored values into ``params`` by name; shapes must match."""
    stored = load_arrays(stem)
    for p in params:
        if p.name not in stored:
            raise KeyError(f"checkpoint {stem} has no parameter {p.name!r}")
        if stored[p.name].shape != p.shape:
            raise ShapeError(f"checkpoint {p.name}: stored {stored[p.name].shape} vs model {p.shape}")
        p.data = stored[p.name].copy()
        p.zero_grad()
