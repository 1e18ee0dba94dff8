"""Dense float64 tensors with reverse-mode gradients, plus SGD and Adam.

Every differentiable primitive returns a new :class:`Tensor` whose ``_op``
records the parents and a closure mapping the output adjoint to one adjoint
per parent.  :func:`backward` orders those records into a
:class:`ComputationTape`, replays them in reverse and then drops the records
so the next step starts from an empty graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DimensionError, LabelError, WindowError

DTYPE = np.float64


@dataclass
class _Op:
    name: str
    parents: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """A dense n-dimensional float64 array that can carry a gradient."""

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._op: _Op | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # operator sugar; the real work lives in the module-level primitives
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward, name: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._op = _Op(name, parents, backward) if out.requires_grad else None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and reductions
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def hadamard(weight, vec) -> Tensor:
    """Scale ``vec`` by ``weight``, broadcasting a scalar weight over each feature vector.

    ``weight`` is a scalar, a ``(B,)`` vector or a ``(B, 1)`` column; ``vec`` is
    ``(H,)`` or ``(B, H)``.
    """
    weight, vec = as_tensor(weight), as_tensor(vec)
    if weight.size == 1:
        weight = reshape(weight, ())
    elif vec.ndim == 2 and weight.shape in ((vec.shape[0],), (vec.shape[0], 1)):
        weight = reshape(weight, (vec.shape[0], 1))
    else:
        raise DimensionError(
            f"hadamard expects a scalar weight per feature vector, got {weight.shape} and {vec.shape}"
        )
    out = mul(weight, vec)
    if out._op is not None:
        out._op.name = "hadamard"
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out, dtype=DTYPE), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def flatten(x: Tensor, start_axis: int = 0) -> Tensor:
    """Collapse every axis from ``start_axis`` on (channel-major for ``C x T``)."""
    lead = x.shape[:start_axis]
    return reshape(x, lead + (int(np.prod(x.shape[start_axis:])),))


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(x.data[index], dtype=DTYPE), (x,), backward, "getitem")


# ---------------------------------------------------------------------------
# linear algebra and convolution
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid cross-correlation of ``x`` (``C_in x T`` or ``B x C_in x T``) with ``kernels``.

    ``kernels`` is ``C_out x C_in x K``; output length is ``(T - K) // stride + 1``.
    """
    if stride < 1:
        raise ConfigError(f"conv1d stride must be positive, got {stride}")
    batched = x.ndim == 3
    if x.ndim not in (2, 3):
        raise DimensionError(f"conv1d expects C_in x T or B x C_in x T input, got {x.shape}")
    xd = x.data if batched else x.data[None]
    n, c_in, t = xd.shape
    if kernels.ndim != 3 or kernels.shape[1] != c_in:
        raise DimensionError(f"conv1d kernel shape {kernels.shape} does not fit input {x.shape}")
    c_out, _, k = kernels.shape
    if bias.shape != (c_out,):
        raise DimensionError(f"conv1d bias shape {bias.shape}, expected ({c_out},)")
    if k > t:
        raise WindowError(f"conv1d kernel length {k} exceeds input length {t}")
    t_out = (t - k) // stride + 1

    cols = sliding_window_view(xd, k, axis=2)[:, :, ::stride, :]
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(n * t_out, c_in * k)
    wmat = kernels.data.reshape(c_out, c_in * k)
    out = (cols @ wmat.T).reshape(n, t_out, c_out).transpose(0, 2, 1) + bias.data[:, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        gb = g if batched else g[None]
        g2 = gb.transpose(0, 2, 1).reshape(n * t_out, c_out)
        dk = (g2.T @ cols).reshape(kernels.shape)
        db = gb.sum(axis=(0, 2))
        dcols = (g2 @ wmat).reshape(n, t_out, c_in, k)
        dx = np.zeros_like(xd)
        span = stride * (t_out - 1) + 1
        for j in range(k):
            dx[:, :, j : j + span : stride] += dcols[:, :, :, j].transpose(0, 2, 1)
        return (dx if batched else dx[0], dk, db)

    return _result(out if batched else out[0], (x, kernels, bias), backward, "conv1d")


def maxpool1d(x: Tensor, window: int, stride: int) -> Tensor:
    """Per-channel windowed maximum; ties route the adjoint to the first index."""
    if window < 1 or stride < 1:
        raise ConfigError(f"maxpool1d window and stride must be positive, got {window}, {stride}")
    batched = x.ndim == 3
    xd = x.data if batched else x.data[None]
    t = xd.shape[-1]
    if window > t:
        raise WindowError(f"maxpool1d window {window} exceeds input length {t}")
    t_out = (t - window) // stride + 1
    wins = sliding_window_view(xd, window, axis=2)[:, :, ::stride, :]
    arg = wins.argmax(axis=-1)
    out = np.take_along_axis(wins, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = g if batched else g[None]
        dx = np.zeros_like(xd)
        span = stride * (t_out - 1) + 1
        for j in range(window):
            dx[:, :, j : j + span : stride] += gb * (arg == j)
        return (dx if batched else dx[0],)

    return _result(out if batched else out[0], (x,), backward, "maxpool1d")


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _result(s, (x,), backward, "softmax")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat shape mismatch: {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tensors, backward, "concat")


def split(x: Tensor, extents: Sequence[int], axis: int = -1) -> list[Tensor]:
    extents = [int(e) for e in extents]
    if any(e < 1 for e in extents) or sum(extents) != x.shape[axis]:
        raise DimensionError(
            f"split extents {extents} do not sum to axis extent {x.shape[axis]}"
        )
    pieces = []
    start = 0
    ax = axis % x.ndim
    for e in extents:
        index = tuple([slice(None)] * ax + [slice(start, start + e)])
        piece = getitem(x, index)
        if piece._op is not None:
            piece._op.name = "split"
        pieces.append(piece)
        start += e
    return pieces


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of ``logits`` (``C`` or ``B x C``) against class indices."""
    single = logits.ndim == 1
    z = logits.data[None] if single else logits.data
    lab = np.atleast_1d(np.asarray(labels))
    if lab.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(lab, 1), 0)):
            raise LabelError(f"class labels must be integers, got {labels!r}")
        lab = lab.astype(np.int64)
    n, c = z.shape
    if lab.shape != (n,):
        raise DimensionError(f"{lab.shape[0]} labels for {n} logit rows")
    if np.any(lab < 0) or np.any(lab >= c):
        raise LabelError(f"class index out of range [0, {c}): {lab[(lab < 0) | (lab >= c)][0]}")
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    total = e.sum(axis=1, keepdims=True)
    lse = (m + np.log(total))[:, 0]
    picked = z[np.arange(n), lab]
    loss = np.asarray(np.mean(lse - picked), dtype=DTYPE)
    probs = e / total

    def backward(g):
        d = probs.copy()
        d[np.arange(n), lab] -= 1.0
        d *= g / n
        return (d[0] if single else d,)

    return _result(loss, (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

@dataclass
class ComputationTape:
    """The ops visited by one reverse pass, in execution (forward) order."""

    ops: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ops)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._op is not None:
            for parent in node._op.parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> ComputationTape:
    """Populate ``.grad`` on everything ``loss`` depends on and clear the recorded graph.

    Leaf gradients accumulate across calls until an optimizer step zeroes them.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.all(np.isfinite(loss.data)):
        raise ContractError("backward called on a non-finite loss")
    tape = ComputationTape()
    if not loss.requires_grad:
        return tape

    order = _topological(loss)
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._op is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node._op.parents, node._op.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            adjoint[key] = adjoint[key] + pg if key in adjoint else pg
    for node in order:
        if node._op is not None:
            tape.ops.append(node._op.name)
            node._op = None
    return tape


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

class Optimizer:
    """Shared bookkeeping: parameter list, learning rate and step counter."""

    kind = "base"

    def __init__(self, params: Iterable[Tensor], lr: float):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.step_count = 0

    def _grads(self) -> list[np.ndarray]:
        grads = []
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ContractError(f"parameter {p.name or i!r} has no gradient")
            grads.append(p.grad)
        return grads

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = self._grads()
        self.step_count += 1
        self._update(grads)
        self.zero_grad()

    def _update(self, grads: list[np.ndarray]) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    kind = "sgd"

    def _update(self, grads):
        for p, g in zip(self.params, grads):
            p.data -= self.lr * g


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _update(self, grads):
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, params: Iterable[Tensor], lr: float) -> Optimizer:
    kind = kind.lower()
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return SGD(params, lr=lr)
    raise ConfigError(f"unknown optimizer {kind!r}")


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

def numerical_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``t.data``."""
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
              floor: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central-difference gradients."""
    for t in inputs:
        t.grad = None
    backward(fn())
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, relative_error(analytic, numerical_grad(fn, t, h), floor))
        t.grad = None
    return worst
