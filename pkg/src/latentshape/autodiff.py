"""Reverse-mode automatic differentiation over float64 numpy arrays.

Define-by-run: every operation records its parents and a backward closure on
the result node, so the graph *is* the tape.  ``Tensor.backward`` runs a
topological sweep and accumulates gradients into ``.grad``.  No global state;
identical inputs and seed give bit-identical values and gradients.

Conventions baked in here:
* everything is float64, row-major;
* ``relu`` uses subgradient 0 at 0, ``absolute`` uses sign(0) = 0;
* ``power(x, p)`` with fractional p requires x >= 0 and takes gradient 0 at
  x = 0 (the true one-sided derivative is unbounded there);
* shape mismatches raise ValueError naming the operation.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation graph: value, gradient slot, backward rule."""

    __slots__ = ("value", "grad", "_parents", "_backward", "trainable", "name")

    def __init__(self, value, trainable: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.trainable = trainable
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{tag})"

    # sugar; see the module-level functions for the actual rules
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, seed=None) -> None:
        """Accumulate d(self)/d(node) into node.grad for the whole graph.

        seed defaults to ones of self's shape (for a scalar loss, 1.0).
        Gradients add into any existing .grad, so zero parameter grads
        between steps.
        """
        if seed is None:
            seed = np.ones_like(self.value)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.value.shape:
                raise ValueError(
                    f"backward seed shape {seed.shape} does not match "
                    f"output shape {self.value.shape}")
        order = _topo_order(self)
        _accumulate(self, seed)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out._parents = parents
    out._backward = None
    out.trainable = False
    out.name = None
    return out


def _topo_order(root: Tensor) -> list:
    """Iterative postorder; deterministic given the graph."""
    order = []
    seen = set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def _accumulate(node: Tensor, g: np.ndarray) -> None:
    if node.grad is None:
        node.grad = g
    else:
        node.grad = node.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary_value(op: str, a: Tensor, b: Tensor, fn) -> np.ndarray:
    try:
        return fn(a.value, b.value)
    except ValueError as exc:
        raise ValueError(
            f"{op}: incompatible shapes {a.value.shape} and {b.value.shape}"
        ) from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting allowed; grads summed back down)

def add(a: Tensor, b: Tensor) -> Tensor:
    out = _node(_binary_value("add", a, b, np.add), (a, b))

    def rule():
        g = out.grad
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(g, b.value.shape))

    out._backward = rule
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _node(_binary_value("sub", a, b, np.subtract), (a, b))

    def rule():
        g = out.grad
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(-g, b.value.shape))

    out._backward = rule
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _node(_binary_value("mul", a, b, np.multiply), (a, b))

    def rule():
        g = out.grad
        _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    out._backward = rule
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    out = _node(_binary_value("div", a, b, np.divide), (a, b))

    def rule():
        g = out.grad
        _accumulate(a, _unbroadcast(g / b.value, a.value.shape))
        _accumulate(b, _unbroadcast(-g * a.value / (b.value * b.value),
                                    b.value.shape))

    out._backward = rule
    return out


def neg(a: Tensor) -> Tensor:
    out = _node(-a.value, (a,))

    def rule():
        _accumulate(a, -out.grad)

    out._backward = rule
    return out


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p for a constant real exponent.

    Fractional or negative exponents require a nonnegative / positive base.
    At base exactly 0 with 0 < p < 1 the gradient is taken as 0.
    """
    p = float(p)
    base = a.value
    if p != int(p) and np.any(base < 0.0):
        raise ValueError("power: fractional exponent needs base >= 0")
    if p < 0 and np.any(base == 0.0):
        raise ValueError("power: negative exponent needs base != 0")
    out = _node(base ** p, (a,))

    def rule():
        if p == int(p) and p >= 1:
            d = p * base ** (p - 1)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                d = p * base ** (p - 1)
            d = np.where(base == 0.0, 0.0, d)
        _accumulate(a, out.grad * d)

    out._backward = rule
    return out


def exp(a: Tensor) -> Tensor:
    out = _node(np.exp(a.value), (a,))

    def rule():
        _accumulate(a, out.grad * out.value)

    out._backward = rule
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.value <= 0.0):
        raise ValueError("log: domain requires strictly positive entries")
    out = _node(np.log(a.value), (a,))

    def rule():
        _accumulate(a, out.grad / a.value)

    out._backward = rule
    return out


def sin(a: Tensor) -> Tensor:
    out = _node(np.sin(a.value), (a,))

    def rule():
        _accumulate(a, out.grad * np.cos(a.value))

    out._backward = rule
    return out


def cos(a: Tensor) -> Tensor:
    out = _node(np.cos(a.value), (a,))

    def rule():
        _accumulate(a, -out.grad * np.sin(a.value))

    out._backward = rule
    return out


def absolute(a: Tensor) -> Tensor:
    out = _node(np.abs(a.value), (a,))

    def rule():
        _accumulate(a, out.grad * np.sign(a.value))

    out._backward = rule
    return out


def relu(a: Tensor) -> Tensor:
    out = _node(np.maximum(a.value, 0.0), (a,))

    def rule():
        _accumulate(a, out.grad * (a.value > 0.0))

    out._backward = rule
    return out


def tanh(a: Tensor) -> Tensor:
    out = _node(np.tanh(a.value), (a,))

    def rule():
        _accumulate(a, out.grad * (1.0 - out.value * out.value))

    out._backward = rule
    return out


def sigmoid(a: Tensor) -> Tensor:
    v = np.empty_like(a.value)
    pos = a.value >= 0
    v[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    ev = np.exp(a.value[~pos])
    v[~pos] = ev / (1.0 + ev)
    out = _node(v, (a,))

    def rule():
        _accumulate(a, out.grad * out.value * (1.0 - out.value))

    out._backward = rule
    return out


def clip(a: Tensor, lo: float | None, hi: float | None) -> Tensor:
    """Clamp values to [lo, hi]; gradient 1 inside the band, 0 outside."""
    out = _node(np.clip(a.value, lo, hi), (a,))
    inside = np.ones(a.value.shape, dtype=bool)
    if lo is not None:
        inside &= a.value >= lo
    if hi is not None:
        inside &= a.value <= hi

    def rule():
        _accumulate(a, out.grad * inside)

    out._backward = rule
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient goes to the first argument."""
    out = _node(_binary_value("minimum", a, b, np.minimum), (a, b))
    take_a = a.value <= b.value

    def rule():
        g = out.grad
        _accumulate(a, _unbroadcast(g * take_a, a.value.shape))
        _accumulate(b, _unbroadcast(g * ~take_a, b.value.shape))

    out._backward = rule
    return out


# ---------------------------------------------------------------------------
# linear algebra and reductions

def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ValueError(
            f"matmul: shapes {av.shape} and {bv.shape} are not (n,k)@(k,m)")
    out = _node(av @ bv, (a, b))

    def rule():
        g = out.grad
        _accumulate(a, g @ bv.T)
        _accumulate(b, av.T @ g)

    out._backward = rule
    return out


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = _node(a.value.sum(axis=axis, keepdims=keepdims), (a,))

    def rule():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.value.shape).copy())

    out._backward = rule
    return out


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.value.size if axis is None else a.value.shape[axis]
    if n == 0:
        raise ValueError("mean: empty axis")
    out = _node(a.value.mean(axis=axis, keepdims=keepdims), (a,))

    def rule():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g / n, a.value.shape).copy())

    out._backward = rule
    return out


def l2norm(a: Tensor, axis: int = -1, keepdims: bool = True) -> Tensor:
    """Euclidean norm along an axis.

    The backward guard max(norm, 1e-30) makes compositions like
    y / (norm + eps) differentiable at the origin with the correct limit.
    """
    nv = np.sqrt((a.value * a.value).sum(axis=axis, keepdims=True))
    out_v = nv if keepdims else np.squeeze(nv, axis=axis)
    out = _node(out_v, (a,))

    def rule():
        g = out.grad
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, g * a.value / np.maximum(nv, 1e-30))

    out._backward = rule
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _node(s, (a,))

    def rule():
        g = out.grad
        inner = (g * s).sum(axis=axis, keepdims=True)
        _accumulate(a, s * (g - inner))

    out._backward = rule
    return out


def cumsum(a: Tensor) -> Tensor:
    """Running sum of a 1-D tensor."""
    if a.value.ndim != 1:
        raise ValueError("cumsum: expects a 1-D tensor")
    out = _node(np.cumsum(a.value), (a,))

    def rule():
        _accumulate(a, np.cumsum(out.grad[::-1])[::-1].copy())

    out._backward = rule
    return out


# ---------------------------------------------------------------------------
# shape surgery

def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = _node(a.value.reshape(shape), (a,))

    def rule():
        _accumulate(a, out.grad.reshape(a.value.shape))

    out._backward = rule
    return out


def concat(parts: list, axis: int = -1) -> Tensor:
    if not parts:
        raise ValueError("concat: needs at least one tensor")
    vals = [p.value for p in parts]
    try:
        v = np.concatenate(vals, axis=axis)
    except ValueError as exc:
        raise ValueError(
            f"concat: incompatible shapes {[x.shape for x in vals]}") from exc
    out = _node(v, tuple(parts))
    sizes = [x.shape[axis] for x in vals]
    splits = np.cumsum(sizes)[:-1]

    def rule():
        for part, g in zip(parts, np.split(out.grad, splits, axis=axis)):
            _accumulate(part, g)

    out._backward = rule
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    dim = a.value.shape[axis]
    if not (0 <= start and start + length <= dim):
        raise ValueError(
            f"narrow: slice [{start}, {start + length}) out of range "
            f"for axis {axis} with size {dim}")
    index = [slice(None)] * a.value.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = _node(a.value[index].copy(), (a,))

    def rule():
        g = np.zeros_like(a.value)
        g[index] = out.grad
        _accumulate(a, g)

    out._backward = rule
    return out


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by an integer index array; scatter-add on the way back."""
    idx = np.asarray(idx)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("gather_rows: idx must be a 1-D integer array")
    if a.value.ndim < 1:
        raise ValueError("gather_rows: input must have rows")
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
        raise ValueError("gather_rows: index out of range")
    out = _node(a.value[idx].copy(), (a,))

    def rule():
        g = np.zeros_like(a.value)
        np.add.at(g, idx, out.grad)
        _accumulate(a, g)

    out._backward = rule
    return out


# ---------------------------------------------------------------------------
# checking

def gradients(output: Tensor, params: dict) -> dict:
    """Run backward from a scalar output; return {name: gradient array}."""
    if output.value.ndim != 0:
        raise ValueError("gradients: output must be a scalar tensor")
    for p in params.values():
        p.grad = None
    output.backward()
    return {k: (np.zeros_like(p.value) if p.grad is None else p.grad)
            for k, p in params.items()}


def finite_diff_check(fn, inputs: dict, h: float = 1e-5) -> float:
    """Compare reverse-mode gradients of fn against central differences.

    fn maps {name: Tensor} to a scalar Tensor.  Returns the maximum relative
    error max |a - n| / max(|a|, |n|, 1e-8) over all input entries.
    """
    tensors = {k: Tensor(np.asarray(v, dtype=np.float64), trainable=True)
               for k, v in inputs.items()}
    out = fn(tensors)
    if not isinstance(out, Tensor) or out.value.ndim != 0:
        raise ValueError("finite_diff_check: fn must return a scalar Tensor")
    grads = gradients(out, tensors)

    worst = 0.0
    for name, t in tensors.items():
        base = t.value
        g = grads[name]
        flat = base.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = fn({k: Tensor(v.value) for k, v in tensors.items()}).value
            flat[i] = keep - h
            dn = fn({k: Tensor(v.value) for k, v in tensors.items()}).value
            flat[i] = keep
            num = (float(up) - float(dn)) / (2.0 * h)
            ana = g.reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
