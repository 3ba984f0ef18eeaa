"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` records the operation that produced it; calling
:meth:`Tensor.backward` on a scalar result walks the recorded graph in
reverse topological order and accumulates adjoints into every tensor that
requires a gradient.

Broadcasting is deliberately narrow: operands of elementwise primitives must
have equal shapes, or one of them is a scalar, or one of them is a vector
whose length matches the other's last axis (matrix-vector).  Anything else
needs an explicit reshape.

:class:`Graph` wraps a tensor-building function with named inputs and named
parameters, which is the form :func:`finite_difference_check` consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import BindingError, ContractError, NonFiniteError, ShapeError, StateError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")
    # make ndarray <op> Tensor defer to Tensor's reflected operators
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None, *, _parents=(), _op="leaf",
                 _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"{_op}: non-finite values in tensor")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = _op
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(op={self.op}, shape={self.shape})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad=None):
        """Propagate ``grad`` (default 1 for scalar outputs) to every ancestor."""
        if grad is None:
            if self.data.size != 1:
                raise ContractError("backward() without an adjoint needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(f"adjoint shape {grad.shape} != output shape {self.shape}")
        order = _toposort(self)
        for node in order:
            node.grad = None
        self.grad = grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
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
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("div: only division by a python scalar is supported")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, op, backward):
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, _parents=tuple(parents), _op=op,
                  _backward=backward if requires else None)


# ---------------------------------------------------------------- elementwise

def _check_broadcast(a, b, op):
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return
    if a.ndim == 1 and b.ndim >= 1 and b.shape[-1] == a.shape[0]:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    return g.reshape(-1, shape[0]).sum(axis=0)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), "add", backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), "sub", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), "mul", backward)


def scale(a, c):
    """Multiply by a constant python scalar."""
    a, c = as_tensor(a), float(c)
    return _result(a.data * c, (a,), "scale", lambda g: a._accumulate(g * c))


def sigmoid(a):
    a = as_tensor(a)
    # split by sign so exp never overflows
    x = a.data
    ex = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _result(y, (a,), "sigmoid", lambda g: a._accumulate(g * y * (1.0 - y)))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _result(y, (a,), "tanh", lambda g: a._accumulate(g * (1.0 - y * y)))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    return _result(y, (a,), "exp", lambda g: a._accumulate(g * y))


def log(a):
    a = as_tensor(a)
    if (a.data <= 0).any():
        raise NonFiniteError("log: non-positive argument")
    return _result(np.log(a.data), (a,), "log", lambda g: a._accumulate(g / a.data))


def clip_min(a, lo):
    """``max(a, lo)`` with the gradient passed only where ``a > lo``."""
    a = as_tensor(a)
    mask = a.data > lo
    return _result(np.where(mask, a.data, lo), (a,), "clip_min",
                   lambda g: a._accumulate(g * mask))


# ----------------------------------------------------------------- reductions

def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _result(a.data.sum(axis=axis), (a,), "sum", backward)


def mean(a, axis=None):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / n)


# ----------------------------------------------------------------- structural

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        A = a.data if a.ndim == 2 else a.data[None, :]
        B = b.data if b.ndim == 2 else b.data[:, None]
        G = g.reshape(A.shape[0], B.shape[1])
        if a.requires_grad:
            a._accumulate((G @ B.T).reshape(a.shape))
        if b.requires_grad:
            b._accumulate((A.T @ G).reshape(b.shape))

    return _result(a.data @ b.data, (a, b), "matmul", backward)


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _result(a.data.T, (a,), "transpose", lambda g: a._accumulate(g.T))


def reshape(a, shape):
    a = as_tensor(a)
    try:
        y = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    return _result(y, (a,), "reshape", lambda g: a._accumulate(g.reshape(a.shape)))


def flatten(a, start_axis=0):
    """Collapse every axis from ``start_axis`` on into one."""
    a = as_tensor(a)
    return reshape(a, a.shape[:start_axis] + (-1,))


def getitem(a, index):
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        a._accumulate(out)

    return _result(a.data[index], (a,), "getitem", backward)


def concat(tensors: Sequence[Tensor], axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            t._accumulate(piece)

    return _result(y, tensors, "concat", backward)


def stack(tensors: Sequence[Tensor], axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from None

    def backward(g):
        for k, t in enumerate(tensors):
            t._accumulate(np.take(g, k, axis=axis))

    return _result(y, tensors, "stack", backward)


def einsum(subscripts: str, a, b):
    """Two-operand einsum with explicit output, e.g. ``"mjdk,bmk->bmjd"``.

    Every index of an operand must appear in the other operand or in the
    output; repeated indices within one operand are not supported.
    """
    a, b = as_tensor(a), as_tensor(b)
    try:
        lhs, out = subscripts.replace(" ", "").split("->")
        sa, sb = lhs.split(",")
    except ValueError:
        raise ShapeError(f"einsum: need explicit 'x,y->z' subscripts, got {subscripts!r}") from None
    for s, other in ((sa, sb + out), (sb, sa + out)):
        if len(set(s)) != len(s) or any(ch not in other for ch in s):
            raise ShapeError(f"einsum: unsupported subscripts {subscripts!r}")
    try:
        y = np.einsum(f"{sa},{sb}->{out}", a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"einsum: {exc}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.einsum(f"{out},{sb}->{sa}", g, b.data))
        if b.requires_grad:
            b._accumulate(np.einsum(f"{out},{sa}->{sb}", g, a.data))

    return _result(y, (a, b), "einsum", backward)


# ------------------------------------------------------------ vector functions

def softmax(a, axis=-1, negate=False):
    """Max-shifted softmax; ``negate=True`` gives softmin, i.e. softmax(-a)."""
    a = as_tensor(a)
    x = -a.data if negate else a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)
    sign = -1.0 if negate else 1.0

    def backward(g):
        a._accumulate(sign * y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _result(y, (a,), "softmax", backward)


def norm(a, axis=-1):
    """Euclidean norm along ``axis``; the subgradient at zero is taken as 0."""
    a = as_tensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=axis))

    def backward(g):
        nk = np.expand_dims(n, axis)
        unit = np.divide(a.data, nk, out=np.zeros_like(a.data), where=nk > 0)
        a._accumulate(np.expand_dims(g, axis) * unit)

    return _result(n, (a,), "norm", backward)


def squash(a, axis=-1):
    """Capsule nonlinearity ``|s|^2/(1+|s|^2) * s/|s|`` with squash(0) = 0."""
    a = as_tensor(a)
    s = a.data
    n = np.sqrt((s * s).sum(axis=axis, keepdims=True))
    f = n / (1.0 + n * n)
    y = f * s
    # d/dn of n/(1+n^2), divided by n; the s s^T term vanishes at n = 0
    k = np.divide((1.0 - n * n) / (1.0 + n * n) ** 2, n, out=np.zeros_like(n), where=n > 0)

    def backward(g):
        a._accumulate(f * g + k * s * (s * g).sum(axis=axis, keepdims=True))

    return _result(y, (a,), "squash", backward)


# ---------------------------------------------------------------------- graph

@dataclass
class Graph:
    """A differentiable computation with named inputs and named parameters.

    ``fn(inputs, params)`` receives dicts of tensors and returns the output
    tensor (or a tuple of tensors; gradients are taken of the first).
    Parameter arrays are held by reference, so callers may perturb them
    between forward passes.
    """

    fn: Callable[[Mapping[str, Tensor], Mapping[str, Tensor]], Tensor]
    params: dict
    inputs: tuple = ()
    _param_nodes: dict = field(default=None, init=False, repr=False)
    _output: Tensor = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in self.params.items()}

    def forward(self, bindings: Mapping[str, object] | None = None):
        bindings = dict(bindings or {})
        missing = [name for name in self.inputs if name not in bindings]
        if missing:
            raise BindingError(f"unbound graph inputs: {', '.join(missing)}")
        inputs = {k: as_tensor(v) for k, v in bindings.items()}
        self._param_nodes = {k: Tensor(v, requires_grad=True, name=k)
                             for k, v in self.params.items()}
        out = self.fn(inputs, self._param_nodes)
        self._output = out
        if isinstance(out, tuple):
            return tuple(o.data for o in out)
        return out.data

    def backward(self, output_adjoint=None) -> dict:
        if self._output is None:
            raise StateError("backward() called before forward()")
        out = self._output[0] if isinstance(self._output, tuple) else self._output
        out.backward(output_adjoint)
        return {k: (node.grad if node.grad is not None else np.zeros_like(node.data))
                for k, node in self._param_nodes.items()}


@dataclass
class GradCheckReport:
    max_rel_error: dict
    tolerance: float
    checked_entries: dict

    @property
    def passed(self):
        return all(err <= self.tolerance for err in self.max_rel_error.values())

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(analytic, numeric, floor=1e-3):
    """``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is ~0 from dividing
    round-off noise by round-off noise.
    """
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def finite_difference_check(graph: Graph, bindings=None, tolerance=1e-4, h=1e-6,
                            max_entries=None, seed=0, floor=1e-3) -> GradCheckReport:
    """Compare analytic gradients against central differences, per parameter.

    ``max_entries`` caps how many entries of each parameter are probed
    (sampled without replacement using ``seed``); ``None`` probes all.
    """
    out = graph.forward(bindings)
    if isinstance(out, tuple):
        out = out[0]
    if np.size(out) != 1:
        raise ContractError(f"finite_difference_check needs a scalar output, got shape {np.shape(out)}")
    grads = graph.backward()
    rng = np.random.default_rng(seed)
    errors, counts = {}, {}
    for name, param in graph.params.items():
        flat = param.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = _scalar(graph.forward(bindings))
            flat[i] = orig - h
            f_minus = _scalar(graph.forward(bindings))
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            worst = max(worst, float(relative_error(grads[name].reshape(-1)[i], numeric, floor)))
        errors[name] = worst
        counts[name] = len(idx)
    return GradCheckReport(errors, tolerance, counts)


def _scalar(out):
    if isinstance(out, tuple):
        out = out[0]
    return float(np.asarray(out).reshape(()))
