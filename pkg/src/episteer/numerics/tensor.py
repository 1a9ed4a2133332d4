"""Dense float64 tensors with a reverse-mode gradient tape.

Every op returns a new :class:`Tensor` holding its parents and a closure that
maps the output gradient to parent gradients. Nodes that do not depend on a
trainable :class:`Parameter` carry no closure and are treated as constants, so
frozen weights and :func:`stop_gradient` outputs act as barriers.

Broadcasting is limited to adding a row vector onto every row of a matrix.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NonFiniteError",
    "Tensor",
    "Parameter",
    "as_tensor",
    "stop_gradient",
    "affine",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "square",
    "sigmoid",
    "tanh",
    "relu",
    "leaky_relu",
    "sum_all",
    "mean_all",
    "sum_rows",
    "concat",
    "take_rows",
    "reshape",
    "transpose",
    "backward",
]


class NonFiniteError(ArithmeticError):
    """Raised when an op produces NaN or Inf."""


class Tensor:
    __slots__ = ("value", "parents", "grad_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), grad_fn=None, name=None):
        value = np.asarray(value, dtype=np.float64)
        if not np.isfinite(value).all():
            raise NonFiniteError(f"non-finite value in {name or 'tensor'}")
        self.value = value
        self.name = name
        self.requires_grad = grad_fn is not None
        self.parents = parents if self.requires_grad else ()
        self.grad_fn = grad_fn

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return self.value.shape[0]

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.value.copy()

    def item(self):
        if self.value.size != 1:
            raise ValueError(f"tensor of shape {self.value.shape} is not a scalar")
        return float(self.value.reshape(-1)[0])

    __array_priority__ = 100

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


class Parameter(Tensor):
    """Leaf tensor that accumulates gradients.

    ``trainable=False`` freezes it: ops treat it as a constant and its grad
    stays at zero.
    """

    __slots__ = ("grad", "trainable")

    def __init__(self, value, name=None, trainable=True):
        super().__init__(np.array(value, dtype=np.float64), name=name)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable
        self.requires_grad = trainable

    @property
    def shape(self):
        return self.value.shape

    def freeze(self):
        self.trainable = False
        self.requires_grad = False
        self.grad[...] = 0.0

    def unfreeze(self):
        self.trainable = True
        self.requires_grad = True

    def zero_grad(self):
        self.grad[...] = 0.0

    def assign(self, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.value.shape:
            raise ValueError(f"shape {value.shape} does not match {self.value.shape}")
        self.value[...] = value

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape}, trainable={self.trainable})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, grad_fn, name):
    if any(p.requires_grad for p in parents):
        return Tensor(value, parents, grad_fn, name)
    return Tensor(value, name=name)


def stop_gradient(x):
    """Same value, no path back to ``x``."""
    return Tensor(as_tensor(x).value, name="stop_gradient")


def _unbroadcast(grad, shape):
    # only the row-vector-onto-matrix case is supported
    if grad.shape == shape:
        return grad
    if len(shape) == 1 and grad.ndim == 2 and grad.shape[1] == shape[0]:
        return grad.sum(axis=0)
    if len(shape) == 2 and shape[0] == 1 and grad.ndim == 2:
        return grad.sum(axis=0, keepdims=True)
    if shape == () or shape == (1,):
        return np.asarray(grad.sum()).reshape(shape)
    raise ValueError(f"cannot reduce gradient of shape {grad.shape} to {shape}")


def _check_broadcast(a, b, op):
    sa, sb = a.value.shape, b.value.shape
    if sa == sb or sb == () or sa == ():
        return
    if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
        return
    if len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]:
        return
    if len(sa) == 2 and len(sb) == 2 and sa[1] == sb[1] and 1 in (sa[0], sb[0]):
        return
    raise ValueError(f"{op}: incompatible shapes {sa} and {sb}")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.value.shape, b.value.shape
    return _node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        "add",
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.value.shape, b.value.shape
    return _node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)),
        "sub",
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return _node(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "mul",
    )


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _node(a.value * c, (a,), lambda g: (g * c,), "scale")


def neg(a):
    return scale(a, -1.0)


def square(a):
    a = as_tensor(a)
    av = a.value
    return _node(av * av, (a,), lambda g: (2.0 * av * g,), "square")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")

    def grad_fn(g):
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return _node(av @ bv, (a, b), grad_fn, "matmul")


def affine(x, w, b=None):
    """``x @ w.T + b`` for a batch ``x`` of shape (n, in) and ``w`` of shape (out, in)."""
    x, w = as_tensor(x), as_tensor(w)
    xv, wv = x.value, w.value
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[1]:
        raise ValueError(f"affine: input {xv.shape} does not fit weight {wv.shape}")
    out = xv @ wv.T
    if b is None:
        return _node(out, (x, w), lambda g: (g @ wv, g.T @ xv), "affine")
    b = as_tensor(b)
    if b.value.shape != (wv.shape[0],):
        raise ValueError(f"affine: bias {b.value.shape} does not fit weight {wv.shape}")
    return _node(
        out + b.value,
        (x, w, b),
        lambda g: (g @ wv, g.T @ xv, g.sum(axis=0)),
        "affine",
    )


def sigmoid(a):
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.value)
    return _node(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def relu(a):
    a = as_tensor(a)
    mask = a.value > 0
    return _node(a.value * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope=0.01):
    a = as_tensor(a)
    d = np.where(a.value > 0, 1.0, slope)
    return _node(a.value * d, (a,), lambda g: (g * d,), "leaky_relu")


def sum_all(a):
    a = as_tensor(a)
    shape = a.value.shape
    return _node(np.asarray(a.value.sum()), (a,), lambda g: (np.full(shape, float(g)),), "sum")


def mean_all(a):
    a = as_tensor(a)
    shape = a.value.shape
    n = max(a.value.size, 1)
    return _node(
        np.asarray(a.value.mean() if a.value.size else 0.0),
        (a,),
        lambda g: (np.full(shape, float(g) / n),),
        "mean",
    )


def sum_rows(a):
    """Row-wise sum of a matrix, giving a vector of length n."""
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise ValueError("sum_rows expects a matrix")
    m = a.value.shape[1]
    return _node(a.value.sum(axis=1), (a,), lambda g: (np.repeat(g[:, None], m, axis=1),), "sum_rows")


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    values = [t.value for t in tensors]
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])

    def grad_fn(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(values))
        )

    return _node(out, tuple(tensors), grad_fn, "concat")


def take_rows(a, idx):
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    shape = a.value.shape

    def grad_fn(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.value[idx], (a,), grad_fn, "take_rows")


def reshape(a, shape):
    a = as_tensor(a)
    old = a.value.shape
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a):
    a = as_tensor(a)
    return _node(a.value.T, (a,), lambda g: (g.T,), "transpose")


def _topo_order(root):
    order = []
    state = {}  # id -> 1 visiting, 2 done
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        s = state.get(key)
        if s == 2:
            continue
        if s == 1:
            raise RuntimeError("computation graph contains a cycle")
        state[key] = 1
        stack.append((node, True))
        for p in node.parents:
            if not p.requires_grad:
                continue
            ps = state.get(id(p))
            if ps == 1:
                raise RuntimeError("computation graph contains a cycle")
            if ps is None:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(param) into ``.grad`` of every reachable trainable Parameter."""
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad += g
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
