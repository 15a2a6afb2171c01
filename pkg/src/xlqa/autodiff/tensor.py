"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus an optional backward record (parents and a
closure producing parent gradients from the output gradient).  backward()
walks the graph in reverse topological order, accumulating adjoints in a
per-call dictionary and folding them into .grad once per node at the end,
so calling backward twice without zeroing doubles leaf gradients exactly.

Graphs are per-batch: drop the loss reference and the whole record chain
is garbage collected.
"""

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (eval / detached forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # ---- construction helpers -------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward):
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---- backward pass ----------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        adjoint = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._backward is None:
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not (p.requires_grad or p._backward):
                    continue
                prev = adjoint.get(id(p))
                # Never mutate in place: closures may hand back shared arrays.
                adjoint[id(p)] = pg if prev is None else prev + pg

    # ---- arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        """Wrap a non-Tensor operand.  Python scalars adopt this tensor's
        float dtype (weak promotion); wrapping them as bare arrays would
        silently upcast float32 graphs to float64."""
        if isinstance(other, Tensor):
            return other
        if isinstance(other, (int, float)) and not isinstance(other, bool) \
                and np.issubdtype(self.data.dtype, np.floating):
            return Tensor(np.asarray(other, dtype=self.data.dtype))
        return Tensor(other)

    def __add__(self, other):
        other = self._coerce(other)
        data = self.data + other.data
        xs, os = self.data.shape, other.data.shape

        def bwd(g):
            return _unbroadcast(g, xs), _unbroadcast(g, os)

        return Tensor._from_op(data, (self, other), bwd)

    __radd__ = __add__

    def __mul__(self, other):
        other = self._coerce(other)
        data = self.data * other.data
        a, b = self.data, other.data

        def bwd(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._from_op(data, (self, other), bwd)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __truediv__(self, other):
        return self * self._coerce(other) ** -1.0

    def __rtruediv__(self, other):
        return self._coerce(other) * self ** -1.0

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise TypeError("only scalar exponents are supported")
        data = self.data ** p
        x = self.data

        def bwd(g):
            return (g * p * x ** (p - 1),)

        return Tensor._from_op(data, (self,), bwd)

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data @ other.data
        a, b = self.data, other.data

        def bwd(g):
            ga = _unbroadcast(g @ b.swapaxes(-1, -2), a.shape)
            gb = _unbroadcast(a.swapaxes(-1, -2) @ g, b.shape)
            return ga, gb

        return Tensor._from_op(data, (self, other), bwd)

    # ---- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            gg = g
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a % len(shape) for a in axes):
                    gg = np.expand_dims(gg, ax)
            return (np.broadcast_to(gg, shape).copy(),)

        return Tensor._from_op(data, (self,), bwd)

    def max(self, axis):
        """Max-reduce one axis; gradient flows to the (first) argmax."""
        idx = self.data.argmax(axis=axis)
        expanded = np.expand_dims(idx, axis)
        data = np.take_along_axis(self.data, expanded, axis).squeeze(axis=axis)
        shape = self.data.shape

        def bwd(g):
            gx = np.zeros(shape, dtype=g.dtype)
            np.put_along_axis(gx, expanded, np.expand_dims(g, axis), axis)
            return (gx,)

        return Tensor._from_op(data, (self,), bwd)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # ---- elementwise -------------------------------------------------------

    def exp(self):
        data = np.exp(self.data)

        def bwd(g):
            return (g * data,)

        return Tensor._from_op(data, (self,), bwd)

    def log(self):
        data = np.log(self.data)
        x = self.data

        def bwd(g):
            return (g / x,)

        return Tensor._from_op(data, (self,), bwd)

    def tanh(self):
        data = np.tanh(self.data)

        def bwd(g):
            return (g * (1.0 - data * data),)

        return Tensor._from_op(data, (self,), bwd)

    def sigmoid(self):
        # exp of -|x| cannot overflow, so both halves stay finite
        z = np.exp(-np.abs(self.data))
        data = np.where(self.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

        def bwd(g):
            return (g * data * (1.0 - data),)

        return Tensor._from_op(data, (self,), bwd)

    def relu(self):
        data = np.maximum(self.data, 0.0)
        keep = self.data > 0

        def bwd(g):
            return (g * keep,)

        return Tensor._from_op(data, (self,), bwd)

    def clip(self, lo, hi):
        """Clamp values; gradient passes only through unclamped entries."""
        data = np.clip(self.data, lo, hi)
        inside = ((self.data > lo) & (self.data < hi)).astype(self.data.dtype)

        def bwd(g):
            return (g * inside,)

        return Tensor._from_op(data, (self,), bwd)

    def leaky_relu(self, alpha=0.2):
        pos = self.data > 0
        data = np.where(pos, self.data, alpha * self.data)
        scale = np.where(pos, 1.0, alpha).astype(self.data.dtype)

        def bwd(g):
            return (g * scale,)

        return Tensor._from_op(data, (self,), bwd)

    # ---- shape manipulation -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = self.data.reshape(shape)
        orig = self.data.shape

        def bwd(g):
            return (g.reshape(orig),)

        return Tensor._from_op(data, (self,), bwd)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        data = self.data.transpose(axes)
        inv = tuple(np.argsort(axes))

        def bwd(g):
            return (g.transpose(inv),)

        return Tensor._from_op(data, (self,), bwd)

    def swapaxes(self, a, b):
        data = self.data.swapaxes(a, b)

        def bwd(g):
            return (g.swapaxes(a, b),)

        return Tensor._from_op(data, (self,), bwd)

    def __getitem__(self, idx):
        data = self.data[idx]
        shape = self.data.shape

        def bwd(g):
            gx = np.zeros(shape, dtype=g.dtype)
            np.add.at(gx, idx, g)
            return (gx,)

        return Tensor._from_op(data, (self,), bwd)


def cat(tensors, axis=0):
    """Concatenate tensors along an axis (differentiable)."""
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(data, tuple(tensors), bwd)
