"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: every operation returns a new `Tensor` carrying the result,
its parents, and a closure that routes an incoming gradient back to those
parents. Calling `backward()` on a scalar walks the graph once in reverse
topological order and accumulates gradients into every reachable node that
has `requires_grad` set. All data is float64; gradients of broadcast
operands are summed back down to the operand's shape.
"""

import numpy as np

__all__ = ["Tensor", "sin", "cos", "exp", "log", "sqrt", "tanh", "sigmoid", "relu"]


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad, shape):
    """Sum gradient contributions back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _result(data, parents):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


class Tensor:
    """Node in the computation graph; wraps a float64 numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros(self.data.shape, dtype=np.float64)
        self.grad += grad

    def backward(self):
        """Backpropagate from a scalar result; fills `.grad` on reachable nodes."""
        if self.data.shape != ():
            raise ValueError("backward() is only defined for scalar results")
        if not self.requires_grad:
            return
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = _result(self.data + other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tensor(other)
        out = _result(self.data - other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(-g, other.data.shape))
            out._backward = backward
        return out

    def __rsub__(self, other):
        return _as_tensor(other).__sub__(self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = _result(self.data * other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out = _result(self.data / other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data), other.data.shape))
            out._backward = backward
        return out

    def __rtruediv__(self, other):
        return _as_tensor(other).__truediv__(self)

    def __neg__(self):
        out = _result(-self.data, (self,))
        if out.requires_grad:
            def backward(g):
                self._accumulate(-g)
            out._backward = backward
        return out

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, np.integer)):
            raise TypeError("Tensor exponent must be an integer")
        n = int(exponent)
        if n == 0:
            return Tensor(np.ones_like(self.data))
        out = _result(self.data ** n, (self,))
        if out.requires_grad:
            def backward(g):
                self._accumulate(g * n * self.data ** (n - 1))
            out._backward = backward
        return out

    def __matmul__(self, other):
        other = _as_tensor(other)
        out = _result(self.data @ other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(g @ other.data.T)
                if other.requires_grad:
                    other._accumulate(self.data.T @ g)
            out._backward = backward
        return out

    # -- shape / reductions --------------------------------------------------

    def reshape(self, shape):
        out = _result(self.data.reshape(shape), (self,))
        if out.requires_grad:
            def backward(g):
                self._accumulate(g.reshape(self.data.shape))
            out._backward = backward
        return out

    def sum(self):
        out = _result(np.asarray(self.data.sum()), (self,))
        if out.requires_grad:
            def backward(g):
                self._accumulate(np.full(self.data.shape, float(g)))
            out._backward = backward
        return out

    def mean(self):
        size = self.data.size
        out = _result(np.asarray(self.data.mean()), (self,))
        if out.requires_grad:
            def backward(g):
                self._accumulate(np.full(self.data.shape, float(g) / size))
            out._backward = backward
        return out

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _unary(x, data, local):
    out = _result(data, (x,))
    if out.requires_grad:
        def backward(g):
            x._accumulate(g * local())
        out._backward = backward
    return out


def sin(x):
    x = _as_tensor(x)
    return _unary(x, np.sin(x.data), lambda: np.cos(x.data))


def cos(x):
    x = _as_tensor(x)
    return _unary(x, np.cos(x.data), lambda: -np.sin(x.data))


def exp(x):
    x = _as_tensor(x)
    with np.errstate(over="ignore"):
        data = np.exp(x.data)
    return _unary(x, data, lambda: data)


def log(x):
    x = _as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(x.data)
    return _unary(x, data, lambda: 1.0 / x.data)


def sqrt(x):
    x = _as_tensor(x)
    with np.errstate(invalid="ignore"):
        data = np.sqrt(x.data)
    return _unary(x, data, lambda: 0.5 / data)


def tanh(x):
    x = _as_tensor(x)
    data = np.tanh(x.data)
    return _unary(x, data, lambda: 1.0 - data * data)


def sigmoid(x):
    x = _as_tensor(x)
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-x.data))
    return _unary(x, data, lambda: data * (1.0 - data))


def relu(x):
    x = _as_tensor(x)
    return _unary(x, np.maximum(x.data, 0.0), lambda: (x.data > 0.0).astype(np.float64))
