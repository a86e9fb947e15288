# comix/nn/tensor.py: reverse-mode автодифференцирование поверх numpy (float64)
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractViolation, GraphError

DTYPE = np.float64

# ---------- Режим записи графа ----------

_grad_enabled = True


@contextmanager
def no_grad():
    """Внутри блока операции не записываются в граф (прямой проход «для чтения»)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


# ---------- Вспомогательное ----------

def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Сворачивает градиент обратно к форме операнда после numpy-бродкастинга."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _result(data: np.ndarray, parents: Sequence["Tensor"], op: str,
            backward: Callable[[np.ndarray], None]) -> "Tensor":
    out = Tensor(data)
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------- Tensor ----------

class Tensor:
    """
    Узел вычислительного графа: значение, градиент и замыкание обратного прохода.
    Листья с requires_grad=True - это обучаемые параметры.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")
    __array_ufunc__ = None  # numpy-операнд слева отдаёт управление нашим __r*__

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.op = ""
        self.name = name

    # --- свойства ---

    @property
    def shape(self) -> Tuple[int, ...]:
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
        if self.data.size != 1:
            raise ContractViolation(f"item() только для одного элемента, форма {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad = self.grad + g

    # --- арифметика ---

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def _bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return _result(a.data + b.data, (a, b), "add", _bw)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self

        def _bw(g):
            a._accumulate(-g)
        return _result(-a.data, (a,), "neg", _bw)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def _bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        return _result(a.data * b.data, (a, b), "mul", _bw)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        return self * other ** -1.0

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) * self ** -1.0

    def __pow__(self, p: float) -> "Tensor":
        if isinstance(p, Tensor):
            raise ContractViolation("поддерживается только скалярная степень")
        a = self
        p = float(p)

        def _bw(g):
            a._accumulate(g * p * a.data ** (p - 1.0))
        return _result(a.data ** p, (a,), f"pow{p:g}", _bw)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ContractViolation(f"matmul ожидает ndim >= 2, получено {a.shape} @ {b.shape}")

        def _bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
        return _result(a.data @ b.data, (a, b), "matmul", _bw)

    def __rmatmul__(self, other) -> "Tensor":
        return as_tensor(other) @ self

    # --- редукции ---

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def _bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))
        return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", _bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int = -1) -> "Tensor":
        """Максимум по оси; градиент уходит в первый максимальный элемент."""
        a = self
        idx = np.argmax(a.data, axis=axis)

        def _bw(g):
            full = np.zeros_like(a.data)
            np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
            a._accumulate(full)
        return _result(np.max(a.data, axis=axis), (a,), "max", _bw)

    # --- поэлементные функции ---

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0

        def _bw(g):
            a._accumulate(g * mask)
        return _result(a.data * mask, (a,), "relu", _bw)

    def sigmoid(self) -> "Tensor":
        a = self
        y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)

        def _bw(g):
            a._accumulate(g * y * (1.0 - y))
        return _result(y, (a,), "sigmoid", _bw)

    def tanh(self) -> "Tensor":
        a = self
        y = np.tanh(a.data)

        def _bw(g):
            a._accumulate(g * (1.0 - y * y))
        return _result(y, (a,), "tanh", _bw)

    def elu(self) -> "Tensor":
        a = self
        neg = a.data < 0
        ex = np.exp(np.minimum(a.data, 0.0))
        y = np.where(neg, ex - 1.0, a.data)

        def _bw(g):
            a._accumulate(g * np.where(neg, ex, 1.0))
        return _result(y, (a,), "elu", _bw)

    def abs(self) -> "Tensor":
        a = self
        sign = np.sign(a.data)

        def _bw(g):
            a._accumulate(g * sign)
        return _result(np.abs(a.data), (a,), "abs", _bw)

    def exp(self) -> "Tensor":
        a = self
        y = np.exp(a.data)

        def _bw(g):
            a._accumulate(g * y)
        return _result(y, (a,), "exp", _bw)

    def softmax(self, axis: int = -1) -> "Tensor":
        a = self
        z = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)

        def _bw(g):
            a._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))
        return _result(y, (a,), "softmax", _bw)

    # --- форма ---

    def reshape(self, *shape) -> "Tensor":
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def _bw(g):
            a._accumulate(g.reshape(a.shape))
        return _result(a.data.reshape(shape), (a,), "reshape", _bw)

    def swapaxes(self, ax1: int, ax2: int) -> "Tensor":
        a = self

        def _bw(g):
            a._accumulate(np.swapaxes(g, ax1, ax2))
        return _result(np.swapaxes(a.data, ax1, ax2), (a,), "swapaxes", _bw)

    def __getitem__(self, idx) -> "Tensor":
        a = self

        def _bw(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full)
        return _result(a.data[idx], (a,), "getitem", _bw)

    # --- обратный проход ---

    def _topo(self) -> list:
        """Топологический порядок без рекурсии; цикл в графе - GraphError."""
        order: list = []
        state: dict = {}
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            key = id(node)
            if done:
                state[key] = 2
                order.append(node)
                continue
            st = state.get(key, 0)
            if st == 2:
                continue
            if st == 1:
                raise GraphError(f"цикл в графе на узле {node.op or node.name}")
            state[key] = 1
            stack.append((node, True))
            for p in node._parents:
                ps = state.get(id(p), 0)
                if ps == 1:
                    raise GraphError(f"цикл в графе: {node.op} -> {p.op or p.name}")
                if ps == 0:
                    stack.append((p, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Заполняет .grad у всех достижимых узлов с requires_grad."""
        if grad is None and self.size != 1:
            raise ContractViolation(f"backward без grad требует скаляр, форма {self.shape}")
        if not self.requires_grad:
            return
        order = self._topo()
        self._accumulate(np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=DTYPE))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)
            # промежуточные градиенты больше не нужны; листья сохраняют свои
            node.grad = None


# ---------- Функции над несколькими тензорами ----------

def stop_gradient(t) -> Tensor:
    """stop(v): то же значение, но градиент через него не течёт."""
    t = as_tensor(t)
    out = Tensor(t.data)
    out.op = "stop"
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(int(lo), int(hi))
                t._accumulate(g[tuple(sl)])
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat", _bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def _bw(g):
        for k, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, k, axis=axis))
    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, "stack", _bw)
