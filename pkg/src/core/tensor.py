"""
Tensor dày đặc trên numpy với vi phân ngược (reverse-mode autodiff).

Mỗi phép toán khả vi tạo một Tensor mới giữ tham chiếu tới input (parents)
và một hàm backward trả về gradient cho từng parent. Tape được dựng lại từ
loss lúc gọi backward(): các node với tới được, sắp theo thứ tự thực thi,
rồi duyệt ngược (thứ tự topo ngược), mỗi node đúng một lần.
"""
import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import DimensionError, NumericError, UsageError

_SEQ = itertools.count()
_STATE = {"grad_enabled": True, "dtype": np.dtype(np.float64)}

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


# -------------------------------------------------------------------
# Trạng thái toàn cục: dtype mặc định, bật/tắt ghi graph
# -------------------------------------------------------------------

def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"Unsupported dtype: {dtype}")
    _STATE["dtype"] = dtype


def get_default_dtype() -> np.dtype:
    return _STATE["dtype"]


def is_grad_enabled() -> bool:
    return _STATE["grad_enabled"]


@contextmanager
def no_grad():
    previous = _STATE["grad_enabled"]
    _STATE["grad_enabled"] = False
    try:
        yield
    finally:
        _STATE["grad_enabled"] = previous


# -------------------------------------------------------------------
# Tensor
# -------------------------------------------------------------------

class Tensor:
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data)
        if arr.dtype != _STATE["dtype"]:
            arr = arr.astype(_STATE["dtype"])
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable] = None
        self._seq = next(_SEQ)

    # --- thuộc tính ---
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def values(self) -> np.ndarray:
        return self.data.reshape(-1)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> "Tape":
        return backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # --- toán tử ---
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __pow__(self, exponent: float): return power(self, exponent)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __getitem__(self, index): return getitem(self, index)

    # --- phương thức tiện lợi ---
    def sum(self, axis=None, keepdims: bool = False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)
    def transpose(self, *axes): return transpose(self, axes if axes else None)
    def swapaxes(self, a: int, b: int): return swapaxes(self, a, b)
    def exp(self): return exp(self)
    def log(self): return log(self)
    def relu(self): return relu(self)


class Parameter(Tensor):
    """Tensor lá có requires_grad=True, được Module liệt kê làm tham số."""

    def __init__(self, data: ArrayLike, requires_grad: bool = True, name: Optional[str] = None):
        super().__init__(data, requires_grad=requires_grad, name=name)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if _STATE["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, size in enumerate(shape):
        if size == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# -------------------------------------------------------------------
# Tape + backward
# -------------------------------------------------------------------

class Tape:
    """Bản ghi có thứ tự các node khả vi với tới được từ một loss."""

    def __init__(self, nodes: Iterable[Tensor]):
        self.nodes: List[Tensor] = list(nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_loss(cls, loss: Tensor) -> "Tape":
        seen = set()
        stack = [loss]
        nodes = []
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node._parents)
        # _seq tăng theo thứ tự tạo => thứ tự thực thi là một thứ tự topo
        nodes.sort(key=lambda n: n._seq)
        return cls(nodes)

    def replay(self, loss: Tensor) -> int:
        grads = {id(loss): np.ones_like(loss.data)}
        visited = 0
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            visited += 1
            if node._backward is None:
                if node.requires_grad:
                    node.grad = np.array(g, copy=True) if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
        return visited


def backward(loss: Tensor) -> Tape:
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = getattr(loss, "shape", type(loss).__name__)
        raise UsageError(f"backward() expects a scalar loss, got shape {shape}")
    if not loss.requires_grad:
        raise UsageError("backward() on a loss that depends on no trainable tensor")
    tape = Tape.from_loss(loss)
    tape.replay(loss)
    return tape


# -------------------------------------------------------------------
# Phép toán từng phần tử (broadcast)
# -------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), _bw)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), _bw)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), _bw)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _make(a.data / b.data, (a, b), _bw)


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)

    def _bw(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _make(a.data ** exponent, (a,), _bw)


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    active = a.data > 0
    return _make(np.where(active, a.data, 0.0), (a,), lambda g: (g * active,))


def where(cond: np.ndarray, a: ArrayLike, b: ArrayLike) -> Tensor:
    """cond là mảng bool hằng (không khả vi)."""
    cond = np.asarray(cond, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        return (
            _unbroadcast(np.where(cond, g, 0.0), a.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.shape),
        )

    return _make(np.where(cond, a.data, b.data), (a, b), _bw)


def dropout(a: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    if not training or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


# -------------------------------------------------------------------
# Đại số tuyến tính + reduce
# -------------------------------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def _bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), _bw)


def tsum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)

    def _bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _make(a.data.sum(axis=axes, keepdims=keepdims), (a,), _bw)


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def reshape(a: ArrayLike, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: ArrayLike, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def swapaxes(a: ArrayLike, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    return _make(
        np.swapaxes(a.data, axis1, axis2), (a,), lambda g: (np.swapaxes(g, axis1, axis2),)
    )


def getitem(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)

    def _bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), _bw)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def _bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, _bw)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)

    def _bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, _bw)


def pad(a: ArrayLike, pad_width, value: float = 0.0) -> Tensor:
    a = as_tensor(a)
    pad_width = tuple(tuple(p) for p in pad_width)
    window = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.shape))
    out = np.pad(a.data, pad_width, mode="constant", constant_values=value)
    return _make(out, (a,), lambda g: (g[window],))


# -------------------------------------------------------------------
# Softmax họ hàng (ổn định bằng trừ max)
# -------------------------------------------------------------------

def _check_finite(x: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{op} received non-finite input")


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    _check_finite(a.data, "softmax")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), _bw)


def log_softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    _check_finite(a.data, "log_softmax")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def _bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), _bw)


def logsumexp(a: ArrayLike, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    total = m + np.log(np.exp(a.data - m).sum(axis=axis, keepdims=True))
    out = total if keepdims else np.squeeze(total, axis=axis)

    def _bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * np.exp(a.data - total),)

    return _make(out, (a,), _bw)
