"""
Reverse-Mode Tensor Engine.

Dense float64 tensors backed by numpy arrays. Every differentiable op is a
``Function`` subclass that remembers its parents; ``backward`` walks the
recorded graph exactly once in reverse topological order and accumulates
gradients into the leaf tensors that require them.

Graph recording can be switched off per thread with ``no_grad()``, which is
how decoding, Monte-Carlo rollouts and evaluation run.
"""

import itertools
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from apps.autodiff.exceptions import EmptyLogits, NonScalarLoss, TokenOutOfVocab

logger = logging.getLogger(__name__)

DTYPE = np.float64

_tensor_ids = itertools.count()
_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, 'enabled', True)


@contextmanager
def no_grad():
    """Disable graph recording for the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """
    Dense real-valued array node.

    ``data`` is never mutated by ops; only the optimiser writes into a
    parameter's data between steps, and ``backward`` writes ``grad``.
    """

    # numpy operands defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.id = next(_tensor_ids)
        self._ctx: Optional['Function'] = None

    @classmethod
    def _result(cls, data: np.ndarray, ctx: Optional['Function']) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=DTYPE)
        out.requires_grad = ctx is not None
        out.grad = None
        out.name = None
        out.id = next(_tensor_ids)
        out._ctx = ctx
        return out

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> List[float]:
        """Row-major values."""
        return self.data.ravel().tolist()

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        label = f" name={self.name}" if self.name else ''
        return f"<Tensor shape={self.shape}{label} requires_grad={self.requires_grad}>"

    def __len__(self):
        return self.data.shape[0]

    # ------------------------------------------------------------------
    # Operators
    # ------------------------------------------------------------------
    def __add__(self, other): return Add.apply(self, other)
    def __radd__(self, other): return Add.apply(other, self)
    def __sub__(self, other): return Sub.apply(self, other)
    def __rsub__(self, other): return Sub.apply(other, self)
    def __mul__(self, other): return Mul.apply(self, other)
    def __rmul__(self, other): return Mul.apply(other, self)
    def __truediv__(self, other): return Div.apply(self, other)
    def __rtruediv__(self, other): return Div.apply(other, self)
    def __neg__(self): return Neg.apply(self)
    def __pow__(self, exponent: float): return Pow.apply(self, exponent=float(exponent))
    def __matmul__(self, other): return MatMul.apply(self, other)
    def __rmatmul__(self, other): return MatMul.apply(other, self)
    def __getitem__(self, key): return GetItem.apply(self, key=key)

    def sum(self, axis: Optional[int] = None) -> 'Tensor':
        return Sum.apply(self, axis=axis)

    def mean(self) -> 'Tensor':
        return Sum.apply(self, axis=None) * (1.0 / max(self.size, 1))

    def exp(self) -> 'Tensor': return Exp.apply(self)
    def log(self) -> 'Tensor': return Log.apply(self)
    def tanh(self) -> 'Tensor': return Tanh.apply(self)
    def sigmoid(self) -> 'Tensor': return Sigmoid.apply(self)

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    @property
    def T(self) -> 'Tensor':
        return Transpose.apply(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ----------------------------------------------------------------------
# Function nodes
# ----------------------------------------------------------------------
class Function:
    """
    Base class for differentiable operations.

    ``forward`` receives the parents' numpy arrays and returns the output
    array; ``backward`` maps the output gradient to one gradient per parent
    (``None`` where no gradient flows).
    """

    def __init__(self, *parents: Tensor):
        self.parents = parents

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        parents = tuple(as_tensor(x) for x in inputs)
        fn = cls(*parents)
        out = fn.forward(*(p.data for p in parents), **kwargs)
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        return Tensor._result(out, fn if track else None)

    @property
    def op_name(self) -> str:
        return type(self).__name__

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError("Subclass must implement forward()")

    def backward(self, grad: np.ndarray) -> tuple:
        raise NotImplementedError("Subclass must implement backward()")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (_unbroadcast(grad * self.b, self.a.shape),
                _unbroadcast(grad * self.a, self.b.shape))


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return (_unbroadcast(grad / self.b, self.a.shape),
                _unbroadcast(-grad * self.a / (self.b ** 2), self.b.shape))


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, a, exponent: float):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.a ** (self.exponent - 1.0),)


class MatMul(Function):
    """Matrix/vector products for 1-D and 2-D operands."""

    def forward(self, a, b):
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        a, b = self.a, self.b
        if a.ndim == 2 and b.ndim == 2:
            return grad @ b.T, a.T @ grad
        if a.ndim == 2 and b.ndim == 1:
            return np.outer(grad, b), a.T @ grad
        if a.ndim == 1 and b.ndim == 2:
            return b @ grad, np.outer(a, grad)
        return grad * b, grad * a


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out ** 2),)


class Sigmoid(Function):
    def forward(self, a):
        self.out = np.exp(-np.logaddexp(0.0, -a))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Sum(Function):
    def forward(self, a, axis: Optional[int] = None):
        self.shape, self.axis = a.shape, axis
        return np.sum(a, axis=axis)

    def backward(self, grad):
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class GetItem(Function):
    def forward(self, a, key):
        self.shape, self.key = a.shape, key
        return np.array(a[key], dtype=DTYPE)

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=DTYPE)
        np.add.at(full, self.key, grad)
        return (full,)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, a):
        return a.T

    def backward(self, grad):
        return (grad.T,)


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        self.axis = axis
        self.splits = np.cumsum([arr.shape[axis] for arr in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class Stack(Function):
    def forward(self, *arrays):
        return np.stack(arrays, axis=0)

    def backward(self, grad):
        return tuple(grad[i] for i in range(grad.shape[0]))


class Softmax(Function):
    def forward(self, a):
        shifted = a - np.max(a, axis=-1, keepdims=True)
        exps = np.exp(shifted)
        self.out = exps / np.sum(exps, axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = np.sum(grad * self.out, axis=-1, keepdims=True)
        return (self.out * (grad - inner),)


class LogSoftmax(Function):
    def forward(self, a):
        shifted = a - np.max(a, axis=-1, keepdims=True)
        log_norm = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
        out = shifted - log_norm
        self.probs = np.exp(out)
        return out

    def backward(self, grad):
        return (grad - self.probs * np.sum(grad, axis=-1, keepdims=True),)


# ----------------------------------------------------------------------
# Public functional API
# ----------------------------------------------------------------------
def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    return Stack.apply(*tensors)


def softmax(logits: Tensor) -> Tensor:
    """
    Numerically stable softmax over the last axis.

    Raises:
        EmptyLogits: if there is nothing to normalise.
    """
    logits = as_tensor(logits)
    if logits.size == 0:
        raise EmptyLogits()
    return Softmax.apply(logits)


def log_softmax(logits: Tensor) -> Tensor:
    logits = as_tensor(logits)
    if logits.size == 0:
        raise EmptyLogits()
    return LogSoftmax.apply(logits)


def check_token_ids(targets: Iterable[int], vocab_size: int) -> List[int]:
    ids = [int(t) for t in targets]
    for token_id in ids:
        if token_id < 0 or token_id >= vocab_size:
            raise TokenOutOfVocab(token_id, vocab_size)
    return ids


def sequence_nll(stepwise_probs: Tensor, targets: Sequence[int]) -> Tensor:
    """
    Negative log-likelihood of ``targets`` under per-step distributions.

    Args:
        stepwise_probs: Tensor of shape [T, V], each row a distribution
        targets: T token ids

    Returns:
        Scalar tensor ``-sum_t log p_t(target_t)``
    """
    stepwise_probs = as_tensor(stepwise_probs)
    steps, vocab_size = stepwise_probs.shape
    ids = check_token_ids(targets, vocab_size)
    if len(ids) != steps:
        raise ValueError(f"expected {steps} targets, got {len(ids)}")
    picked = stepwise_probs[(np.arange(steps), np.array(ids, dtype=np.int64))]
    return -(picked.log().sum())


# ----------------------------------------------------------------------
# Graph traversal
# ----------------------------------------------------------------------
@dataclass
class Graph:
    """Nodes reachable from a root, inputs always before their consumers."""

    nodes: List[Tensor] = field(default_factory=list)
    ops: Dict[int, str] = field(default_factory=dict)

    @classmethod
    def trace(cls, root: Tensor) -> 'Graph':
        graph = cls()
        visited = set()
        stack_ = [(root, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                graph.nodes.append(node)
                graph.ops[node.id] = node._ctx.op_name if node._ctx else 'leaf'
                continue
            if node.id in visited:
                continue
            visited.add(node.id)
            stack_.append((node, True))
            if node._ctx is not None:
                for parent in reversed(node._ctx.parents):
                    if parent.requires_grad and parent.id not in visited:
                        stack_.append((parent, False))
        return graph


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> Dict[int, np.ndarray]:
    """
    Back-propagate from a scalar loss.

    Gradients are accumulated into ``.grad`` of every leaf ancestor that
    requires grad. Tensors that are not ancestors are left untouched.

    Args:
        loss: scalar tensor
        params: optional tensors whose gradients should appear in the
            returned map even when the loss does not depend on them (as zeros)

    Returns:
        Map from tensor id to the gradient contributed by this pass
    """
    if loss.size != 1:
        raise NonScalarLoss(loss.shape)

    grads: Dict[int, np.ndarray] = {}
    if loss.requires_grad:
        pending = {loss.id: np.ones_like(loss.data)}
        for node in reversed(Graph.trace(loss).nodes):
            grad = pending.pop(node.id, None)
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                grads[node.id] = grad
                continue
            for parent, parent_grad in zip(node._ctx.parents, node._ctx.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent.id in pending:
                    pending[parent.id] = pending[parent.id] + parent_grad
                else:
                    pending[parent.id] = parent_grad

    for param in params or ():
        if param.id not in grads:
            grads[param.id] = np.zeros_like(param.data)
    return grads
