"""Dense tensors with tape-based reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array.  Every differentiable operation in
:mod:`s2wat.ops` returns a new tensor that remembers its parents and a
closure mapping the output gradient to parent gradients.  When a
:class:`Tape` is active the outputs are also appended to it in execution
order, which is a valid topological order for the backward sweep.

Multiplications performed inside matrix products and convolutions are
reported to every active :class:`FlopCounter` scope.
"""

from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import ContractError

_tape_var: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("s2wat_tape", default=None)
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("s2wat_grad", default=True)
_counters: contextvars.ContextVar[tuple] = contextvars.ContextVar("s2wat_counters", default=())
_branches: contextvars.ContextVar[Optional["BranchLog"]] = contextvars.ContextVar("s2wat_branches", default=None)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """N-dimensional float array with an optional gradient slot.

    ``data`` is stored row-major (last index fastest).  Leaves created with
    ``requires_grad=True`` receive ``grad`` after :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None

    # -- metadata -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    def backward(self, tape: Optional["Tape"] = None) -> None:
        backward(self, tape)

    # -- operator sugar (implemented in ops) ---------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent: float):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops
        return ops.getitem(self, key)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, (int, float)):
        return Tensor(np.asarray(x, dtype=np.float64))
    return Tensor(x, dtype=dtype)


class Tape:
    """Ordered record of differentiable ops executed while the tape is active.

    >>> with Tape() as tape:
    ...     loss = (x * x).sum()
    >>> tape.backward(loss)
    """

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _tape_var.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_var.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Tensor) -> None:
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the block (inference mode)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


class FlopCounter:
    """Accumulates scalar multiplications performed by matmul and conv2d."""

    def __init__(self) -> None:
        self.count = 0
        self.by_op: dict[str, int] = {}

    def add(self, op: str, n: int) -> None:
        self.count += int(n)
        self.by_op[op] = self.by_op.get(op, 0) + int(n)

    def reset(self) -> None:
        self.count = 0
        self.by_op.clear()


@contextlib.contextmanager
def count_flops(counter: Optional[FlopCounter] = None) -> Iterator[FlopCounter]:
    """Open a counting scope; nested scopes all receive the counts."""
    counter = counter if counter is not None else FlopCounter()
    token = _counters.set(_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _counters.reset(token)


class BranchLog:
    """Branch choices of piecewise ops (ReLU masks, max-pool winners) in call order.

    Recording once and replaying later pins every evaluation to the same
    smooth piece, which is what finite-difference checks need near kinks.
    """

    def __init__(self) -> None:
        self.choices: list[np.ndarray] = []
        self.replaying = False
        self.position = 0


@contextlib.contextmanager
def branch_scope(log: Optional[BranchLog], replay: bool = False) -> Iterator[Optional[BranchLog]]:
    if log is None:
        yield None
        return
    log.replaying, log.position = replay, 0
    if not replay:
        log.choices.clear()
    token = _branches.set(log)
    try:
        yield log
    finally:
        _branches.reset(token)
    if replay and log.position != len(log.choices):
        raise ContractError(f"replayed {log.position} of {len(log.choices)} recorded branch choices")


def branch(choice: np.ndarray) -> np.ndarray:
    """Pass ``choice`` through, record it, or substitute the recorded one."""
    log = _branches.get()
    if log is None:
        return choice
    if not log.replaying:
        log.choices.append(choice)
        return choice
    if log.position >= len(log.choices) or log.choices[log.position].shape != choice.shape:
        raise ContractError("branch replay does not match the recorded graph")
    stored = log.choices[log.position]
    log.position += 1
    return stored


def _report_flops(op: str, n: int) -> None:
    for counter in _counters.get():
        counter.add(op, n)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of an op; wire it into the graph if needed."""
    out = Tensor(data)
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        tape = _tape_var.get()
        if tape is not None:
            tape.record(out)
    return out


def _topological(loss: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Populate ``grad`` on every leaf reachable from a scalar ``loss``.

    Gradients accumulate into existing ``grad`` arrays, so a leaf used
    several times (or across several backward calls) sums its contributions.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad=True")
    if tape is not None:
        order = [n for n in tape.nodes]
        if loss._backward is not None and not any(n is loss for n in order):
            raise ContractError("tape does not cover the loss provenance")
    else:
        order = _topological(loss)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.is_leaf:
        _accumulate(loss, grads[id(loss)])
        return
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                _accumulate(parent, pg)
            else:
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _accumulate(leaf: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
    if leaf.grad is None:
        leaf.grad = g.copy()
    else:
        leaf.grad = leaf.grad + g
