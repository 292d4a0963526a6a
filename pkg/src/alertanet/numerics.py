"""Dense float64 matrix arithmetic with reverse-mode gradients.

Everything here is strictly two-dimensional and strictly shape-checked: there
is no implicit broadcasting, and any shape violation raises
:class:`~alertanet.errors.DimensionError` naming both shapes.  ``matmul``
accumulates its inner sum in a fixed left-to-right order over the contraction
index, so results are bit-identical to a naive triple loop and reproducible
across runs.

Gradients are computed with a small tape: every operation returns a
:class:`Tensor` that remembers its parents and how to push gradients back to
them.  Calling :func:`backward` on a 1x1 scalar walks the tape in reverse
topological order.  Parameters live in a :class:`ParamStore`, which pairs
every named matrix with a same-shaped gradient slot.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, UsageError


def as_matrix(data, require_finite: bool = True) -> np.ndarray:
    """Coerce ``data`` to a 2-D C-contiguous float64 array."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim} shape={arr.shape}")
    if require_finite and not np.all(np.isfinite(arr)):
        raise DimensionError("matrix contains non-finite entries")
    return arr


def as_column(data) -> np.ndarray:
    """Coerce a 1-D vector (or nx1 matrix) to an nx1 column matrix."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return as_matrix(arr)


class Tensor:
    """A float64 matrix plus the bookkeeping needed for reverse mode.

    ``requires_grad`` is inherited from parents, so constants stay out of the
    backward walk entirely.  ``grad`` is allocated (zeroed) only for nodes
    that participate in differentiation.
    """

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward_fn")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
        _validate: bool = True,
    ):
        self.value = as_matrix(value) if _validate else value
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = np.zeros_like(self.value) if self.requires_grad else None
        self.name = name
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise UsageError(f"item() requires a 1x1 tensor, got shape {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{tag}, requires_grad={self.requires_grad})"


def constant(value, name: str | None = None) -> Tensor:
    """Wrap a value as a non-trainable tape leaf."""
    return Tensor(value, requires_grad=False, name=name)


def _result(value: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    # Internal op outputs skip re-validation; inputs were already validated.
    return Tensor(value, parents=parents, backward_fn=backward_fn, _validate=False)


def matmul_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with left-to-right accumulation over the inner index.

    Each output entry is built as ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``,
    one addition per step, which makes the result bit-identical to a scalar
    triple loop regardless of vectorization.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    m, inner = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    if inner == 0 or m == 0 or n == 0:
        return out
    tmp = np.empty((m, n))
    for k in range(inner):
        np.multiply(a[:, k].reshape(m, 1), b[k].reshape(1, n), out=tmp)
        np.add(out, tmp, out=out)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Product whose forward value uses the fixed left-to-right contraction.

    The backward accumulation uses the library product instead: gradient
    summation order is unconstrained as long as it is deterministic for a
    fixed thread count, and it sits on the training hot path.
    """
    if a.cols != b.rows:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = matmul_values(a.value, b.value)

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += np.dot(grad, b.value.T)
        if b.requires_grad:
            b.grad += np.dot(a.value.T, grad)

    return _result(out, (a, b), backward_fn)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape {a.shape} does not match shape {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad
        if b.requires_grad:
            b.grad += grad

    return _result(a.value + b.value, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad
        if b.requires_grad:
            b.grad -= grad

    return _result(a.value - b.value, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    _check_same_shape(a, b, "mul")

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad * b.value
        if b.requires_grad:
            b.grad += grad * a.value

    return _result(a.value * b.value, (a, b), backward_fn)


def affine(a: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """``scale * a + shift`` with scalar constants."""
    scale = float(scale)

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += scale * grad

    return _result(scale * a.value + shift, (a,), backward_fn)


def mul_const(a: Tensor, const: np.ndarray) -> Tensor:
    """Elementwise product with a fixed (non-trainable) matrix."""
    const = as_matrix(const)
    _check_same_shape(a, constant(const), "mul_const")

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad * const

    return _result(a.value * const, (a,), backward_fn)


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (no overflow for any float64)."""
    out = np.empty_like(x)
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[neg])
    out[neg] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = sigmoid_values(a.value)

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad * out * (1.0 - out)

    return _result(out, (a,), backward_fn)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad * (1.0 - out * out)

    return _result(out, (a,), backward_fn)


def bias_add(a: Tensor, bias: Tensor) -> Tensor:
    """Add an mx1 bias column to every column of an mxn matrix.

    This is the one deliberate shape extension in the module; it is an
    explicit named operation rather than silent broadcasting.
    """
    if bias.cols != 1 or bias.rows != a.rows:
        raise DimensionError(f"bias_add: bias shape {bias.shape} does not fit matrix shape {a.shape}")

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad
        if bias.requires_grad:
            bias.grad += np.sum(grad, axis=1, keepdims=True)

    return _result(a.value + bias.value, (a, bias), backward_fn)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack matrices with equal column counts on top of each other."""
    if not parts:
        raise UsageError("concat_rows: empty input")
    ncols = parts[0].cols
    for p in parts:
        if p.cols != ncols:
            raise DimensionError(
                f"concat_rows: column counts differ ({[p.shape for p in parts]})"
            )
    out = np.concatenate([p.value for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def backward_fn(grad):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.grad += grad[lo:hi, :]

    return _result(out, tuple(parts), backward_fn)


def linear_combination(parts: Sequence[Tensor], coeffs: Sequence[float]) -> Tensor:
    """``sum(c_i * M_i)`` accumulated left to right over same-shaped matrices."""
    if not parts:
        raise UsageError("linear_combination: empty input")
    if len(parts) != len(coeffs):
        raise UsageError(f"linear_combination: {len(parts)} matrices vs {len(coeffs)} coefficients")
    shape = parts[0].shape
    for p in parts:
        _check_same_shape(p, parts[0], "linear_combination")
    coeffs = [float(c) for c in coeffs]
    out = np.zeros(shape)
    for p, c in zip(parts, coeffs):
        out += c * p.value

    def backward_fn(grad):
        for p, c in zip(parts, coeffs):
            if p.requires_grad:
                p.grad += c * grad

    return _result(out, tuple(parts), backward_fn)


def total_sum(a: Tensor) -> Tensor:
    """Sum all entries down to a 1x1 scalar."""
    out = np.array([[np.sum(a.value)]])

    def backward_fn(grad):
        if a.requires_grad:
            a.grad += grad[0, 0]

    return _result(out, (a,), backward_fn)


def softplus_values(x: np.ndarray) -> np.ndarray:
    """``log(1 + exp(x))`` computed as ``max(x, 0) + log1p(exp(-|x|))``."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def bce_with_logits(logits: Tensor, targets: np.ndarray, pos_weight: float = 1.0) -> Tensor:
    """Elementwise binary cross-entropy computed in logit space.

    ``pos_weight`` scales the positive-class term, for imbalanced targets.
    With ``pos_weight=1`` each entry equals the standard stable form
    ``max(z, 0) - z*y + log(1 + exp(-|z|))``.
    """
    targets = as_matrix(targets)
    if targets.shape != logits.shape:
        raise DimensionError(f"bce_with_logits: targets {targets.shape} vs logits {logits.shape}")
    pos_weight = float(pos_weight)
    z = logits.value
    out = pos_weight * targets * softplus_values(-z) + (1.0 - targets) * softplus_values(z)

    def backward_fn(grad):
        if logits.requires_grad:
            dz = (1.0 - targets) * sigmoid_values(z) - pos_weight * targets * sigmoid_values(-z)
            logits.grad += grad * dz

    return _result(out, (logits,), backward_fn)


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of every trainable tensor reachable from ``loss``.

    ``loss`` must be a recorded 1x1 scalar.  Gradients accumulate into
    existing ``grad`` buffers; call :meth:`ParamStore.zero_grads` first when
    starting a fresh step.
    """
    if loss.value.shape != (1, 1):
        raise UsageError(f"backward requires a 1x1 scalar loss, got shape {loss.value.shape}")
    if loss._backward_fn is None and not loss._parents:
        raise UsageError("backward called on a tensor with no recorded computation")
    if not loss.requires_grad:
        return  # nothing trainable feeds this loss; all gradients stay zero
    loss.grad += 1.0
    for node in reversed(_topo_order(loss)):
        if node._backward_fn is not None:
            node._backward_fn(node.grad)


class ParamStore:
    """Named parameter matrices with parallel gradient slots.

    Iteration order is insertion order everywhere, which keeps seeded
    initialization, gradient norms and serialization deterministic.
    """

    def __init__(self):
        self._slots: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._slots:
            raise UsageError(f"duplicate parameter name {name!r}")
        tensor = Tensor(value, requires_grad=True, name=name)
        self._slots[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        if name not in self._slots:
            raise UsageError(f"unknown parameter {name!r}")
        return self._slots[name]

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def __len__(self) -> int:
        return len(self._slots)

    def names(self) -> list[str]:
        return list(self._slots)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._slots.items()

    def value(self, name: str) -> np.ndarray:
        return self[name].value

    def grad(self, name: str) -> np.ndarray:
        return self[name].grad

    def zero_grads(self) -> None:
        for tensor in self._slots.values():
            tensor.grad[...] = 0.0

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: tensor.value.copy() for name, tensor in self._slots.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        missing = [name for name in self._slots if name not in values]
        if missing:
            raise UsageError(f"missing parameter values for {missing}")
        for name, tensor in self._slots.items():
            arr = as_matrix(values[name])
            if arr.shape != tensor.value.shape:
                raise DimensionError(
                    f"parameter {name!r}: stored shape {arr.shape} vs expected {tensor.value.shape}"
                )
            tensor.value[...] = arr

    def global_grad_norm(self) -> float:
        total = 0.0
        for tensor in self._slots.values():
            total += float(np.sum(tensor.grad * tensor.grad))
        return float(np.sqrt(total))

    def scale_grads(self, factor: float) -> None:
        for tensor in self._slots.values():
            tensor.grad *= factor
