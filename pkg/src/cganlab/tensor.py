"""Reverse-mode autodiff over dense float64 arrays, plus the Adam update.

Define-by-run: every Tensor wraps a numpy array together with the op tag and
parent nodes that produced it, and a closure routing an incoming gradient to
those parents. Graphs are rebuilt each training step; backward() is one
reverse topological sweep with accumulation at fan-in nodes.

All values are float64. Every op checks its output for NaN/Inf and raises
instead of letting a non-finite value escape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

# Clamp applied inside log(); keeps saturated probabilities finite.
LOG_FLOOR = 1e-12

# sigmoid is clipped to the open interval so probability contracts hold even
# when float64 rounds the true value to 0.0 or 1.0.
_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)

ACTIVATION_KINDS = ("relu", "leaky_relu", "sigmoid", "tanh")


def _as_f64(data):
    arr = np.asarray(data, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # keeps 0-d shape, unlike an unconditional call
    return arr


class Tensor:
    """Graph node: a float64 ndarray plus provenance and a gradient slot."""

    __slots__ = ("data", "grad", "op", "parents", "_backward")

    def __init__(self, data, parents=(), op="leaf", backward=None):
        self.data = _as_f64(data)
        if not np.isfinite(self.data).all():
            raise ContractError(f"op '{op}' produced non-finite values")
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        self._backward = backward

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Copy the value into a fresh leaf, cutting the graph."""
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    # -- arithmetic -----------------------------------------------------
    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data + other.data

        def back(g, a=self, b=other):
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(g, b.shape))

        return Tensor(out_data, (self, other), "add", back)

    __radd__ = __add__

    def __neg__(self):
        def back(g, a=self):
            _accum(a, -g)

        return Tensor(-self.data, (self,), "neg", back)

    def __sub__(self, other):
        return self + (-Tensor._coerce(other))

    def __rsub__(self, other):
        return Tensor._coerce(other) + (-self)

    def __mul__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data * other.data

        def back(g, a=self, b=other):
            _accum(a, _unbroadcast(g * b.data, a.shape))
            _accum(b, _unbroadcast(g * a.data, b.shape))

        return Tensor(out_data, (self, other), "mul", back)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ----------------------------------------------------------
    def reshape(self, shape) -> "Tensor":
        old = self.shape

        def back(g, a=self):
            _accum(a, g.reshape(old))

        return Tensor(self.data.reshape(shape), (self,), "reshape", back)

    # -- reductions -----------------------------------------------------
    def sum(self, axis=None) -> "Tensor":
        out_data = self.data.sum(axis=axis)

        def back(g, a=self, ax=axis):
            if ax is None:
                _accum(a, np.broadcast_to(g, a.shape).copy())
            else:
                _accum(a, np.broadcast_to(np.expand_dims(g, ax), a.shape).copy())

        return Tensor(out_data, (self,), "sum", back)

    def mean(self, axis=None) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            count = self.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)


# ----------------------------------------------------------------------
# gradient plumbing


def _accum(node: Tensor, g: np.ndarray):
    if node.grad is None:
        node.grad = np.zeros_like(node.data)
    node.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gd, sd) in enumerate(zip(g.shape, shape)):
        if sd == 1 and gd != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _toposort(root: Tensor):
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Populate .grad with d(loss)/d(node) for every ancestor of `loss`.

    Gradients from previous backward calls on the reachable subgraph are
    discarded first; nodes reached through several paths accumulate.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    order = _toposort(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ----------------------------------------------------------------------
# ops


def matmul(a, b) -> Tensor:
    """2-D matrix product, differentiable in both operands."""
    a, b = Tensor._coerce(a), Tensor._coerce(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def back(g, x=a, y=b):
        _accum(x, g @ y.data.T)
        _accum(y, x.data.T @ g)

    return Tensor(a.data @ b.data, (a, b), "matmul", back)


def activation(x, kind: str, alpha: float = 0.2) -> Tensor:
    """Elementwise nonlinearity: relu, leaky_relu(alpha), sigmoid, or tanh."""
    x = Tensor._coerce(x)
    if kind == "relu":
        y = np.maximum(x.data, 0.0)

        def back(g, a=x, d=x.data):
            _accum(a, g * (d > 0))

    elif kind == "leaky_relu":
        if not (0.0 < alpha < 1.0):
            raise ConfigError(f"leaky_relu alpha must be in (0,1), got {alpha}")
        y = np.where(x.data > 0, x.data, alpha * x.data)

        def back(g, a=x, d=x.data, al=alpha):
            _accum(a, g * np.where(d > 0, 1.0, al))

    elif kind == "sigmoid":
        d = x.data
        y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                     np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
        y = np.clip(y, _SIG_LO, _SIG_HI)

        def back(g, a=x, s=y):
            _accum(a, g * s * (1.0 - s))

    elif kind == "tanh":
        y = np.tanh(x.data)

        def back(g, a=x, t=y):
            _accum(a, g * (1.0 - t * t))

    else:
        raise ConfigError(f"unknown activation kind {kind!r}; expected one of {ACTIVATION_KINDS}")
    return Tensor(y, (x,), kind, back)


def exp(x) -> Tensor:
    x = Tensor._coerce(x)
    with np.errstate(over="ignore"):  # overflow becomes a ContractError below
        y = np.exp(x.data)

    def back(g, a=x, e=y):
        _accum(a, g * e)

    return Tensor(y, (x,), "exp", back)


def log(x, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log with the argument clamped at `floor` from below."""
    x = Tensor._coerce(x)
    clamped = np.maximum(x.data, floor)
    y = np.log(clamped)

    def back(g, a=x, c=clamped, d=x.data, f=floor):
        _accum(a, g * (d > f) / c)

    return Tensor(y, (x,), "log", back)


def concat_last(a, b) -> Tensor:
    """Concatenate along the trailing axis; leading axes must agree."""
    a, b = Tensor._coerce(a), Tensor._coerce(b)
    if a.ndim != b.ndim:
        raise DimensionError(f"concat rank mismatch: {a.shape} vs {b.shape}")
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat leading dimensions disagree: {a.shape} vs {b.shape}")
    if a.shape[-1] == 0 or b.shape[-1] == 0:
        raise DimensionError("concat operands must be non-empty along the last axis")
    split = a.shape[-1]

    def back(g, x=a, y=b, s=split):
        _accum(x, g[..., :s])
        _accum(y, g[..., s:])

    return Tensor(np.concatenate([a.data, b.data], axis=-1), (a, b), "concat", back)


def softmax(logits) -> Tensor:
    """Row softmax over the last axis, computed with max subtraction."""
    x = Tensor._coerce(logits)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g, a=x, pr=p):
        inner = (g * pr).sum(axis=-1, keepdims=True)
        _accum(a, pr * (g - inner))

    return Tensor(p, (x,), "softmax", back)


def _check_one_hot(t: np.ndarray, what: str = "target"):
    if t.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {t.shape}")
    binary = np.all((t == 0.0) | (t == 1.0))
    if not binary or not np.all(t.sum(axis=1) == 1.0):
        raise ContractError(f"{what} rows must be one-hot")


def softmax_cross_entropy(logits, target) -> Tensor:
    """Mean over rows of -log softmax(logits) at the one-hot target index.

    Evaluated via log-sum-exp with max subtraction, so confident logits do
    not overflow. Differentiable in logits; the target is a constant.
    """
    x = Tensor._coerce(logits)
    t = _as_f64(target.data if isinstance(target, Tensor) else target)
    if x.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got shape {x.shape}")
    if x.shape != t.shape:
        raise DimensionError(f"logits shape {x.shape} != target shape {t.shape}")
    _check_one_hot(t)
    b = x.shape[0]
    m = x.data.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x.data - m).sum(axis=1))
    picked = (x.data * t).sum(axis=1)
    loss = (lse - picked).mean()

    shifted = np.exp(x.data - m)
    probs = shifted / shifted.sum(axis=1, keepdims=True)

    def back(g, a=x, pr=probs, tt=t, n=b):
        _accum(a, g * (pr - tt) / n)

    return Tensor(loss, (x,), "softmax_xent", back)


# ----------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Moment accumulators and hyperparameters for one parameter tensor."""

    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, shape, lr=2e-4, beta1=0.5, beta2=0.999, epsilon=1e-8) -> "AdamState":
        if not 0.0 <= beta1 < 1.0:
            raise ConfigError(f"beta1 must be in [0,1), got {beta1}")
        if not 0.0 <= beta2 < 1.0:
            raise ConfigError(f"beta2 must be in [0,1), got {beta2}")
        if lr < 0.0:
            raise ConfigError(f"lr must be non-negative, got {lr}")
        if epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {epsilon}")
        return cls(0, np.zeros(shape), np.zeros(shape), lr, beta1, beta2, epsilon)


def adam_step(param, grad, state: AdamState):
    """One bias-corrected Adam update. Mutates the parameter and the state.

    theta -= lr * m_hat / (sqrt(v_hat) + eps) with m_hat, v_hat the
    bias-corrected first and second moments.
    """
    data = param.data if isinstance(param, Tensor) else param
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != data.shape:
        raise DimensionError(f"grad shape {grad.shape} != param shape {data.shape}")
    if state.m.shape != data.shape:
        raise DimensionError(f"adam state shape {state.m.shape} != param shape {data.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    if not np.isfinite(data).all():
        raise ContractError("adam update produced non-finite parameters")
    return param, state
