"""Minimal reverse-mode automatic differentiation over dense numpy buffers.

Supports exactly the operation set the forecasting model needs: add, mul,
matmul, tanh, softplus, exp, sigmoid, sum, mean, broadcast, slice, concat,
plus a custom-function escape hatch used by the sequence scan. Training runs
in float32; test oracles replay graphs in float64 for headroom.
"""

from __future__ import annotations

import numpy as np

# Checked mode: reject non-finite values at construction and inside custom
# ops. Cheap at desk scale; tests rely on it.
_CHECKED = True


def set_checked(flag: bool) -> None:
    global _CHECKED
    _CHECKED = bool(flag)


def checked_mode() -> bool:
    return _CHECKED


class ContractViolation(Exception):
    """An operation was called outside its documented contract."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # leading axes added by broadcasting
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # axes broadcast from extent 1
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph wrapping a row-major numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_op")

    def __init__(self, data, requires_grad=False, _prev=(), _op=""):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if _CHECKED and not np.all(np.isfinite(arr)):
            raise ContractViolation(f"non-finite values in tensor (op={_op or 'leaf'})")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = _prev
        self._op = _op

    # -- introspection ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self._op!r})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    # -- graph construction ----------------------------------------------
    def _make(self, data, prev, op):
        out = Tensor(data, requires_grad=any(p.requires_grad for p in prev),
                     _prev=tuple(prev), _op=op)
        return out

    def _coerce(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = self._make(self.data + other.data, (self, other), "add")

        def _bwd():
            if self.requires_grad:
                self._accum(_unbroadcast(out.grad, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(out.grad, other.data.shape))
        out._backward = _bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = self._make(-self.data, (self,), "neg")

        def _bwd():
            if self.requires_grad:
                self._accum(-out.grad)
        out._backward = _bwd
        return out

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = self._make(self.data * other.data, (self, other), "mul")

        def _bwd():
            if self.requires_grad:
                self._accum(_unbroadcast(out.grad * other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(out.grad * self.data, other.data.shape))
        out._backward = _bwd
        return out

    __rmul__ = __mul__

    def matmul(self, other):
        other = self._coerce(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ContractViolation("matmul expects operands with ndim >= 2")
        out = self._make(a @ b, (self, other), "matmul")

        def _bwd():
            g = out.grad
            if self.requires_grad:
                self._accum(_unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape))
        out._backward = _bwd
        return out

    __matmul__ = matmul

    def tanh(self):
        t = np.tanh(self.data)
        out = self._make(t, (self,), "tanh")

        def _bwd():
            if self.requires_grad:
                self._accum(out.grad * (1.0 - t * t))
        out._backward = _bwd
        return out

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = self._make(s, (self,), "sigmoid")

        def _bwd():
            if self.requires_grad:
                self._accum(out.grad * s * (1.0 - s))
        out._backward = _bwd
        return out

    def exp(self):
        e = np.exp(self.data)
        out = self._make(e, (self,), "exp")

        def _bwd():
            if self.requires_grad:
                self._accum(out.grad * e)
        out._backward = _bwd
        return out

    def softplus(self):
        # numerically stable: log1p(exp(-|x|)) + max(x, 0)
        x = self.data
        sp = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
        out = self._make(sp, (self,), "softplus")

        def _bwd():
            if self.requires_grad:
                self._accum(out.grad / (1.0 + np.exp(-x)))
        out._backward = _bwd
        return out

    def sum(self, axis=None, keepdims=False):
        out = self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")

        def _bwd():
            if self.requires_grad:
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape).copy())
        out._backward = _bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def broadcast_to(self, shape):
        out = self._make(np.broadcast_to(self.data, shape).copy(), (self,), "broadcast")

        def _bwd():
            if self.requires_grad:
                self._accum(_unbroadcast(out.grad, self.data.shape))
        out._backward = _bwd
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self._make(self.data.reshape(shape), (self,), "reshape")

        def _bwd():
            if self.requires_grad:
                self._accum(out.grad.reshape(self.data.shape))
        out._backward = _bwd
        return out

    def transpose(self, *axes):
        axes = axes or None
        out = self._make(np.transpose(self.data, axes).copy(), (self,), "transpose")

        def _bwd():
            if self.requires_grad:
                inv = None if axes is None else np.argsort(axes)
                self._accum(np.transpose(out.grad, inv).copy())
        out._backward = _bwd
        return out

    @property
    def T(self):
        return self.transpose()

    def slice(self, key):
        out = self._make(self.data[key], (self,), "slice")

        def _bwd():
            if self.requires_grad:
                g = np.zeros_like(self.data)
                np.add.at(g, key, out.grad)
                self._accum(g)
        out._backward = _bwd
        return out

    __getitem__ = slice

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)


def concat(tensors, axis=0):
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 requires_grad=any(t.requires_grad for t in tensors),
                 _prev=tuple(tensors), _op="concat")
    sizes = [t.data.shape[axis] for t in tensors]

    def _bwd():
        start = 0
        for t, s in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(start, start + s)
                t._accum(out.grad[tuple(idx)])
            start += s
    out._backward = _bwd
    return out


def custom_op(data, parents, backward, op=""):
    """Register a hand-written forward result with its backward closure.

    `backward(out_grad)` must return one gradient array (or None) per parent,
    in order. Used by the sequence scan where a per-step graph would be
    wasteful.
    """
    parents = tuple(parents)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                 _prev=parents, _op=op or "custom")

    def _bwd():
        grads = backward(out.grad)
        for p, g in zip(parents, grads):
            if p.requires_grad and g is not None:
                p._accum(g)
    out._backward = _bwd
    return out


class Parameter(Tensor):
    """A named trainable leaf; the unit of checkpointing and optimization."""

    __slots__ = ("name",)

    def __init__(self, data, name: str, dtype=np.float32):
        super().__init__(np.asarray(data, dtype=dtype), requires_grad=True)
        self.name = name

    def zero_grad(self):
        self.grad = None


def _toposort(root: Tensor):
    order, visited, on_stack = [], set(), set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            on_stack.discard(id(node))
            order.append(node)
            continue
        if id(node) in visited:
            continue
        if id(node) in on_stack:
            raise ContractViolation("cycle in computation graph")
        visited.add(id(node))
        on_stack.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def reverse_accumulate(loss_root: Tensor) -> None:
    """Backpropagate d(loss)/d(leaf) into every reachable leaf's .grad.

    Repeated calls without zeroing accumulate additively. The root must be a
    scalar (shape () or (1,)).
    """
    if loss_root.data.size != 1:
        raise ContractViolation(
            f"reverse_accumulate needs a scalar root, got shape {loss_root.data.shape}")
    order = _toposort(loss_root)
    loss_root.grad = np.ones_like(loss_root.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def finite_difference_gradient(f, params, h=1e-4):
    """Central-difference gradient of scalar `f()` w.r.t. each Parameter.

    Perturbs parameter buffers in place (restoring them), evaluating f in
    whatever precision it runs at; callers wanting the 64-bit oracle should
    hand in a float64 replay of their model. Returns {name: ndarray}.
    """
    base = float(f())
    again = float(f())
    if base != again:
        raise RuntimeError("finite_difference_gradient: f is not deterministic")
    out = {}
    for p in params:
        g = np.zeros(p.data.shape, dtype=np.float64)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f())
            flat[i] = orig - h
            fm = float(f())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        out[p.name] = g
    return out


class GradCheckReport:
    """Outcome of comparing analytic and numeric gradients for one leaf."""

    def __init__(self, param_name, max_rel_error, max_abs_error, passed):
        self.param_name = param_name
        self.max_rel_error = max_rel_error
        self.max_abs_error = max_abs_error
        self.passed = passed

    def __repr__(self):
        flag = "ok" if self.passed else "FAIL"
        return (f"GradCheckReport({self.param_name}: rel={self.max_rel_error:.3e} "
                f"abs={self.max_abs_error:.3e} {flag})")


def gradient_check(f, params, h=1e-4, tol=1e-4, abs_floor=1e-7):
    """Compare reverse-mode gradients of scalar f() against central differences.

    `f` must build a fresh graph each call and return the scalar loss Tensor.
    Returns a list of GradCheckReport, one per parameter.
    """
    zero_grads(params)
    loss = f()
    reverse_accumulate(loss)
    analytic = {p.name: (np.zeros_like(p.data, dtype=np.float64) if p.grad is None
                         else p.grad.astype(np.float64)) for p in params}
    numeric = finite_difference_gradient(lambda: f().item(), params, h=h)
    reports = []
    for p in params:
        a, n = analytic[p.name], numeric[p.name]
        abs_err = np.abs(a - n)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)
        rel_err = abs_err / denom
        # below abs_floor the relative error is noise
        rel_err = np.where(abs_err < abs_floor, 0.0, rel_err)
        max_rel = float(rel_err.max()) if rel_err.size else 0.0
        max_abs = float(abs_err.max()) if abs_err.size else 0.0
        reports.append(GradCheckReport(p.name, max_rel, max_abs,
                                       max_rel < tol or max_abs < abs_floor))
    return reports
