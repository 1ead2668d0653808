"""Reverse-mode automatic differentiation over numpy arrays.

The engine is tape-based: operations executed while a ``Tape`` is active are
recorded in execution order, and ``backward`` replays the records in exact
reverse order, summing gradient contributions for tensors consumed by more
than one operation.  Only the operations the networks in this package need
are provided; there is no broadcasting beyond identical shapes or
tensor-with-scalar.

Float32 is the training dtype; gradient verification should build tensors
with ``dtype=np.float64`` (finite-difference checks are unreliable in
float32).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NonFiniteError, UsageError

DEFAULT_DTYPE = np.float32

# Toggled off only for throwaway benchmarking; tests run with checks on.
_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> bool:
    """Enable/disable NaN/Inf screening, returning the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


def _check_finite(arr: np.ndarray, context: str) -> None:
    if _FINITE_CHECKS and not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {context}")


class Tensor:
    """A shaped float buffer with an optional gradient slot.

    ``grad`` is populated (additively) by ``backward``; it always has the
    same shape as ``data`` when present.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        _check_finite(self.data, "Tensor construction")

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, contribution: np.ndarray) -> None:
        if contribution.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {contribution.shape} != tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = contribution.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + contribution

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar; all routed through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)


class _Node:
    """One recorded operation: output, inputs, and the local vjp."""

    __slots__ = ("output", "inputs", "backward_fn", "name")

    def __init__(self, output, inputs, backward_fn, name):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.name = name


class Tape:
    """Ordered record of executed operations, for reverse-mode replay."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def clear(self):
        self._nodes.clear()


_TAPE_STACK: list[Tape] = []


def _emit(name: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Build the output tensor and record the op on the active tape."""
    _check_finite(out_data, name)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = requires
    out.grad = None
    if requires and _TAPE_STACK:
        _TAPE_STACK[-1]._nodes.append(_Node(out, inputs, backward_fn, name))
    return out


def backward(tape: Tape, root: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``root``.

    Replays the tape in reverse execution order; repeated calls without a
    ``zero_grad`` accumulate into the existing leaf gradients.
    """
    if root.data.size != 1:
        raise UsageError(f"backward root must be scalar, got shape {root.shape}")
    # Traversal-local gradient store; leaf .grad is only touched at flush
    # time so a second backward() adds exactly one more contribution.
    pending: dict[int, tuple[Tensor, np.ndarray]] = {
        id(root): (root, np.ones_like(root.data))
    }
    for node in reversed(tape._nodes):
        slot = pending.pop(id(node.output), None)
        if slot is None:
            continue  # no downstream use of this output
        _, grad_out = slot
        contributions = node.backward_fn(grad_out)
        for inp, contrib in zip(node.inputs, contributions):
            if contrib is None or not inp.requires_grad:
                continue
            _check_finite(contrib, f"backward of {node.name}")
            key = id(inp)
            if key in pending:
                pending[key] = (inp, pending[key][1] + contrib)
            else:
                pending[key] = (inp, contrib)
    for tensor, grad in pending.values():
        if tensor.requires_grad:
            tensor.accumulate_grad(grad)


def _as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype), requires_grad=False)


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or _is_scalar(a) or _is_scalar(b):
        return
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not identical "
                         "(only tensor-with-scalar broadcasting is supported)")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    # Undo scalar broadcasting by summing everything back down.
    if grad.shape == tuple(shape):
        return grad
    return np.sum(grad).reshape(shape).astype(grad.dtype)


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _binary_shapes(a, b, "add")
    out = a.data + b.data

    def backward_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _emit("add", out, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _binary_shapes(a, b, "sub")
    out = a.data - b.data

    def backward_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _emit("sub", out, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _binary_shapes(a, b, "mul")
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return _reduce_to(g * b_data, a.shape), _reduce_to(g * a_data, b.shape)

    return _emit("mul", out, (a, b), backward_fn)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward_fn(g):
        return (-g,)

    return _emit("neg", -a.data, (a,), backward_fn)


def scale(a, factor: float) -> Tensor:
    """Multiply by a plain python number (recorded with a constant factor)."""
    a = _as_tensor(a)
    factor = float(factor)

    def backward_fn(g):
        return (g * factor,)

    return _emit("scale", a.data * factor, (a,), backward_fn)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0  # gradient at exactly 0 is defined as 0
    out = np.where(mask, a.data, 0.0).astype(a.data.dtype)

    def backward_fn(g):
        return (g * mask,)

    return _emit("relu", out, (a,), backward_fn)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    # Branch on sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return _emit("sigmoid", out, (a,), backward_fn)


def softplus(a) -> Tensor:
    """log(1 + exp(x)) in the overflow-safe max(x,0) + log1p(exp(-|x|)) form."""
    a = _as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward_fn(g):
        sig = np.empty_like(x)
        pos = x >= 0
        sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        sig[~pos] = ex / (1.0 + ex)
        return (g * sig,)

    return _emit("softplus", out.astype(x.dtype), (a,), backward_fn)


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)  # 0 at exactly 0, matching relu'(0) := 0

    def backward_fn(g):
        return (g * sign,)

    return _emit("abs", np.abs(a.data), (a,), backward_fn)


def sqrt(a) -> Tensor:
    """Elementwise square root; the gradient where the output is 0 is 0."""
    a = _as_tensor(a)
    out = np.sqrt(a.data)

    def backward_fn(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _emit("sqrt", out, (a,), backward_fn)


def power(a, exponent: float) -> Tensor:
    """x**p for a constant p; gradient at x == 0 with p < 1 is defined as 0."""
    a = _as_tensor(a)
    p = float(exponent)
    x = a.data
    out = x ** p

    def backward_fn(g):
        if p == 0.0:
            return (np.zeros_like(x),)
        base = np.where(x != 0, x, 1.0)
        deriv = p * base ** (p - 1.0)
        deriv = np.where(x != 0, deriv, 0.0 if p < 1.0 else (1.0 if p == 1.0 else 0.0))
        return (g * deriv,)

    return _emit("power", out, (a,), backward_fn)


def tsum(a) -> Tensor:
    """Sum of all elements (scalar output)."""
    a = _as_tensor(a)
    out = np.asarray(a.data.sum(dtype=a.data.dtype))
    shape = a.shape

    def backward_fn(g):
        return (np.broadcast_to(g, shape).astype(g.dtype).copy(),)

    return _emit("sum", out, (a,), backward_fn)


def tmean(a) -> Tensor:
    """Mean of all elements (scalar output)."""
    a = _as_tensor(a)
    n = a.data.size
    out = np.asarray(a.data.mean(dtype=a.data.dtype))
    shape = a.shape

    def backward_fn(g):
        return (np.broadcast_to(g / n, shape).astype(g.dtype).copy(),)

    return _emit("mean", out, (a,), backward_fn)


def mean_rows(a) -> Tensor:
    """Row means of a [B, C] tensor -> [B] (used for per-sample losses)."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"mean_rows expects a 2-d tensor, got {a.shape}")
    n = a.shape[1]
    out = a.data.mean(axis=1)

    def backward_fn(g):
        return (np.repeat(g[:, None] / n, n, axis=1).astype(a.data.dtype),)

    return _emit("mean_rows", out, (a,), backward_fn)


def row_scale(x, weights) -> Tensor:
    """Scale each row of [B, C] by the matching entry of a length-B vector."""
    x = _as_tensor(x)
    w = _as_tensor(weights, like=x)
    if x.data.ndim != 2 or w.data.shape != (x.shape[0],):
        raise DimensionError(
            f"row_scale expects [B,C] and [B], got {x.shape} and {w.shape}")
    out = x.data * w.data[:, None]
    x_data, w_data = x.data, w.data

    def backward_fn(g):
        return g * w_data[:, None], (g * x_data).sum(axis=1)

    return _emit("row_scale", out, (x, w), backward_fn)


def where_mask(mask: np.ndarray, a, b) -> Tensor:
    """Select a where mask else b; the mask is a constant, not differentiated."""
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape or a.shape != b.shape:
        raise DimensionError(
            f"where_mask shapes differ: mask {mask.shape}, a {a.shape}, b {b.shape}")
    out = np.where(mask, a.data, b.data)

    def backward_fn(g):
        return np.where(mask, g, 0.0), np.where(mask, 0.0, g)

    return _emit("where_mask", out, (a, b), backward_fn)


def linear(x, weight, bias=None) -> Tensor:
    """x[B,N] @ weight[M,N].T + bias[M]."""
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        bias = _as_tensor(bias, like=x)
        if bias.data.shape != (weight.shape[0],):
            raise DimensionError(
                f"linear: bias {bias.shape} != ({weight.shape[0]},)")
        out = out + bias.data
    x_data, w_data = x.data, weight.data

    if bias is None:
        def backward_fn(g):
            return g @ w_data, g.T @ x_data
        return _emit("linear", out, (x, weight), backward_fn)

    def backward_fn(g):
        return g @ w_data, g.T @ x_data, g.sum(axis=0)

    return _emit("linear", out, (x, weight, bias), backward_fn)


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation of x[B,Cin,H,W] with kernel[Cout,Cin,Kh,Kw].

    The output size (H + 2*padding - Kh) / stride + 1 must be an exact
    integer; no kernel flip is applied.
    """
    x = _as_tensor(x)
    kernel = _as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    batch, cin, height, width = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(
            f"conv2d: kernel expects {kcin} input channels, input has {cin}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d: bad stride={stride} or padding={padding}")
    ph, pw = height + 2 * padding, width + 2 * padding
    if kh > ph or kw > pw:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {ph}x{pw}")
    if (ph - kh) % stride or (pw - kw) % stride:
        from .errors import ConfigurationError
        raise ConfigurationError(
            f"conv2d: padded size {ph}x{pw} minus kernel {kh}x{kw} "
            f"is not divisible by stride {stride}")
    h_out = (ph - kh) // stride + 1
    w_out = (pw - kw) // stride + 1

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # im2col via a strided window view; windows[b, c, i, j, kh, kw]
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    out = np.einsum("bcijxy,ocxy->boij", windows, kernel.data, optimize=True)
    out = np.ascontiguousarray(out)
    if bias is not None:
        bias = _as_tensor(bias, like=x)
        if bias.data.shape != (cout,):
            raise DimensionError(f"conv2d: bias {bias.shape} != ({cout},)")
        out = out + bias.data[None, :, None, None]

    k_data = kernel.data

    def grads_xk(g):
        grad_k = np.einsum("boij,bcijxy->ocxy", g, windows, optimize=True)
        grad_xp = np.zeros((batch, cin, ph, pw), dtype=g.dtype)
        # Scatter one GEMM per kernel tap; 9 iterations for a 3x3 kernel.
        for i in range(kh):
            for j in range(kw):
                patch = np.einsum("boij,oc->bcij", g, k_data[:, :, i, j], optimize=True)
                grad_xp[:, :, i:i + stride * h_out:stride,
                        j:j + stride * w_out:stride] += patch
        if padding:
            grad_x = grad_xp[:, :, padding:-padding, padding:-padding]
        else:
            grad_x = grad_xp
        return np.ascontiguousarray(grad_x), grad_k

    if bias is None:
        def backward_fn(g):
            return grads_xk(g)
        return _emit("conv2d", out, (x, kernel), backward_fn)

    def backward_fn(g):
        grad_x, grad_k = grads_xk(g)
        return grad_x, grad_k, g.sum(axis=(0, 2, 3))

    return _emit("conv2d", out, (x, kernel, bias), backward_fn)


def global_avg_pool(x) -> Tensor:
    """Spatial mean of [B,C,H,W] -> [B,C]."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise DimensionError(f"global_avg_pool expects 4-d input, got {x.shape}")
    _, _, height, width = x.shape
    area = height * width
    out = x.data.mean(axis=(2, 3))
    shape = x.shape

    def backward_fn(g):
        return (np.broadcast_to(g[:, :, None, None] / area, shape)
                .astype(g.dtype).copy(),)

    return _emit("global_avg_pool", out, (x,), backward_fn)


def channel_affine(x, gamma, beta) -> Tensor:
    """Per-channel y = x * gamma[c] + beta[c] on [B,C,H,W] tensors."""
    x = _as_tensor(x)
    gamma = _as_tensor(gamma, like=x)
    beta = _as_tensor(beta, like=x)
    if x.data.ndim != 4:
        raise DimensionError(f"channel_affine expects 4-d input, got {x.shape}")
    channels = x.shape[1]
    if gamma.data.shape != (channels,) or beta.data.shape != (channels,):
        raise DimensionError(
            f"channel_affine: gamma/beta must be ({channels},), "
            f"got {gamma.shape} and {beta.shape}")
    out = x.data * gamma.data[None, :, None, None] + beta.data[None, :, None, None]
    x_data, g_data = x.data, gamma.data

    def backward_fn(g):
        grad_x = g * g_data[None, :, None, None]
        grad_gamma = (g * x_data).sum(axis=(0, 2, 3))
        grad_beta = g.sum(axis=(0, 2, 3))
        return grad_x, grad_gamma, grad_beta

    return _emit("channel_affine", out, (x, gamma, beta), backward_fn)


def concat_channels(a, b) -> Tensor:
    """Concatenate two [B,C,H,W] tensors along the channel axis."""
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise DimensionError("concat_channels expects 4-d inputs")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(
            f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    out = np.concatenate([a.data, b.data], axis=1)
    split = a.shape[1]

    def backward_fn(g):
        return g[:, :split], g[:, split:]

    return _emit("concat_channels", out, (a, b), backward_fn)


def embedding_map(table, ids: np.ndarray, height: int, width: int) -> Tensor:
    """Look up rows of table[K,E] by integer ids and broadcast each to an
    E-channel constant spatial map [B,E,height,width]."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2 or ids.ndim != 1:
        raise DimensionError(
            f"embedding_map expects table [K,E] and 1-d ids, got {table.shape}, {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(
            f"embedding_map: ids outside [0, {table.shape[0]})")
    batch = ids.shape[0]
    emb_dim = table.shape[1]
    rows = table.data[ids]
    out = np.broadcast_to(rows[:, :, None, None], (batch, emb_dim, height, width)).copy()
    table_shape = table.shape

    def backward_fn(g):
        grad_rows = g.sum(axis=(2, 3))
        grad_table = np.zeros(table_shape, dtype=g.dtype)
        np.add.at(grad_table, ids, grad_rows)
        return (grad_table,)

    return _emit("embedding_map", out, (table,), backward_fn)


def l2_normalize_rows(x, eps: float = 0.0) -> Tensor:
    """Normalize each row of [B,F] to unit L2 norm; zero rows are an error."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"l2_normalize_rows expects 2-d input, got {x.shape}")
    norms = np.sqrt((x.data ** 2).sum(axis=1))
    if np.any(norms <= eps):
        raise DimensionError("l2_normalize_rows: zero-norm row")
    out = x.data / norms[:, None]
    x_data = x.data

    def backward_fn(g):
        inv = 1.0 / norms[:, None]
        dot = (g * x_data).sum(axis=1, keepdims=True)
        return (g * inv - x_data * dot * inv ** 3,)

    return _emit("l2_normalize_rows", out, (x,), backward_fn)


# Public aliases matching the operation names used throughout the docs.
sum_all = tsum
mean_all = tmean
