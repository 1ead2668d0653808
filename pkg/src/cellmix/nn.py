"""Network building blocks on top of the autodiff engine.

A ``Module`` is any object whose ``parameters()`` yields (name, Tensor)
pairs and that is callable on a Tensor.  ``grad_check`` verifies the
reverse-mode gradients of such an object against central finite
differences in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .errors import UsageError


class Module:
    """Base class providing parameter discovery over instance attributes."""

    def parameters(self):
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                for sub, p in value.parameters():
                    yield f"{name}.{sub}", p
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, p in item.parameters():
                            yield f"{name}.{i}.{sub}", p
                    elif isinstance(item, Tensor):
                        yield f"{name}.{i}", item

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.parameters())
        if set(state) != set(params):
            missing = set(params) - set(state)
            extra = set(state) - set(params)
            raise UsageError(
                f"state dict mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, arr in state.items():
            p = params[name]
            if arr.shape != p.data.shape:
                from .errors import CheckpointError
                raise CheckpointError(
                    f"parameter {name}: checkpoint shape {arr.shape} != model shape {p.data.shape}")
            p.data = arr.astype(p.data.dtype).copy()

    def cast(self, dtype) -> None:
        for _, p in self.parameters():
            p.data = p.data.astype(dtype)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


class Conv2d(Module):
    """3x3-style convolution layer with He (fan-in) initialization."""

    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0, dtype=np.float32):
        fan_in = in_channels * kernel_size * kernel_size
        std = np.sqrt(2.0 / fan_in)
        self.kernel = Tensor(
            rng.normal(0.0, std, size=(out_channels, in_channels, kernel_size, kernel_size)),
            requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, dtype=dtype)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return ad.conv2d(x, self.kernel, self.bias,
                         stride=self.stride, padding=self.padding)


class Linear(Module):
    """Fully connected layer with uniform fan-in initialization."""

    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(out_features, in_features)),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, dtype=dtype)

    def forward(self, x):
        return ad.linear(x, self.weight, self.bias)


class ChannelAffine(Module):
    """Per-channel learnable scale and shift (scale=1, shift=0 at init)."""

    def __init__(self, channels, dtype=np.float32):
        self.gamma = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)

    def forward(self, x):
        return ad.channel_affine(x, self.gamma, self.beta)


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    max_abs_err: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def __str__(self):
        lines = [f"grad check (tolerance {self.tolerance:g}):"]
        for e in self.entries:
            status = "ok  " if e.passed else "FAIL"
            lines.append(f"  [{status}] {e.name:<30s} rel={e.max_rel_err:.3e} abs={e.max_abs_err:.3e}")
        lines.append(f"  overall: {'pass' if self.passed else 'FAIL'} (max rel {self.max_rel_err:.3e})")
        return "\n".join(lines)


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(net, x: Tensor, tolerance: float = 1e-5, h: float = 1e-3,
               loss_fn=None) -> GradCheckReport:
    """Compare reverse-mode gradients with central finite differences.

    The network parameters and the input are temporarily promoted to
    float64 (restored afterwards); the default scalarization is the mean
    of the network output.  Every parameter tensor appears in the report.
    """
    params = list(net.parameters())
    saved = [(p, p.data) for _, p in params]
    saved_x = x.data
    try:
        for _, p in params:
            p.data = p.data.astype(np.float64)
        x.data = x.data.astype(np.float64)

        def loss_value() -> float:
            out = net(x)
            out = loss_fn(out) if loss_fn is not None else ad.tmean(out)
            return out.item()

        net.zero_grad()
        tape = Tape()
        with tape:
            out = net(x)
            root = loss_fn(out) if loss_fn is not None else ad.tmean(out)
        backward(tape, root)

        report = GradCheckReport(tolerance=tolerance)
        for name, p in params:
            analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            num_flat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_value()
                flat[i] = orig - h
                down = loss_value()
                flat[i] = orig
                num_flat[i] = (up - down) / (2.0 * h)
            rel = _rel_err(analytic, numeric)
            abs_err = np.abs(analytic - numeric)
            report.entries.append(GradCheckEntry(
                name=name,
                max_rel_err=float(rel.max()) if rel.size else 0.0,
                max_abs_err=float(abs_err.max()) if abs_err.size else 0.0,
                passed=bool((rel < tolerance).all()),
            ))
        return report
    finally:
        for (_, p), data in zip(params, [d for _, d in saved]):
            p.data = data
        x.data = saved_x
        net.zero_grad()
