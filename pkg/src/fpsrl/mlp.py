"""Small dense networks with arctan hidden units and a linear scalar output.

Parameters live in one flat float64 vector (per layer: weight matrix
row-major, then biases), which keeps optimizer state and snapshotting
trivial and lets the training kernel update everything in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

Array = np.ndarray


def layer_sizes(n_inputs: int, hidden_layers: int, width: int = 10) -> tuple[int, ...]:
    """Shape tuple (inputs, hidden..., 1) for ``hidden_layers`` in {0,1,2,3,...}."""
    return (n_inputs, *([width] * hidden_layers), 1)


def _offsets(sizes: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray, int]:
    w_off = []
    b_off = []
    total = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w_off.append(total)
        total += n_in * n_out
        b_off.append(total)
        total += n_out
    return np.asarray(w_off, dtype=np.int64), np.asarray(b_off, dtype=np.int64), total


@dataclass
class Mlp:
    """Feedforward net; ``sizes`` includes the input and the final scalar output."""

    sizes: tuple[int, ...]
    params: Array

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or self.sizes[-1] != 1 or min(self.sizes) < 1:
            raise ContractViolation(f"bad layer sizes {self.sizes}")
        self.w_off, self.b_off, total = _offsets(self.sizes)
        self.params = np.ascontiguousarray(self.params, dtype=float)
        if self.params.shape != (total,):
            raise ContractViolation(
                f"parameter vector has shape {self.params.shape}, expected ({total},)"
            )

    @classmethod
    def init(cls, sizes: tuple[int, ...], rng: np.random.Generator) -> "Mlp":
        """Weights and biases uniform in +-1/sqrt(fan_in), per layer."""
        _, _, total = _offsets(tuple(sizes))
        params = np.empty(total)
        pos = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            count = n_in * n_out + n_out
            params[pos : pos + count] = rng.uniform(-bound, bound, size=count)
            pos += count
        return cls(tuple(sizes), params)

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def hidden_layers(self) -> int:
        return len(self.sizes) - 2

    def layer(self, l: int) -> tuple[Array, Array]:
        """Views (weight matrix, bias vector) of layer ``l`` into the flat params."""
        n_in, n_out = self.sizes[l], self.sizes[l + 1]
        w = self.params[self.w_off[l] : self.w_off[l] + n_in * n_out].reshape(n_in, n_out)
        b = self.params[self.b_off[l] : self.b_off[l] + n_out]
        return w, b

    def forward(self, x: Array) -> Array:
        """Predictions for inputs of shape (n, n_inputs) or (n_inputs,)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.n_inputs:
            raise ContractViolation(
                f"input has {x.shape[1]} features, net expects {self.n_inputs}"
            )
        h = x
        last = len(self.sizes) - 2
        for l in range(last + 1):
            w, b = self.layer(l)
            h = h @ w + b
            if l < last:
                h = np.arctan(h)
        out = h[:, 0]
        return out[0] if single else out

    def loss_gradients(self, x: Array, y: Array) -> tuple[float, Array]:
        """Mean-squared-error loss and its flat parameter gradient."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if len(x) != len(y):
            raise ContractViolation("inputs and targets disagree in length")
        last = len(self.sizes) - 2
        acts = [x]
        pre = []
        h = x
        for l in range(last + 1):
            w, b = self.layer(l)
            z = h @ w + b
            pre.append(z)
            h = np.arctan(z) if l < last else z
            acts.append(h)
        err = acts[-1][:, 0] - y
        loss = float(np.mean(err**2))
        grad = np.zeros_like(self.params)
        delta = (2.0 / len(y)) * err[:, None]
        for l in range(last, -1, -1):
            n_in, n_out = self.sizes[l], self.sizes[l + 1]
            gw = grad[self.w_off[l] : self.w_off[l] + n_in * n_out].reshape(n_in, n_out)
            gb = grad[self.b_off[l] : self.b_off[l] + n_out]
            gw[:, :] = acts[l].T @ delta
            gb[:] = delta.sum(axis=0)
            if l > 0:
                w, _ = self.layer(l)
                delta = (delta @ w.T) / (1.0 + pre[l - 1] ** 2)
        return loss, grad

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.params.copy())


@dataclass(frozen=True)
class GradientCheckReport:
    passed: bool
    max_relative_error: float
    worst_param: int
    worst_layer: str
    tolerance: float


def describe_param(net: Mlp, index: int) -> str:
    """Human-readable location of flat parameter ``index``."""
    for l in range(len(net.sizes) - 1):
        n_in, n_out = net.sizes[l], net.sizes[l + 1]
        if index < net.b_off[l]:
            k = index - net.w_off[l]
            return f"layer {l} weight[{k // n_out},{k % n_out}]"
        if index < net.b_off[l] + n_out:
            return f"layer {l} bias[{index - net.b_off[l]}]"
    return f"param {index}"


def gradient_check(
    net: Mlp, x: Array, y: Array, tolerance: float = 1e-4, step: float = 1e-6
) -> GradientCheckReport:
    """Compare analytic loss gradients against central finite differences."""
    _, grad = net.loss_gradients(x, y)
    worst = 0.0
    worst_i = 0
    probe = net.copy()
    for i in range(len(net.params)):
        probe.params[:] = net.params
        probe.params[i] += step
        up, _ = _loss_only(probe, x, y)
        probe.params[i] -= 2 * step
        down, _ = _loss_only(probe, x, y)
        fd = (up - down) / (2 * step)
        rel = abs(grad[i] - fd) / max(abs(grad[i]) + abs(fd), 1e-8)
        if rel > worst:
            worst, worst_i = rel, i
    return GradientCheckReport(
        passed=worst <= tolerance,
        max_relative_error=worst,
        worst_param=worst_i,
        worst_layer=describe_param(net, worst_i),
        tolerance=tolerance,
    )


def _loss_only(net: Mlp, x: Array, y: Array) -> tuple[float, None]:
    pred = net.forward(x)
    y = np.asarray(y, dtype=float).reshape(-1)
    return float(np.mean((pred - y) ** 2)), None
