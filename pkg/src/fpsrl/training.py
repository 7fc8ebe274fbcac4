"""Mini-batch SGD trainer with moving-RMS step scaling.

The per-epoch sweep is compiled with numba; Python only shuffles, runs the
validation forward pass, and keeps the best-validation parameter snapshot.
The learning rate halves whenever validation has not improved for
``plateau_patience`` epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ContractViolation, TrainingDiverged
from .mlp import Mlp

Array = np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 64
    learning_rate: float = 1e-2
    plateau_patience: int = 200
    decay_factor: float = 0.5
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("epochs and batch size must be positive")
        if not (0 < self.learning_rate and 0 < self.decay_factor <= 1):
            raise ContractViolation("bad learning-rate settings")


@dataclass
class TrainResult:
    net: Mlp                  # best-validation snapshot
    train_mse: float          # train loss of the epoch that produced the snapshot
    val_mse: float            # its validation loss
    best_epoch: int
    final_val_mse: float      # validation loss of the last epoch's parameters
    epochs_run: int


@njit(cache=True)
def _sgd_epoch(params, rms, x, y, perm, batch_size, lr, beta, eps, w_off, b_off, dims):
    n = x.shape[0]
    n_layers = dims.shape[0]
    grad = np.zeros_like(params)
    total = 0.0
    for start in range(0, n, batch_size):
        end = min(start + batch_size, n)
        rows = perm[start:end]
        b = end - start
        xb = x[rows]
        yb = y[rows]

        acts = [xb]
        pres = [xb]
        for l in range(n_layers):
            n_in = dims[l, 0]
            n_out = dims[l, 1]
            w = params[w_off[l] : w_off[l] + n_in * n_out].reshape(n_in, n_out)
            bias = params[b_off[l] : b_off[l] + n_out]
            z = np.dot(acts[l], w)
            for i in range(b):
                for j in range(n_out):
                    z[i, j] += bias[j]
            pres.append(z)
            if l < n_layers - 1:
                acts.append(np.arctan(z))
            else:
                acts.append(z)

        delta = acts[n_layers] - yb.reshape(b, 1)
        for i in range(b):
            total += delta[i, 0] * delta[i, 0]
        delta = (2.0 / b) * delta

        for l in range(n_layers - 1, -1, -1):
            n_in = dims[l, 0]
            n_out = dims[l, 1]
            w = params[w_off[l] : w_off[l] + n_in * n_out].reshape(n_in, n_out)
            gw = grad[w_off[l] : w_off[l] + n_in * n_out].reshape(n_in, n_out)
            gb = grad[b_off[l] : b_off[l] + n_out]
            gw[:, :] = np.dot(acts[l].T.copy(), delta)
            for j in range(n_out):
                acc = 0.0
                for i in range(b):
                    acc += delta[i, j]
                gb[j] = acc
            if l > 0:
                back = np.dot(delta, w.T.copy())
                z = pres[l]
                delta = back / (1.0 + z * z)

        for k in range(params.size):
            g = grad[k]
            rms[k] = beta * rms[k] + (1.0 - beta) * g * g
            params[k] -= lr * g / (np.sqrt(rms[k]) + eps)
    return total / n


def sgd_epoch(net: Mlp, rms: Array, x: Array, y: Array, perm: Array, lr: float,
              config: TrainConfig) -> float:
    """One shuffled pass over the data, updating ``net.params`` in place."""
    dims = np.array(
        [(net.sizes[l], net.sizes[l + 1]) for l in range(len(net.sizes) - 1)],
        dtype=np.int64,
    )
    return float(
        _sgd_epoch(
            net.params, rms, x, y, perm, config.batch_size, lr,
            config.rms_decay, config.rms_epsilon, net.w_off, net.b_off, dims,
        )
    )


def train_mlp(net: Mlp, x_train: Array, y_train: Array, x_val: Array, y_val: Array,
              config: TrainConfig) -> TrainResult:
    """Train in place and return the best-validation snapshot.

    Inputs are expected already normalized; this routine is agnostic to what
    the features mean.
    """
    x_train = np.ascontiguousarray(x_train, dtype=float)
    y_train = np.ascontiguousarray(y_train, dtype=float).reshape(-1)
    x_val = np.ascontiguousarray(x_val, dtype=float)
    y_val = np.ascontiguousarray(y_val, dtype=float).reshape(-1)
    if len(x_train) != len(y_train) or len(x_val) != len(y_val):
        raise ContractViolation("inputs and targets disagree in length")
    if x_train.shape[1] != net.n_inputs or x_val.shape[1] != net.n_inputs:
        raise ContractViolation("feature count does not match the network input size")

    rng = np.random.default_rng(config.seed)
    rms = np.zeros_like(net.params)
    lr = config.learning_rate

    best = TrainResult(
        net=net.copy(),
        train_mse=float("inf"),
        val_mse=float("inf"),
        best_epoch=0,
        final_val_mse=float("inf"),
        epochs_run=0,
    )
    since_improvement = 0
    val_mse = float("inf")
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(x_train))
        train_mse = sgd_epoch(net, rms, x_train, y_train, perm, lr, config)
        if not np.isfinite(train_mse):
            raise TrainingDiverged(
                f"training loss became non-finite at epoch {epoch} (lr={lr:g})"
            )
        # overflow to inf is fine: an exploded net just loses the comparison
        with np.errstate(over="ignore"):
            val_mse = float(np.mean((net.forward(x_val) - y_val) ** 2))
        if val_mse < best.val_mse:
            best.net = net.copy()
            best.train_mse = train_mse
            best.val_mse = val_mse
            best.best_epoch = epoch
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= config.plateau_patience:
                lr *= config.decay_factor
                since_improvement = 0
    best.final_val_mse = val_mse
    best.epochs_run = config.epochs
    return best
