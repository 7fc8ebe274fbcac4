"""Learned world models: per-state-variable delta networks plus a reward net.

Each state variable gets its own small net predicting the one-step change
from ``(s, a)``; the reward net maps ``(s, a, s')``.  For every target,
1-, 2-, and 3-hidden-layer candidates are trained and the one with the best
generalization error is kept.  A trained model steps like an environment:
``s' = s + deltas``, then ``r`` from the predicted ``s'``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Batch
from .dynamics import BenchmarkSpec, benchmark_spec, wrap_angle
from .errors import ConfigurationError, ContractViolation, DataFormatError, ModelError
from .mlp import Mlp, layer_sizes
from .training import TrainConfig, train_mlp

Array = np.ndarray

MODEL_FORMAT_VERSION = 1
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Normalizer:
    """Per-feature affine map to zero mean, unit variance (train statistics)."""

    mean: Array
    std: Array

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "std", np.atleast_1d(np.asarray(self.std, dtype=float)))
        if self.mean.shape != self.std.shape or np.any(self.std <= 0):
            raise ContractViolation("normalizer needs matching means and positive stds")

    @classmethod
    def fit(cls, values: Array) -> "Normalizer":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        std = values.std(axis=0)
        # constant features pass through unscaled
        std = np.where(std < STD_FLOOR, 1.0, std)
        return cls(mean=values.mean(axis=0), std=std)

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def normalize(self, values: Array) -> Array:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def denormalize(self, values: Array) -> Array:
        return np.asarray(values, dtype=float) * self.std + self.mean


@dataclass(frozen=True)
class NetworkReport:
    """One (target, depth) training outcome; errors in normalized units."""

    target: str
    depth: int
    train_mse: float
    val_mse: float
    gen_mse: float
    best_epoch: int
    selected: bool = False


@dataclass
class SplitReport:
    entries: list[NetworkReport] = field(default_factory=list)

    def for_target(self, target: str) -> list[NetworkReport]:
        return [e for e in self.entries if e.target == target]

    def selected(self, target: str) -> NetworkReport:
        for e in self.entries:
            if e.target == target and e.selected:
                return e
        raise ContractViolation(f"no selected entry for target {target!r}")

    @property
    def targets(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.target not in seen:
                seen.append(e.target)
        return seen


@dataclass
class TrainedNetwork:
    """A net with the normalizers needed to use it on raw units."""

    net: Mlp
    input_norm: Normalizer
    target_norm: Normalizer

    def predict(self, inputs: Array) -> Array:
        out = self.net.forward(self.input_norm.normalize(inputs))
        return out * self.target_norm.std[0] + self.target_norm.mean[0]


@dataclass
class DatasetSplit:
    train: Array   # index arrays into the batch
    val: Array
    gen: Array


def split_dataset(batch: Batch, seed: int = 0) -> DatasetSplit:
    """Random 80/10/10 split over individual transitions.

    Splitting at transition granularity matters for sparse targets: goal
    rewards may occupy a handful of rows, and validation must see some of
    them, or the best-validation snapshot locks in a constant predictor.
    """
    n = len(batch)
    if n < 10:
        raise ConfigurationError("need at least 10 transitions to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = round(0.8 * n)
    n_val = round(0.1 * n)
    return DatasetSplit(
        train=order[:n_train],
        val=order[n_train : n_train + n_val],
        gen=order[n_train + n_val :],
    )


def delta_targets(batch: Batch, spec: BenchmarkSpec) -> Array:
    """Per-variable next-state deltas, (n, D); wrapped dims use the short way around."""
    deltas = batch.next_states - batch.states
    if spec.wrap_dim is not None:
        deltas[:, spec.wrap_dim] = wrap_angle(deltas[:, spec.wrap_dim])
    return deltas


@dataclass(frozen=True)
class ModelSettings:
    """Knobs of one world-model fit."""

    depths: tuple[int, ...] = (1, 2, 3)
    epochs: int = 3000
    batch_size: int = 64
    learning_rate: float = 1e-2
    seed: int = 0

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=seed,
        )


@dataclass
class WorldModel:
    """Step-compatible learned model of one benchmark."""

    benchmark: str
    state_dim: int
    wrap_dim: int | None
    delta_nets: list[TrainedNetwork]
    reward_net: TrainedNetwork
    report: SplitReport

    def __post_init__(self):
        if len(self.delta_nets) != self.state_dim:
            raise ContractViolation("need one delta network per state variable")
        self._stack = None
        self._reward_fast = None

    def step_batch(self, s: Array, a: Array) -> tuple[Array, Array]:
        """Predicted next states and rewards for (n, D) states and (n,) actions."""
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        if s.ndim != 2 or s.shape[1] != self.state_dim or a.shape != (len(s),):
            raise ContractViolation("bad state/action batch shapes")
        if self._reward_fast is None:
            self._reward_fast = CompiledNet(self.reward_net)
        d = self.state_dim
        x = np.empty((len(s), 2 * d + 1))
        x[:, :d] = s
        x[:, d] = a
        deltas = self._delta_forward(x[:, : d + 1])
        s_next = s + deltas
        if self.wrap_dim is not None:
            s_next[:, self.wrap_dim] = wrap_angle(s_next[:, self.wrap_dim])
        x[:, d + 1 :] = s_next
        r = self._reward_fast.forward(x)
        return s_next, r

    def step(self, s: Array, a: float) -> tuple[Array, float]:
        """Single-transition prediction; raises on non-finite output."""
        s2, r = self.step_batch(np.asarray(s, dtype=float)[None, :], np.asarray([a]))
        if not (np.all(np.isfinite(s2)) and np.isfinite(r[0])):
            raise ModelError("model produced a non-finite prediction")
        return s2[0], float(r[0])

    # The delta nets share one input normalizer, so their first layers can be
    # evaluated as a single matrix product across all networks, with the
    # normalizers folded into the affine maps.
    def _delta_forward(self, x: Array) -> Array:
        if self._stack is None:
            self._stack = _DeltaStack(self.delta_nets)
        return self._stack.forward(x)


def _folded_layers(tn: TrainedNetwork) -> list[tuple[Array, Array]]:
    """Layer affine maps rewritten to act on raw inputs and emit raw outputs."""
    layers = [tn.net.layer(l) for l in range(len(tn.net.sizes) - 1)]
    inv = 1.0 / tn.input_norm.std
    w0, b0 = layers[0]
    w0 = inv[:, None] * w0
    b0 = b0 - (tn.input_norm.mean * inv) @ layers[0][0]
    layers[0] = (w0, b0)
    t_std, t_mean = tn.target_norm.std[0], tn.target_norm.mean[0]
    w_last, b_last = layers[-1]
    layers[-1] = (w_last * t_std, b_last * t_std + t_mean)
    return layers


class _DeltaStack:
    def __init__(self, nets: list[TrainedNetwork]):
        norm = nets[0].input_norm
        for tn in nets[1:]:
            if not (
                np.array_equal(tn.input_norm.mean, norm.mean)
                and np.array_equal(tn.input_norm.std, norm.std)
            ):
                raise ContractViolation("delta networks must share the input normalizer")
        if any(tn.net.hidden_layers < 1 for tn in nets):
            # hidden-free nets would need their stacked column left unsquashed
            self.fallback = nets
            return
        self.fallback = None
        folded = [_folded_layers(tn) for tn in nets]
        self.w1 = np.concatenate([f[0][0] for f in folded], axis=1)
        self.b1 = np.concatenate([f[0][1] for f in folded])
        self.deep = [f[1:] for f in folded]
        self.bounds = np.cumsum([0] + [f[0][0].shape[1] for f in folded])

    def forward(self, x: Array) -> Array:
        if self.fallback is not None:
            return np.column_stack([tn.predict(x) for tn in self.fallback])
        h_all = np.arctan(x @ self.w1 + self.b1)
        out = np.empty((len(x), len(self.deep)))
        for k, layers in enumerate(self.deep):
            h = h_all[:, self.bounds[k] : self.bounds[k + 1]]
            for w, b in layers[:-1]:
                h = np.arctan(h @ w + b)
            w, b = layers[-1]
            out[:, k] = (h @ w)[:, 0] + b[0]
        return out


class CompiledNet:
    """Single net with normalizers folded in, for raw-unit batch prediction."""

    def __init__(self, tn: TrainedNetwork):
        self.layers = _folded_layers(tn)

    def forward(self, x: Array) -> Array:
        h = x
        for w, b in self.layers[:-1]:
            h = np.arctan(h @ w + b)
        w, b = self.layers[-1]
        return (h @ w)[:, 0] + b[0]


def target_names(spec: BenchmarkSpec) -> list[str]:
    return [f"delta_{label}" for label in spec.state_labels] + ["reward"]


def train_world_model(
    batch: Batch, spec: BenchmarkSpec, settings: ModelSettings = ModelSettings()
) -> WorldModel:
    """Fit all per-variable candidates and assemble the best ones."""
    if batch.benchmark != spec.benchmark_id:
        raise ContractViolation("batch and benchmark spec disagree")
    split = split_dataset(batch, seed=settings.seed)

    sa = np.concatenate([batch.states, batch.actions[:, None]], axis=1)
    sas = np.concatenate([sa, batch.next_states], axis=1)
    deltas = delta_targets(batch, spec)
    names = target_names(spec)

    delta_in_norm = Normalizer.fit(sa[split.train])
    reward_in_norm = Normalizer.fit(sas[split.train])

    # independent deterministic seeds per (target, depth): one for the weight
    # init, one for the shuffle order
    seed_grid = np.random.default_rng(settings.seed).integers(
        0, 2**63, size=(len(names), len(settings.depths), 2)
    )

    report = SplitReport()
    chosen: list[TrainedNetwork] = []
    for t, name in enumerate(names):
        if name == "reward":
            inputs, in_norm = sas, reward_in_norm
            raw_target = batch.rewards
            # rewards are already O(1); standardizing would blow the rare
            # goal rewards up into extreme outlier targets
            t_norm = Normalizer.identity(1)
        else:
            inputs, in_norm = sa, delta_in_norm
            raw_target = deltas[:, t]
            t_norm = Normalizer.fit(raw_target[split.train])
        x = in_norm.normalize(inputs)
        y = (raw_target - t_norm.mean[0]) / t_norm.std[0]

        candidates: list[tuple[float, TrainedNetwork, NetworkReport]] = []
        for d, depth in enumerate(settings.depths):
            init_rng = np.random.default_rng(seed_grid[t, d, 0])
            net = Mlp.init(layer_sizes(inputs.shape[1], depth), init_rng)
            result = train_mlp(
                net,
                x[split.train],
                y[split.train],
                x[split.val],
                y[split.val],
                settings.train_config(int(seed_grid[t, d, 1])),
            )
            gen_mse = float(np.mean((result.net.forward(x[split.gen]) - y[split.gen]) ** 2))
            entry = NetworkReport(
                target=name,
                depth=depth,
                train_mse=result.train_mse,
                val_mse=result.val_mse,
                gen_mse=gen_mse,
                best_epoch=result.best_epoch,
            )
            candidates.append((gen_mse, TrainedNetwork(result.net, in_norm, t_norm), entry))

        best = min(range(len(candidates)), key=lambda i: candidates[i][0])
        for i, (_, _, entry) in enumerate(candidates):
            report.entries.append(
                NetworkReport(**{**entry.__dict__, "selected": i == best})
            )
        chosen.append(candidates[best][1])

    return WorldModel(
        benchmark=spec.benchmark_id,
        state_dim=spec.state_dim,
        wrap_dim=spec.wrap_dim,
        delta_nets=chosen[:-1],
        reward_net=chosen[-1],
        report=report,
    )


# ---------------------------------------------------------------------------
# persistence

def _net_payload(tn: TrainedNetwork) -> dict:
    return {
        "sizes": list(tn.net.sizes),
        "params": tn.net.params.tolist(),
        "input_mean": tn.input_norm.mean.tolist(),
        "input_std": tn.input_norm.std.tolist(),
        "target_mean": tn.target_norm.mean.tolist(),
        "target_std": tn.target_norm.std.tolist(),
    }


def _net_restore(payload: dict) -> TrainedNetwork:
    return TrainedNetwork(
        net=Mlp(tuple(payload["sizes"]), np.asarray(payload["params"], dtype=float)),
        input_norm=Normalizer(
            np.asarray(payload["input_mean"]), np.asarray(payload["input_std"])
        ),
        target_norm=Normalizer(
            np.asarray(payload["target_mean"]), np.asarray(payload["target_std"])
        ),
    )


def save_model(model: WorldModel, path: str | Path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "world_model",
        "benchmark": model.benchmark,
        "state_dim": model.state_dim,
        "wrap_dim": model.wrap_dim,
        "delta_nets": [_net_payload(tn) for tn in model.delta_nets],
        "reward_net": _net_payload(model.reward_net),
        "report": [e.__dict__ for e in model.report.entries],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path: str | Path) -> WorldModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise DataFormatError(f"invalid model file ({err.msg})", line=err.lineno) from None
    if doc.get("kind") != "world_model":
        raise DataFormatError("not a world-model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {doc.get('format_version')!r}")
    try:
        spec = benchmark_spec(doc["benchmark"])
    except ConfigurationError:
        raise DataFormatError(f"unknown benchmark {doc['benchmark']!r} in model file") from None
    model = WorldModel(
        benchmark=doc["benchmark"],
        state_dim=doc["state_dim"],
        wrap_dim=doc["wrap_dim"],
        delta_nets=[_net_restore(p) for p in doc["delta_nets"]],
        reward_net=_net_restore(doc["reward_net"]),
        report=SplitReport([NetworkReport(**e) for e in doc["report"]]),
    )
    if model.state_dim != spec.state_dim:
        raise DataFormatError(
            f"model state dimension {model.state_dim} does not match benchmark "
            f"{spec.benchmark_id} ({spec.state_dim})"
        )
    expected_in = spec.state_dim + 1
    for tn in model.delta_nets:
        if tn.net.n_inputs != expected_in:
            raise DataFormatError("delta network input size does not match the benchmark")
    if model.reward_net.net.n_inputs != 2 * spec.state_dim + 1:
        raise DataFormatError("reward network input size does not match the benchmark")
    return model
