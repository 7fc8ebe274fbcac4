"""Gaussian fuzzy-rule policies over a flat parameter vector.

A policy holds C rules; rule i has per-dimension Gaussian centers and
widths plus a scalar output weight.  The action is the membership-weighted
mean of the rule outputs, squashed by tanh with slope ``alpha`` and scaled
to the force range.  The flat layout is, per rule, ``c_1..c_D, w_1..w_D,
o``, with ``alpha`` as the final entry.

With mirror symmetry enabled only half the rules are free parameters; the
other half are the negated-center, negated-output copies, which makes the
policy an odd function of the state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation, DataFormatError

Array = np.ndarray

POLICY_FORMAT_VERSION = 1

SIGMA_MIN = 1e-3
ALPHA_MIN = 1e-6
ALPHA_SEARCH_LOW = 1e-2
ALPHA_SEARCH_HIGH = 10.0
OUTPUT_SEARCH_BOUND = 5.0
CENTER_EXTENT_FACTOR = 1.5


@dataclass(frozen=True)
class FuzzyRule:
    """One rule: a Gaussian prototype state and an output weight."""

    centers: Array
    widths: Array
    output: float

    def __post_init__(self):
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=float))
        if self.centers.shape != self.widths.shape or self.centers.ndim != 1:
            raise ContractViolation("rule centers and widths must be equal-length vectors")
        if not (np.all(np.isfinite(self.centers)) and np.all(np.isfinite(self.widths))):
            raise ContractViolation("non-finite rule parameters")
        if np.any(self.widths < SIGMA_MIN):
            raise ContractViolation(f"rule widths must be >= {SIGMA_MIN}")
        if not np.isfinite(self.output):
            raise ContractViolation("non-finite rule output")


@dataclass(frozen=True)
class FuzzyPolicyParams:
    """Full parameter set of a fuzzy policy.

    ``centers`` and ``widths`` have shape (C, D), ``outputs`` shape (C,).
    ``action_scale`` maps the tanh output onto the benchmark force range and
    is configuration, not a searched parameter.
    """

    centers: Array
    widths: Array
    outputs: Array
    alpha: float
    action_scale: float
    symmetric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=float))
        object.__setattr__(self, "outputs", np.asarray(self.outputs, dtype=float))
        c, w, o = self.centers, self.widths, self.outputs
        if c.ndim != 2 or c.shape != w.shape or o.shape != (c.shape[0],):
            raise ContractViolation(
                f"inconsistent policy shapes: centers {c.shape}, widths {w.shape}, outputs {o.shape}"
            )
        if c.shape[0] < 1:
            raise ContractViolation("need at least one rule")
        if not (np.isfinite(c).all() and np.isfinite(w).all() and np.isfinite(o).all()):
            raise ContractViolation("non-finite policy parameters")
        if np.any(w < SIGMA_MIN):
            raise ContractViolation(f"widths must be >= {SIGMA_MIN}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ContractViolation("alpha must be positive and finite")
        if not (np.isfinite(self.action_scale) and self.action_scale > 0):
            raise ContractViolation("action scale must be positive and finite")
        if self.symmetric and c.shape[0] % 2:
            raise ConfigurationError("symmetric policies need an even rule count")

    @property
    def rule_count(self) -> int:
        return self.centers.shape[0]

    @property
    def state_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def rules(self) -> list[FuzzyRule]:
        return [
            FuzzyRule(self.centers[i], self.widths[i], float(self.outputs[i]))
            for i in range(self.rule_count)
        ]


def param_count(state_dim: int, rule_count: int) -> int:
    """Flat-vector length for a full policy: (2D+1)*C + 1."""
    return (2 * state_dim + 1) * rule_count + 1


def free_param_count(state_dim: int, rule_count: int, symmetric: bool) -> int:
    """Searched-vector length; symmetric policies only encode C/2 rules."""
    if symmetric:
        if rule_count % 2:
            raise ConfigurationError("symmetric policies need an even rule count")
        return param_count(state_dim, rule_count // 2)
    return param_count(state_dim, rule_count)


# ---------------------------------------------------------------------------
# evaluation

def membership(rule: FuzzyRule, s: Array) -> float:
    """Gaussian match of state ``s`` to the rule prototype, in (0, 1]."""
    s = np.asarray(s, dtype=float)
    if s.shape != rule.centers.shape:
        raise ContractViolation(
            f"state dimension {s.shape} does not match rule dimension {rule.centers.shape}"
        )
    z = (rule.centers - s) / rule.widths
    return float(np.exp(-0.5 * np.dot(z, z)))


def _log_memberships(params: FuzzyPolicyParams, states: Array) -> Array:
    # (..., C): log of each rule's Gaussian, kept in log space so that far
    # states cannot underflow every rule to zero at once
    diff = (states[..., None, :] - params.centers) / params.widths
    return -0.5 * np.sum(diff * diff, axis=-1)


def memberships(params: FuzzyPolicyParams, states: Array) -> Array:
    """All rule memberships for one state or a batch, shape (..., C)."""
    states = _check_state_batch(params.state_dim, states)
    return np.exp(_log_memberships(params, states))


def policy_output_batch(params: FuzzyPolicyParams, states: Array) -> Array:
    """Actions for a batch of states, shape ``states.shape[:-1]``."""
    states = _check_state_batch(params.state_dim, states)
    logm = _log_memberships(params, states)
    # shift per state so the best-matching rule has weight exactly 1
    logm -= logm.max(axis=-1, keepdims=True)
    m = np.exp(logm)
    mean = (m @ params.outputs) / m.sum(axis=-1)
    out = params.action_scale * np.tanh(params.alpha * mean)
    # tanh rounds to +-1 for large arguments; keep the open-interval bound
    limit = np.nextafter(params.action_scale, 0.0)
    return np.clip(out, -limit, limit)


def policy_output(params: FuzzyPolicyParams, s: Array) -> float:
    """Single-state action, in (-scale, scale)."""
    return float(policy_output_batch(params, np.asarray(s, dtype=float)[None, :])[0])


def _check_state_batch(dim: int, states: Array) -> Array:
    states = np.asarray(states, dtype=float)
    if states.ndim < 1 or states.shape[-1] != dim:
        raise ContractViolation(
            f"states must have trailing dimension {dim}, got shape {states.shape}"
        )
    return states


# ---------------------------------------------------------------------------
# flat encoding

def encode(params: FuzzyPolicyParams) -> Array:
    """Flatten to the search layout: per rule c_1..c_D, w_1..w_D, o; then alpha.

    Symmetric policies encode only their first C/2 (free) rules.
    """
    rules = params.rule_count // 2 if params.symmetric else params.rule_count
    parts = []
    for i in range(rules):
        parts.append(params.centers[i])
        parts.append(params.widths[i])
        parts.append([params.outputs[i]])
    parts.append([params.alpha])
    return np.concatenate(parts)


def decode(
    x: Array,
    state_dim: int,
    rule_count: int,
    action_scale: float,
    symmetric: bool = False,
) -> FuzzyPolicyParams:
    """Rebuild a policy from a flat vector (inverse of :func:`encode`).

    Raw width entries may be negative or tiny: widths become
    ``max(|w|, SIGMA_MIN)`` and alpha ``max(|alpha|, ALPHA_MIN)`` so that any
    point of the search box is a valid policy.
    """
    x = np.asarray(x, dtype=float)
    expected = free_param_count(state_dim, rule_count, symmetric)
    if x.shape != (expected,):
        raise ContractViolation(
            f"flat vector has shape {x.shape}, expected ({expected},)"
        )
    if not np.all(np.isfinite(x)):
        raise ContractViolation("non-finite entries in flat vector")
    free_rules = rule_count // 2 if symmetric else rule_count
    body = x[:-1].reshape(free_rules, 2 * state_dim + 1)
    centers = body[:, :state_dim]
    widths = np.maximum(np.abs(body[:, state_dim : 2 * state_dim]), SIGMA_MIN)
    outputs = body[:, 2 * state_dim]
    alpha = max(abs(float(x[-1])), ALPHA_MIN)
    if symmetric:
        centers = np.vstack([centers, -centers])
        widths = np.vstack([widths, widths])
        outputs = np.concatenate([outputs, -outputs])
    return FuzzyPolicyParams(
        centers=centers,
        widths=widths,
        outputs=outputs,
        alpha=alpha,
        action_scale=action_scale,
        symmetric=symmetric,
    )


def expand_symmetric(half: Array, state_dim: int, action_scale: float) -> FuzzyPolicyParams:
    """Build a full mirror-symmetric policy from the free half of the rules.

    Each free rule (c, w, o) gains a twin (-c, w, -o); alpha is shared.  The
    result is odd: pi(-s) = -pi(s).
    """
    half = np.asarray(half, dtype=float)
    if half.ndim != 1 or (half.size - 1) % (2 * state_dim + 1):
        raise ContractViolation(
            f"half vector of length {half.size} does not fit D={state_dim} rules"
        )
    free_rules = (half.size - 1) // (2 * state_dim + 1)
    return decode(
        half, state_dim, 2 * free_rules, action_scale, symmetric=True
    )


# ---------------------------------------------------------------------------
# search box

def search_box(
    nominal_low: Array,
    nominal_high: Array,
    rule_count: int,
    symmetric: bool = False,
) -> tuple[Array, Array]:
    """Component bounds for the flat search vector.

    Centers may sit up to 1.5x the nominal half-extent from the region
    midpoint, widths span (SIGMA_MIN, full region width], outputs
    [-5, 5], alpha [0.01, 10].
    """
    lo = np.asarray(nominal_low, dtype=float)
    hi = np.asarray(nominal_high, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
        raise ContractViolation("nominal bounds must satisfy low < high per dimension")
    state_dim = lo.size
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    c_lo = mid - CENTER_EXTENT_FACTOR * half
    c_hi = mid + CENTER_EXTENT_FACTOR * half
    w_lo = np.full(state_dim, SIGMA_MIN)
    w_hi = hi - lo
    free_rules = rule_count // 2 if symmetric else rule_count
    if symmetric and rule_count % 2:
        raise ConfigurationError("symmetric policies need an even rule count")
    rule_lo = np.concatenate([c_lo, w_lo, [-OUTPUT_SEARCH_BOUND]])
    rule_hi = np.concatenate([c_hi, w_hi, [OUTPUT_SEARCH_BOUND]])
    x_min = np.concatenate([np.tile(rule_lo, free_rules), [ALPHA_SEARCH_LOW]])
    x_max = np.concatenate([np.tile(rule_hi, free_rules), [ALPHA_SEARCH_HIGH]])
    return x_min, x_max


# ---------------------------------------------------------------------------
# particle-batched evaluation

@dataclass(frozen=True)
class PolicyShape:
    """Structural description of the searched policy family."""

    state_dim: int
    rule_count: int
    action_scale: float
    symmetric: bool = False

    def __post_init__(self):
        if self.symmetric and self.rule_count % 2:
            raise ConfigurationError("symmetric policies need an even rule count")

    @property
    def free_length(self) -> int:
        return free_param_count(self.state_dim, self.rule_count, self.symmetric)

    def decode(self, x: Array) -> FuzzyPolicyParams:
        return decode(
            x, self.state_dim, self.rule_count, self.action_scale, self.symmetric
        )


def decode_population(shape: PolicyShape, xs: Array) -> tuple[Array, Array, Array, Array]:
    """Vectorized decode of N flat vectors.

    Returns (centers (N,C,D), widths (N,C,D), outputs (N,C), alpha (N,)).
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != shape.free_length:
        raise ContractViolation(
            f"population must have shape (N, {shape.free_length}), got {xs.shape}"
        )
    d = shape.state_dim
    free_rules = shape.rule_count // 2 if shape.symmetric else shape.rule_count
    body = xs[:, :-1].reshape(xs.shape[0], free_rules, 2 * d + 1)
    centers = body[:, :, :d]
    widths = np.maximum(np.abs(body[:, :, d : 2 * d]), SIGMA_MIN)
    outputs = body[:, :, 2 * d]
    alpha = np.maximum(np.abs(xs[:, -1]), ALPHA_MIN)
    if shape.symmetric:
        centers = np.concatenate([centers, -centers], axis=1)
        widths = np.concatenate([widths, widths], axis=1)
        outputs = np.concatenate([outputs, -outputs], axis=1)
    return centers, widths, outputs, alpha


def population_actions(
    centers: Array, widths: Array, outputs: Array, alpha: Array, scale: float, states: Array
) -> Array:
    """Actions of N policies on N matching state rows.

    ``states`` has shape (N, S, D); policy i acts on states[i], giving an
    (N, S) action array.
    """
    diff = (states[:, :, None, :] - centers[:, None, :, :]) / widths[:, None, :, :]
    logm = -0.5 * np.einsum("nscd,nscd->nsc", diff, diff)
    logm -= logm.max(axis=-1, keepdims=True)
    m = np.exp(logm)
    mean = np.einsum("nsc,nc->ns", m, outputs) / m.sum(axis=-1)
    out = scale * np.tanh(alpha[:, None] * mean)
    limit = np.nextafter(scale, 0.0)
    return np.clip(out, -limit, limit)


def save_policy(
    params: FuzzyPolicyParams, path, benchmark: str | None = None
) -> None:
    """Write a policy file: a header line plus the full flat vector.

    The vector always stores every rule, including the mirrored halves of
    symmetric policies, so a reader does not need the expansion logic.
    """
    parts = []
    for i in range(params.rule_count):
        parts.append(params.centers[i])
        parts.append(params.widths[i])
        parts.append([params.outputs[i]])
    parts.append([params.alpha])
    full = np.concatenate(parts)
    header = {
        "format_version": POLICY_FORMAT_VERSION,
        "kind": "fuzzy_policy",
        "state_dim": params.state_dim,
        "rule_count": params.rule_count,
        "action_scale": params.action_scale,
        "symmetric": params.symmetric,
    }
    if benchmark is not None:
        header["benchmark"] = benchmark
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        handle.write(json.dumps({"x": full.tolist()}) + "\n")


def load_policy(path) -> tuple[FuzzyPolicyParams, str | None]:
    """Read a policy file; returns (params, benchmark or None)."""
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if len(lines) < 2:
        raise DataFormatError("policy file needs a header and a vector line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad header: {exc}", line=1) from exc
    if not isinstance(header, dict) or header.get("kind") != "fuzzy_policy":
        raise DataFormatError("not a fuzzy policy file", line=1)
    if header.get("format_version") != POLICY_FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported format version {header.get('format_version')!r}", line=1
        )
    try:
        d = int(header["state_dim"])
        c = int(header["rule_count"])
        scale = float(header["action_scale"])
        symmetric = bool(header["symmetric"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad header field: {exc}", line=1) from exc
    try:
        body = json.loads(lines[1])
        x = np.asarray(body["x"], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad vector line: {exc}", line=2) from exc
    if x.shape != (param_count(d, c),):
        raise DataFormatError(
            f"vector has {x.size} entries, expected {param_count(d, c)}", line=2
        )
    rows = x[:-1].reshape(c, 2 * d + 1)
    try:
        params = FuzzyPolicyParams(
            centers=rows[:, :d],
            widths=rows[:, d : 2 * d],
            outputs=rows[:, 2 * d],
            alpha=float(x[-1]),
            action_scale=scale,
            symmetric=symmetric,
        )
    except (ContractViolation, ConfigurationError) as exc:
        raise DataFormatError(f"invalid stored policy: {exc}", line=2) from exc
    return params, header.get("benchmark")
