"""Monte Carlo policy evaluation over a fixed start-state set.

The same rollout loop serves both environment kinds: anything with a
``step_batch(states, actions) -> (next_states, rewards)`` method can be
evaluated, so learned models and the true dynamics are interchangeable
handles.  Model rollouts never terminate early; absorbing behaviour, where
it exists, lives inside the step function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import BenchmarkSpec, true_step_batch
from .errors import ConfigurationError, ContractViolation, RolloutError
from .fuzzy import PolicyShape, decode_population, policy_output_batch

Array = np.ndarray


def discount_from_q(q: float, horizon: int) -> float:
    """Discount factor with weight ``q`` on the final step: q^(1/(T-1))."""
    if not 0 <= q <= 1:
        raise ContractViolation("q must lie in [0, 1]")
    if horizon <= 1:
        raise ContractViolation("horizon must exceed 1")
    return float(q ** (1.0 / (horizon - 1)))


@dataclass(frozen=True)
class TrueDynamics:
    """Environment handle for the real benchmark equations."""

    spec: BenchmarkSpec

    def step_batch(self, s: Array, a: Array) -> tuple[Array, Array]:
        return true_step_batch(self.spec, s, a)


@dataclass
class EvaluationSpec:
    """Where and how long to evaluate: env handle, horizon, discount, starts."""

    env: object
    horizon: int
    gamma: float
    start_states: Array
    weights: Array = None

    def __post_init__(self):
        self.start_states = np.atleast_2d(np.asarray(self.start_states, dtype=float))
        if len(self.start_states) == 0:
            raise ContractViolation("need at least one start state")
        if self.horizon < 1:
            raise ContractViolation("horizon must be >= 1")
        if not 0 <= self.gamma <= 1:
            raise ContractViolation("gamma must lie in [0, 1]")
        if self.weights is None:
            self.weights = np.full(len(self.start_states), 1.0 / len(self.start_states))
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (len(self.start_states),) or np.any(self.weights < 0):
                raise ContractViolation("weights must be nonnegative, one per start state")
            total = self.weights.sum()
            if not np.isclose(total, 1.0):
                raise ContractViolation("weights must sum to 1")

    @classmethod
    def build(cls, env, horizon: int, q: float, start_states: Array) -> "EvaluationSpec":
        return cls(
            env=env,
            horizon=horizon,
            gamma=discount_from_q(q, horizon),
            start_states=start_states,
        )


def rollout_rewards(env, policy, start_states: Array, horizon: int) -> Array:
    """Reward matrix (n, T) for a batch of rollouts under one policy.

    ``policy`` maps an (n, D) state batch to (n,) actions.  Environment
    exceptions are re-raised with the failing step index.
    """
    s = np.atleast_2d(np.asarray(start_states, dtype=float))
    rewards = np.empty((len(s), horizon))
    for k in range(horizon):
        try:
            a = policy(s)
            s, r = env.step_batch(s, np.asarray(a, dtype=float))
        except Exception as err:
            raise RolloutError(str(err), step=k) from err
        rewards[:, k] = r
    return rewards


def discounted_returns(rewards: Array, gamma: float) -> Array:
    """Per-rollout discounted sums over the horizon axis."""
    powers = gamma ** np.arange(rewards.shape[1])
    return rewards @ powers


def rollout_return(env, policy, s0: Array, horizon: int, gamma: float) -> float:
    """Discounted return of one rollout from ``s0``."""
    rewards = rollout_rewards(env, policy, np.asarray(s0, dtype=float)[None, :], horizon)
    return float(discounted_returns(rewards, gamma)[0])


def policy_fn(params) -> "callable":
    """Adapter: a fuzzy policy as a batch state->action function."""
    return lambda states: policy_output_batch(params, states)


def evaluate_policy(params, spec: EvaluationSpec) -> Array:
    """Per-start-state returns of a fuzzy policy."""
    rewards = rollout_rewards(spec.env, policy_fn(params), spec.start_states, spec.horizon)
    return discounted_returns(rewards, spec.gamma)


def fitness(x: Array, spec: EvaluationSpec, shape: PolicyShape) -> float:
    """Weighted mean return of the policy encoded by flat vector ``x``.

    Any rollout failure or non-finite result scores -inf so that an
    optimizer can keep running.
    """
    try:
        params = shape.decode(x)
        returns = evaluate_policy(params, spec)
    except Exception:
        return float("-inf")
    value = float(spec.weights @ returns)
    return value if np.isfinite(value) else float("-inf")


def success_rate(env, policy, start_states: Array, horizon: int, predicate) -> float:
    """Fraction of rollouts whose reward row satisfies ``predicate``."""
    rewards = rollout_rewards(env, policy, start_states, horizon)
    hits = [bool(predicate(row)) for row in rewards]
    return float(np.mean(hits))


# True rewards are exactly 0, -0.1, or -1, so thresholding halfway is
# equivalent to exact comparison there while still classifying the
# continuous rewards a learned model predicts.
SUCCESS_THRESHOLD = -0.5


def hold_goal_predicate(hold_steps: int = 50):
    """True when the trajectory sits in the goal region for its final steps."""
    def predicate(rewards: Array) -> bool:
        return bool(np.all(rewards[-hold_steps:] > SUCCESS_THRESHOLD))
    return predicate


def benchmark_success(benchmark: str):
    """(label, reward-row predicate) reported in evaluations.

    Mountain car counts reaching the goal, balancing counts avoiding the
    failure state, and swing-up counts erecting the pole and holding it
    through the final 50 steps.
    """
    if benchmark == "mc":
        return "goal_reached", lambda rewards: bool(np.any(rewards > SUCCESS_THRESHOLD))
    if benchmark == "cpb":
        return "no_failure", lambda rewards: bool(np.all(rewards > SUCCESS_THRESHOLD))
    if benchmark == "cpsu":
        return "swing_up", hold_goal_predicate()
    raise ConfigurationError(f"unknown benchmark {benchmark!r}")


def make_batch_fitness(env, shape: PolicyShape, start_states: Array, horizon: int,
                       gamma: float) -> "callable":
    """Vectorized swarm objective: (N, d) positions -> (N,) fitness values.

    All particles and start states advance through the env together as one
    flattened batch, which keeps the per-step cost at a few matrix products.
    """
    starts = np.atleast_2d(np.asarray(start_states, dtype=float))
    n_states, dim = starts.shape
    powers = gamma ** np.arange(horizon)

    def batch_fitness(xs: Array) -> Array:
        xs = np.asarray(xs, dtype=float)
        centers, widths, outputs, alpha = decode_population(shape, xs)
        inv_w = 1.0 / widths
        scaled_alpha = alpha[:, None]
        n = len(xs)
        s = np.broadcast_to(starts, (n, n_states, dim)).reshape(n * n_states, dim).copy()
        total = np.zeros(n * n_states)
        for k in range(horizon):
            grid = s.reshape(n, n_states, dim)
            diff = (grid[:, :, None, :] - centers[:, None, :, :]) * inv_w[:, None, :, :]
            logm = np.einsum("nscd,nscd->nsc", diff, diff)
            logm *= -0.5
            logm -= logm.max(axis=-1, keepdims=True)
            m = np.exp(logm)
            mean = np.einsum("nsc,nc->ns", m, outputs) / m.sum(axis=-1)
            a = shape.action_scale * np.tanh(scaled_alpha * mean)
            s, r = env.step_batch(s, a.reshape(-1))
            total += powers[k] * r
        per_particle = total.reshape(n, n_states).mean(axis=1)
        return np.where(np.isfinite(per_particle), per_particle, -np.inf)

    return batch_fitness
