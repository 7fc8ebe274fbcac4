"""Returns, fitness, success rates, and the batched swarm objective."""

import numpy as np
import pytest

from fpsrl.dynamics import (
    cart_pole_swing_up,
    mountain_car,
    sample_start_states,
)
from fpsrl.errors import ConfigurationError, ContractViolation, RolloutError
from fpsrl.evaluate import (
    EvaluationSpec,
    TrueDynamics,
    benchmark_success,
    discount_from_q,
    discounted_returns,
    evaluate_policy,
    fitness,
    hold_goal_predicate,
    make_batch_fitness,
    policy_fn,
    rollout_return,
    rollout_rewards,
    success_rate,
)
from fpsrl.fuzzy import PolicyShape, search_box


class ConstantRewardEnv:
    """States stay put; every step pays the same reward."""

    def __init__(self, reward):
        self.reward = reward

    def step_batch(self, s, a):
        return s, np.full(len(s), self.reward)


class FirstCoordRewardEnv:
    """Frozen states paying their own first coordinate."""

    def step_batch(self, s, a):
        return s, s[:, 0].copy()


class FailingEnv:
    def __init__(self, fail_at):
        self.fail_at = fail_at
        self.calls = 0

    def step_batch(self, s, a):
        if self.calls >= self.fail_at:
            raise RuntimeError("sensor offline")
        self.calls += 1
        return s, np.zeros(len(s))


def zero_policy(states):
    return np.zeros(len(states))


# discounting


def test_discount_values():
    assert discount_from_q(0.05, 200) == pytest.approx(0.9851, abs=5e-5)
    assert discount_from_q(0.05, 500) == pytest.approx(0.9940, abs=5e-5)
    # the formula gives 0.97019 here; 0.9700 only appears as a 3-decimal display
    assert discount_from_q(0.05, 100) == pytest.approx(0.9701933262266491, abs=1e-12)
    assert discount_from_q(1.0, 100) == 1.0
    assert discount_from_q(0.0, 100) == 0.0


def test_discount_domain():
    with pytest.raises(ContractViolation):
        discount_from_q(0.05, 1)
    with pytest.raises(ContractViolation):
        discount_from_q(-0.1, 100)
    with pytest.raises(ContractViolation):
        discount_from_q(1.1, 100)


def test_discount_monotonicity():
    qs = np.linspace(0.01, 1.0, 25)
    gammas = [discount_from_q(q, 100) for q in qs]
    assert all(b > a for a, b in zip(gammas, gammas[1:]))
    horizons = [10, 50, 100, 200, 500]
    by_t = [discount_from_q(0.05, t) for t in horizons]
    assert all(b > a for a, b in zip(by_t, by_t[1:]))


# returns


def test_zero_reward_return():
    env = ConstantRewardEnv(0.0)
    assert rollout_return(env, zero_policy, np.zeros(2), 100, 0.97) == 0.0


def test_constant_reward_geometric_series():
    gamma = discount_from_q(0.05, 200)
    env = ConstantRewardEnv(-1.0)
    got = rollout_return(env, zero_policy, np.zeros(2), 200, gamma)
    want = -(1.0 - gamma**200) / (1.0 - gamma)
    assert got == pytest.approx(want, abs=1e-10)
    assert -64.5 < got < -63.0


def test_mc_start_at_goal_returns_zero():
    env = TrueDynamics(mountain_car())
    got = rollout_return(env, zero_policy, np.array([0.6, 0.0]), 200, 0.9851)
    assert got == 0.0


def test_discounted_returns_matrix():
    rewards = np.array([[1.0, 1.0, 1.0], [0.0, 2.0, 0.0]])
    got = discounted_returns(rewards, 0.5)
    assert got[0] == pytest.approx(1 + 0.5 + 0.25, abs=1e-15)
    assert got[1] == pytest.approx(1.0, abs=1e-15)


def test_rollout_failure_carries_step_index():
    env = FailingEnv(fail_at=3)
    with pytest.raises(RolloutError) as err:
        rollout_rewards(env, zero_policy, np.zeros((1, 2)), 10)
    assert err.value.step == 3


def test_return_bounds_random_policy():
    """Discounted returns stay inside the geometric-series envelope."""
    rng = np.random.default_rng(0)
    for spec_fn in (mountain_car, cart_pole_swing_up):
        spec = spec_fn()
        env = TrueDynamics(spec)
        horizon = 100
        gamma = discount_from_q(0.05, horizon)
        starts = sample_start_states(spec, "test", 20, rng)

        def noisy_policy(states):
            return rng.uniform(spec.action_low, spec.action_high, len(states))

        r = discounted_returns(
            rollout_rewards(env, noisy_policy, starts, horizon), gamma
        )
        envelope = (1.0 - gamma**horizon) / (1.0 - gamma)
        assert np.all(r <= 0.0)
        assert np.all(r >= -envelope - 1e-12)


# fitness


def flat_zero_policy_params(dim=1):
    shape = PolicyShape(state_dim=dim, rule_count=1, action_scale=1.0)
    return shape, np.zeros(shape.free_length)


def test_fitness_single_start_equals_return():
    shape, x = flat_zero_policy_params()
    env = ConstantRewardEnv(-0.25)
    spec = EvaluationSpec(env=env, horizon=30, gamma=0.9, start_states=np.zeros((1, 1)))
    got = fitness(x, spec, shape)
    want = rollout_return(env, zero_policy, np.zeros(1), 30, 0.9)
    assert got == pytest.approx(want, abs=1e-12)


def test_fitness_two_states_mean():
    shape, x = flat_zero_policy_params()
    spec = EvaluationSpec(
        env=FirstCoordRewardEnv(),
        horizon=1,
        gamma=1.0,
        start_states=np.array([[-10.0], [-20.0]]),
    )
    assert fitness(x, spec, shape) == pytest.approx(-15.0, abs=1e-12)


def test_fitness_permutation_invariant():
    shape, x = flat_zero_policy_params()
    rng = np.random.default_rng(1)
    starts = rng.uniform(-5, 0, (10, 1))
    forward = EvaluationSpec(
        env=FirstCoordRewardEnv(), horizon=4, gamma=0.8, start_states=starts
    )
    shuffled = EvaluationSpec(
        env=FirstCoordRewardEnv(),
        horizon=4,
        gamma=0.8,
        start_states=starts[rng.permutation(10)],
    )
    assert fitness(x, forward, shape) == pytest.approx(
        fitness(x, shuffled, shape), abs=1e-12
    )


def test_fitness_custom_weights():
    shape, x = flat_zero_policy_params()
    spec = EvaluationSpec(
        env=FirstCoordRewardEnv(),
        horizon=1,
        gamma=1.0,
        start_states=np.array([[-10.0], [-20.0]]),
        weights=np.array([1.0, 0.0]),
    )
    assert fitness(x, spec, shape) == pytest.approx(-10.0, abs=1e-12)


def test_weight_validation():
    starts = np.zeros((2, 1))
    with pytest.raises(ContractViolation):
        EvaluationSpec(
            env=None, horizon=1, gamma=1.0, start_states=starts,
            weights=np.array([0.5, -0.5]),
        )
    with pytest.raises(ContractViolation):
        EvaluationSpec(
            env=None, horizon=1, gamma=1.0, start_states=starts,
            weights=np.array([0.9, 0.9]),
        )


def test_fitness_swallows_rollout_failure():
    shape, x = flat_zero_policy_params()
    spec = EvaluationSpec(
        env=FailingEnv(fail_at=0), horizon=5, gamma=0.9, start_states=np.zeros((1, 1))
    )
    assert fitness(x, spec, shape) == -np.inf


def test_evaluation_spec_build():
    spec = EvaluationSpec.build(None, horizon=200, q=0.05, start_states=np.zeros((3, 2)))
    assert spec.gamma == discount_from_q(0.05, 200)
    assert np.allclose(spec.weights, 1.0 / 3.0)


# interchangeability


def test_env_handles_share_code_path():
    from test_worldmodel import zero_delta_model

    starts = np.array([[0.2, 0.0], [-0.4, 0.0]])
    true_r = rollout_rewards(TrueDynamics(mountain_car()), zero_policy, starts, 25)
    model_r = rollout_rewards(zero_delta_model(), zero_policy, starts, 25)
    assert true_r.shape == model_r.shape == (2, 25)
    # model rollouts never terminate early: every slot is a real prediction
    assert np.all(np.isfinite(model_r))


# success predicates


def test_success_rate_always_true():
    env = ConstantRewardEnv(-1.0)
    rate = success_rate(env, zero_policy, np.zeros((7, 2)), 10, lambda row: True)
    assert rate == 1.0


def test_zero_force_swing_up_fails():
    spec = cart_pole_swing_up()
    starts = sample_start_states(spec, "test", 20, np.random.default_rng(2))
    # forbid starts that already hang near upright
    starts = starts[np.abs(starts[:, 0]) > 0.6]
    rate = success_rate(
        TrueDynamics(spec), zero_policy, starts, spec.horizon, hold_goal_predicate()
    )
    assert rate == 0.0


def test_benchmark_success_predicates():
    label, mc_pred = benchmark_success("mc")
    assert label == "goal_reached"
    assert mc_pred(np.array([-1.0, -1.0, 0.0]))
    assert not mc_pred(np.array([-1.0, -1.0, -1.0]))

    label, cpb_pred = benchmark_success("cpb")
    assert label == "no_failure"
    assert cpb_pred(np.array([0.0, -0.1, -0.1]))
    assert not cpb_pred(np.array([0.0, -0.1, -1.0]))

    label, su_pred = benchmark_success("cpsu")
    assert label == "swing_up"
    tail = np.concatenate([np.full(450, -1.0), np.zeros(50)])
    assert su_pred(tail)
    tail[-1] = -1.0
    assert not su_pred(tail)

    with pytest.raises(ConfigurationError):
        benchmark_success("pendulum")


# batched swarm objective


def test_batch_fitness_matches_scalar():
    spec = mountain_car()
    env = TrueDynamics(spec)
    shape = PolicyShape(state_dim=2, rule_count=2, action_scale=1.0)
    x_min, x_max = search_box(
        np.asarray(spec.nominal_low), np.asarray(spec.nominal_high), 2
    )
    rng = np.random.default_rng(3)
    xs = rng.uniform(x_min, x_max, (8, shape.free_length))
    starts = sample_start_states(spec, "test", 10, rng)
    gamma = discount_from_q(0.05, 50)

    batch = make_batch_fitness(env, shape, starts, horizon=50, gamma=gamma)
    got = batch(xs)
    eval_spec = EvaluationSpec(env=env, horizon=50, gamma=gamma, start_states=starts)
    want = np.array([fitness(x, eval_spec, shape) for x in xs])
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_evaluate_policy_returns_per_state():
    shape, x = flat_zero_policy_params(dim=2)
    params = shape.decode(x)
    env = TrueDynamics(mountain_car())
    starts = np.array([[0.6, 0.0], [-0.5, 0.0]])
    spec = EvaluationSpec(env=env, horizon=50, gamma=0.99, start_states=starts)
    returns = evaluate_policy(params, spec)
    assert returns.shape == (2,)
    assert returns[0] == 0.0   # absorbing goal start
    assert returns[1] < 0.0


def test_policy_fn_adapter():
    shape, x = flat_zero_policy_params(dim=2)
    params = shape.decode(x)
    fn = policy_fn(params)
    out = fn(np.zeros((4, 2)))
    assert out.shape == (4,)
