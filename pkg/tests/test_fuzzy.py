"""Fuzzy policies: membership grades, defuzzification, flat encoding, symmetry."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpsrl import fuzzy
from fpsrl.errors import ConfigurationError, ContractViolation, DataFormatError
from fpsrl.fuzzy import (
    ALPHA_MIN,
    SIGMA_MIN,
    FuzzyPolicyParams,
    FuzzyRule,
    PolicyShape,
    decode,
    decode_population,
    encode,
    expand_symmetric,
    free_param_count,
    load_policy,
    membership,
    param_count,
    policy_output,
    policy_output_batch,
    population_actions,
    save_policy,
    search_box,
)


def random_params(rng, state_dim=2, rule_count=3, symmetric=False, scale=1.0):
    free = rule_count // 2 if symmetric else rule_count
    centers = rng.uniform(-2, 2, (free, state_dim))
    widths = rng.uniform(0.05, 3.0, (free, state_dim))
    outputs = rng.uniform(-5, 5, free)
    if symmetric:
        centers = np.vstack([centers, -centers])
        widths = np.vstack([widths, widths])
        outputs = np.concatenate([outputs, -outputs])
    return FuzzyPolicyParams(
        centers=centers,
        widths=widths,
        outputs=outputs,
        alpha=float(rng.uniform(0.05, 5.0)),
        action_scale=scale,
        symmetric=symmetric,
    )


# membership


def test_membership_at_center():
    rule = FuzzyRule(np.array([0.3, -1.0]), np.array([0.5, 2.0]), 1.0)
    assert membership(rule, np.array([0.3, -1.0])) == 1.0


def test_membership_one_sigma_1d():
    rule = FuzzyRule(np.array([0.0]), np.array([1.0]), 0.0)
    assert membership(rule, np.array([1.0])) == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_membership_one_sigma_2d():
    rule = FuzzyRule(np.array([0.0, 2.0]), np.array([0.7, 1.3]), 0.0)
    s = np.array([0.7, 2.0 + 1.3])
    assert membership(rule, s) == pytest.approx(np.exp(-1.0), abs=1e-12)


def test_membership_dimension_mismatch():
    rule = FuzzyRule(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 0.0)
    with pytest.raises(ContractViolation):
        membership(rule, np.array([1.0]))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_membership_range(seed):
    """Grades live in (0, 1], hitting 1 only at the center.

    Offsets stay within ten sigma: further out the true value drops below
    the smallest positive double and linear-space evaluation reads 0.
    """
    rng = np.random.default_rng(seed)
    rule = FuzzyRule(rng.uniform(-5, 5, 3), rng.uniform(SIGMA_MIN, 10.0, 3), 0.0)
    offset = rng.uniform(1e-6, 10.0, 3) * rng.choice([-1.0, 1.0], 3)
    grade = membership(rule, rule.centers + offset * rule.widths)
    assert 0.0 < grade < 1.0
    assert membership(rule, rule.centers.copy()) == 1.0


def test_rule_width_floor():
    with pytest.raises(ContractViolation):
        FuzzyRule(np.array([0.0]), np.array([SIGMA_MIN / 2]), 0.0)


# defuzzification


def test_single_rule_output_ignores_state():
    params = FuzzyPolicyParams(
        centers=np.array([[0.0, 0.0]]),
        widths=np.array([[1.0, 1.0]]),
        outputs=np.array([0.8]),
        alpha=2.0,
        action_scale=1.0,
    )
    want = np.tanh(2.0 * 0.8)
    for s in ([0.0, 0.0], [5.0, -3.0], [400.0, 400.0]):
        assert policy_output(params, np.array(s)) == pytest.approx(want, abs=1e-12)


def test_equal_membership_two_rules():
    # both rules are one sigma away from s, so they weigh equally
    params = FuzzyPolicyParams(
        centers=np.array([[0.0], [2.0]]),
        widths=np.array([[1.0], [1.0]]),
        outputs=np.array([3.0, -1.0]),
        alpha=0.5,
        action_scale=1.0,
    )
    got = policy_output(params, np.array([1.0]))
    assert got == pytest.approx(np.tanh(0.5 * (3.0 - 1.0) / 2.0), abs=1e-12)


def test_large_alpha_semi_discrete():
    params = FuzzyPolicyParams(
        centers=np.array([[0.0]]),
        widths=np.array([[1.0]]),
        outputs=np.array([2.0]),
        alpha=1e6,
        action_scale=7.5,
    )
    a = policy_output(params, np.array([0.3]))
    assert a > 0.999 * 7.5
    assert a < 7.5


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_output_strictly_inside_scale(seed):
    rng = np.random.default_rng(seed)
    scale = float(rng.uniform(0.5, 30.0))
    params = random_params(rng, scale=scale)
    s = rng.uniform(-100, 100, (16, 2))
    a = policy_output_batch(params, s)
    assert np.all(np.abs(a) < scale)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_shift_covariance(seed):
    rng = np.random.default_rng(seed)
    params = random_params(rng)
    shift = rng.uniform(-1, 1, 2)
    moved = FuzzyPolicyParams(
        centers=params.centers + shift,
        widths=params.widths,
        outputs=params.outputs,
        alpha=params.alpha,
        action_scale=params.action_scale,
    )
    s = rng.uniform(-3, 3, (8, 2))
    np.testing.assert_allclose(
        policy_output_batch(params, s),
        policy_output_batch(moved, s + shift),
        atol=1e-9,
    )


def test_far_state_does_not_underflow():
    # every rule underflows in linear space; log-space evaluation keeps the
    # weighted mean defined
    params = random_params(np.random.default_rng(0))
    a = policy_output(params, np.array([1e4, -1e4]))
    assert np.isfinite(a)
    assert abs(a) < params.action_scale


# flat encoding


def test_param_counts():
    assert param_count(2, 2) == 11
    assert free_param_count(4, 4, symmetric=True) == 19
    assert free_param_count(2, 2, symmetric=False) == 11


def test_free_count_odd_symmetric():
    with pytest.raises(ConfigurationError):
        free_param_count(2, 3, symmetric=True)


def test_encode_layout():
    params = FuzzyPolicyParams(
        centers=np.array([[1.0, 2.0], [5.0, 6.0]]),
        widths=np.array([[3.0, 4.0], [7.0, 8.0]]),
        outputs=np.array([9.0, 10.0]),
        alpha=0.25,
        action_scale=1.0,
    )
    x = encode(params)
    assert x.tolist() == [1, 2, 3, 4, 9, 5, 6, 7, 8, 10, 0.25]


def test_roundtrip_bulk():
    """Ten thousand random parameter sets survive encode -> decode exactly."""
    rng = np.random.default_rng(42)
    for i in range(10_000):
        symmetric = bool(i % 2)
        params = random_params(
            rng, state_dim=1 + i % 3, rule_count=2, symmetric=symmetric
        )
        back = PolicyShape(
            params.state_dim, 2, params.action_scale, symmetric
        ).decode(encode(params))
        assert np.array_equal(back.centers, params.centers)
        assert np.array_equal(back.widths, params.widths)
        assert np.array_equal(back.outputs, params.outputs)
        assert back.alpha == params.alpha


def test_decode_wrong_length():
    with pytest.raises(ContractViolation):
        decode(np.zeros(10), 2, 2, 1.0)


def test_decode_clamps_widths_and_alpha():
    params = decode(np.array([0.0, -2.0, 1.0, 0.0]), 1, 1, 1.0)
    assert params.widths[0, 0] == 2.0
    assert params.alpha == ALPHA_MIN
    tiny = decode(np.array([0.0, 1e-9, 0.0, 3.0]), 1, 1, 1.0)
    assert tiny.widths[0, 0] == SIGMA_MIN
    assert tiny.alpha == 3.0


def test_decode_non_finite():
    with pytest.raises(ContractViolation):
        decode(np.array([np.inf, 1.0, 0.0, 1.0]), 1, 1, 1.0)


# symmetry expansion


def test_expand_symmetric_mirror_example():
    sigma = np.array([0.4, 0.3, 0.2, 0.1])
    half = np.concatenate([[0.1, 0.0, 0.5, 0.0], sigma, [2.0], [1.0]])
    params = expand_symmetric(half, state_dim=4, action_scale=1.0)
    assert params.rule_count == 2
    assert np.array_equal(params.centers[0], [0.1, 0.0, 0.5, 0.0])
    assert np.array_equal(params.centers[1], [-0.1, -0.0, -0.5, -0.0])
    assert np.array_equal(params.widths[0], sigma)
    assert np.array_equal(params.widths[1], sigma)
    assert params.outputs.tolist() == [2.0, -2.0]
    assert params.alpha == 1.0
    assert params.symmetric


def test_expand_symmetric_bad_length():
    with pytest.raises(ContractViolation):
        expand_symmetric(np.zeros(8), state_dim=4, action_scale=1.0)


def test_symmetric_params_odd_rule_count():
    with pytest.raises(ConfigurationError):
        FuzzyPolicyParams(
            centers=np.zeros((3, 2)),
            widths=np.ones((3, 2)),
            outputs=np.zeros(3),
            alpha=1.0,
            action_scale=1.0,
            symmetric=True,
        )


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_symmetric_policy_is_odd(seed):
    rng = np.random.default_rng(seed)
    params = random_params(rng, state_dim=4, rule_count=4, symmetric=True)
    s = rng.uniform(-3, 3, (16, 4))
    a_pos = policy_output_batch(params, s)
    a_neg = policy_output_batch(params, -s)
    assert np.max(np.abs(a_pos + a_neg)) <= 1e-12


# search box


def test_search_box_layout():
    lo, hi = np.array([-1.2, -4.0]), np.array([0.6, 4.0])
    x_min, x_max = search_box(lo, hi, rule_count=2)
    assert x_min.shape == x_max.shape == (11,)
    # centers reach 1.5x the half extent around the midpoint
    assert x_min[0] == pytest.approx(-0.3 - 1.5 * 0.9)
    assert x_max[0] == pytest.approx(-0.3 + 1.5 * 0.9)
    assert x_min[1] == pytest.approx(-6.0)
    assert x_max[1] == pytest.approx(6.0)
    assert x_min[2] == SIGMA_MIN and x_max[2] == pytest.approx(1.8)
    assert x_min[4] == -5.0 and x_max[4] == 5.0
    assert x_min[-1] == 0.01 and x_max[-1] == 10.0
    assert np.all(x_min < x_max)


def test_search_box_symmetric_halves():
    lo, hi = -np.ones(4), np.ones(4)
    full_min, _ = search_box(lo, hi, rule_count=4, symmetric=False)
    half_min, _ = search_box(lo, hi, rule_count=4, symmetric=True)
    assert full_min.size == param_count(4, 4)
    assert half_min.size == free_param_count(4, 4, symmetric=True)


def test_search_box_bad_bounds():
    with pytest.raises(ContractViolation):
        search_box(np.array([0.0, 1.0]), np.array([1.0, 1.0]), 2)


# population helpers


def test_decode_population_matches_scalar():
    rng = np.random.default_rng(9)
    shape = PolicyShape(state_dim=2, rule_count=4, action_scale=3.0, symmetric=True)
    xs = rng.uniform(-2, 2, (12, shape.free_length))
    centers, widths, outputs, alpha = decode_population(shape, xs)
    for i in range(len(xs)):
        p = shape.decode(xs[i])
        assert np.array_equal(centers[i], p.centers)
        assert np.array_equal(widths[i], p.widths)
        assert np.array_equal(outputs[i], p.outputs)
        assert alpha[i] == p.alpha


def test_population_actions_match_scalar():
    rng = np.random.default_rng(10)
    shape = PolicyShape(state_dim=2, rule_count=2, action_scale=2.0)
    xs = rng.uniform(-2, 2, (6, shape.free_length))
    states = rng.uniform(-3, 3, (6, 5, 2))
    acts = population_actions(*decode_population(shape, xs), 2.0, states)
    assert acts.shape == (6, 5)
    for i in range(6):
        want = policy_output_batch(shape.decode(xs[i]), states[i])
        np.testing.assert_allclose(acts[i], want, atol=1e-12)


# persistence


def test_policy_file_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    for symmetric in (False, True):
        params = random_params(rng, state_dim=4, rule_count=4, symmetric=symmetric)
        path = tmp_path / f"p{symmetric}.fuzzy"
        save_policy(params, path, benchmark="cpsu")
        back, benchmark = load_policy(path)
        assert benchmark == "cpsu"
        assert back.symmetric == symmetric
        assert np.array_equal(back.centers, params.centers)
        assert np.array_equal(back.widths, params.widths)
        assert np.array_equal(back.outputs, params.outputs)
        assert back.alpha == params.alpha
        assert back.action_scale == params.action_scale


def test_policy_file_no_benchmark(tmp_path):
    params = random_params(np.random.default_rng(2))
    save_policy(params, tmp_path / "p.fuzzy")
    _, benchmark = load_policy(tmp_path / "p.fuzzy")
    assert benchmark is None


def test_load_policy_malformed(tmp_path):
    cases = {
        "empty.fuzzy": "",
        "short.fuzzy": '{"kind": "fuzzy_policy"}\n',
        "badjson.fuzzy": "not json\n{}\n",
        "badkind.fuzzy": json.dumps({"kind": "world_model"}) + "\n{}\n",
    }
    for name, text in cases.items():
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(DataFormatError):
            load_policy(path)


def test_load_policy_bad_version(tmp_path):
    header = {
        "format_version": 99,
        "kind": "fuzzy_policy",
        "state_dim": 1,
        "rule_count": 1,
        "action_scale": 1.0,
        "symmetric": False,
    }
    path = tmp_path / "v.fuzzy"
    path.write_text(json.dumps(header) + '\n{"x": [0, 1, 0, 1]}\n')
    with pytest.raises(DataFormatError):
        load_policy(path)


def test_load_policy_wrong_vector_length(tmp_path):
    params = random_params(np.random.default_rng(3), rule_count=2)
    path = tmp_path / "p.fuzzy"
    save_policy(params, path)
    lines = path.read_text().splitlines()
    body = json.loads(lines[1])
    body["x"] = body["x"][:-1]
    path.write_text(lines[0] + "\n" + json.dumps(body) + "\n")
    with pytest.raises(DataFormatError) as err:
        load_policy(path)
    assert "expected" in str(err.value)


def test_load_policy_invalid_stored_widths(tmp_path):
    path = tmp_path / "w.fuzzy"
    header = {
        "format_version": 1,
        "kind": "fuzzy_policy",
        "state_dim": 1,
        "rule_count": 1,
        "action_scale": 1.0,
        "symmetric": False,
    }
    # width below the floor is rejected rather than silently fixed
    path.write_text(json.dumps(header) + '\n{"x": [0.0, 0.0, 1.0, 1.0]}\n')
    with pytest.raises(DataFormatError):
        load_policy(path)
