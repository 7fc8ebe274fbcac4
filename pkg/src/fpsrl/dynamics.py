"""Benchmark dynamics: mountain car and cart-pole, integrated with RK4.

Three benchmark setups are exposed through :func:`benchmark_spec`:

``mc``
    Underpowered car in a valley, state ``(pos, vel)``.  The engine alone
    cannot climb the right slope, so the car has to swing back first.
``cpb``
    Cart-pole balancing, state ``(theta, theta_dot, pos, pos_dot)`` with
    ``theta = 0`` upright.  Leaving the pose bounds is terminal.
``cpsu``
    Cart-pole swing-up: same plant, stronger motor, no terminal states,
    ``theta`` wrapped to ``[-pi, pi)``.

All step functions are pure: absorbing behaviour is encoded in the state
itself, so replaying a transition always reproduces it exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation

log = logging.getLogger(__name__)

Array = np.ndarray


@dataclass(frozen=True)
class BenchmarkSpec:
    """Physics constants and episode conventions for one benchmark."""

    benchmark_id: str
    state_dim: int
    state_labels: tuple[str, ...]
    action_low: float
    action_high: float
    dt: float                    # control interval (s), action held constant
    substeps: int                # RK4 steps per control interval
    horizon: int                 # evaluation episode length T
    episode_len: int             # data-generation episode cap
    exploration: str             # default exploration policy kind
    start_low: tuple[float, ...]    # data-generation start box
    start_high: tuple[float, ...]
    test_low: tuple[float, ...]     # evaluation start box
    test_high: tuple[float, ...]
    nominal_low: tuple[float, ...]  # plausible state envelope (plots, search box)
    nominal_high: tuple[float, ...]
    wrap_dim: int | None = None     # state index wrapped to [-pi, pi), if any
    episode_ends_on_absorb: bool = False   # data episodes stop once absorbed
    physics: dict[str, float] = field(default_factory=dict)

    @property
    def action_range(self) -> float:
        return self.action_high - self.action_low

    def region(self, name: str) -> tuple[Array, Array]:
        if name == "start":
            return np.asarray(self.start_low), np.asarray(self.start_high)
        if name == "test":
            return np.asarray(self.test_low), np.asarray(self.test_high)
        raise ConfigurationError(f"unknown start region {name!r}")


def mountain_car() -> BenchmarkSpec:
    return BenchmarkSpec(
        benchmark_id="mc",
        state_dim=2,
        state_labels=("pos", "vel"),
        action_low=-1.0,
        action_high=1.0,
        dt=0.025,
        substeps=5,
        horizon=200,
        episode_len=200,
        exploration="uniform",
        start_low=(-1.2, 0.0),
        start_high=(0.6, 0.0),
        test_low=(-1.2, 0.0),
        test_high=(0.6, 0.0),
        nominal_low=(-1.2, -4.0),
        nominal_high=(0.6, 4.0),
        physics={
            "gravity": 9.81,
            "engine_gain": 4.0,
            "pos_min": -1.2,
            "goal_pos": 0.6,
        },
    )


_CP_PHYSICS = {
    "gravity": 9.8,
    "cart_mass": 1.0,
    "pole_mass": 0.1,
    "pole_half_length": 0.5,
}


def cart_pole_balance() -> BenchmarkSpec:
    return BenchmarkSpec(
        benchmark_id="cpb",
        state_dim=4,
        state_labels=("theta", "theta_dot", "pos", "pos_dot"),
        action_low=-10.0,
        action_high=10.0,
        dt=0.025,
        substeps=2,
        horizon=100,
        episode_len=100,
        exploration="random_walk",
        episode_ends_on_absorb=True,
        start_low=(-0.7, 0.0, -2.4, 0.0),
        start_high=(0.7, 0.0, 2.4, 0.0),
        test_low=(-0.5, 0.0, -0.5, 0.0),
        test_high=(0.5, 0.0, 0.5, 0.0),
        nominal_low=(-0.8, -4.0, -2.4, -4.0),
        nominal_high=(0.8, 4.0, 2.4, 4.0),
        physics=dict(
            _CP_PHYSICS,
            theta_max=0.7,
            pos_max=2.4,
            goal_theta=0.25,
            goal_pos=0.5,
        ),
    )


def cart_pole_swing_up() -> BenchmarkSpec:
    return BenchmarkSpec(
        benchmark_id="cpsu",
        state_dim=4,
        state_labels=("theta", "theta_dot", "pos", "pos_dot"),
        action_low=-30.0,
        action_high=30.0,
        dt=0.025,
        substeps=2,
        horizon=500,
        episode_len=500,
        exploration="random_walk",
        start_low=(-np.pi, 0.0, 0.0, 0.0),
        start_high=(np.pi, 0.0, 0.0, 0.0),
        test_low=(-np.pi, 0.0, -0.5, 0.0),
        test_high=(np.pi, 0.0, 0.5, 0.0),
        nominal_low=(-np.pi, -10.0, -3.0, -6.0),
        nominal_high=(np.pi, 10.0, 3.0, 6.0),
        wrap_dim=0,
        physics=dict(_CP_PHYSICS, goal_theta=0.5, goal_pos=0.5),
    )


_FACTORIES = {
    "mc": mountain_car,
    "cpb": cart_pole_balance,
    "cpsu": cart_pole_swing_up,
}

BENCHMARK_IDS = tuple(_FACTORIES)


def benchmark_spec(benchmark_id: str) -> BenchmarkSpec:
    try:
        return _FACTORIES[benchmark_id]()
    except KeyError:
        raise ConfigurationError(
            f"unknown benchmark {benchmark_id!r}, expected one of {BENCHMARK_IDS}"
        ) from None


# ---------------------------------------------------------------------------
# integration

def rk4_step(derivative, s: Array, a, dt: float) -> Array:
    """One classical Runge-Kutta step of ``ds/dt = derivative(s, a)``.

    ``s`` may be a single state vector or a batch ``(n, dim)``; ``a`` is held
    constant over the step.
    """
    s = np.asarray(s, dtype=float)
    k1 = derivative(s, a)
    k2 = derivative(s + 0.5 * dt * k1, a)
    k3 = derivative(s + 0.5 * dt * k2, a)
    k4 = derivative(s + dt * k3, a)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise ContractViolation("non-finite state after RK4 step")
    return out


def wrap_angle(theta):
    """Map angles to ``[-pi, pi)``."""
    return np.mod(np.asarray(theta) + np.pi, 2.0 * np.pi) - np.pi


_clamp_logged: set[str] = set()


def _clamp_actions(a: Array, spec: BenchmarkSpec) -> Array:
    if np.any(a < spec.action_low) or np.any(a > spec.action_high):
        if spec.benchmark_id not in _clamp_logged:
            _clamp_logged.add(spec.benchmark_id)
            log.warning(
                "%s: action outside [%g, %g], clamping (reported once)",
                spec.benchmark_id, spec.action_low, spec.action_high,
            )
        a = np.clip(a, spec.action_low, spec.action_high)
    return a


# ---------------------------------------------------------------------------
# mountain car

def _mc_hill_slope(pos: Array) -> Array:
    # valley profile: h(p) = p^2 + p left of the origin, p / sqrt(1 + 5 p^2) right
    left = pos < 0.0
    return np.where(left, 2.0 * pos + 1.0, (1.0 + 5.0 * pos ** 2) ** -1.5)


def _mc_hill_curvature(pos: Array) -> Array:
    left = pos < 0.0
    return np.where(left, 2.0, -15.0 * pos * (1.0 + 5.0 * pos ** 2) ** -2.5)


def mc_derivative(spec: BenchmarkSpec):
    g = spec.physics["gravity"]
    gain = spec.physics["engine_gain"]

    def deriv(s: Array, a) -> Array:
        pos = s[..., 0]
        vel = s[..., 1]
        slope = _mc_hill_slope(pos)
        curv = _mc_hill_curvature(pos)
        acc = (gain * a - g * slope - vel ** 2 * slope * curv) / (1.0 + slope ** 2)
        return np.stack([vel, acc], axis=-1)

    return deriv


def mc_step_batch(s: Array, a: Array, spec: BenchmarkSpec) -> tuple[Array, Array]:
    """Advance a batch of mountain-car states by one control interval."""
    s = _check_states(s, spec)
    a = _clamp_actions(np.asarray(a, dtype=float), spec)
    goal = spec.physics["goal_pos"]
    pos_min = spec.physics["pos_min"]
    deriv = mc_derivative(spec)
    h = spec.dt / spec.substeps

    done = s[:, 0] >= goal
    out = s.copy()
    # absorbing: position held, velocity dropped
    out[done, 1] = 0.0
    active = ~done
    if np.any(active):
        cur = s[active]
        act = a[active]
        for _ in range(spec.substeps):
            cur = rk4_step(deriv, cur, act, h)
            # inelastic left wall
            hit = cur[:, 0] < pos_min
            cur[hit, 0] = pos_min
            cur[hit, 1] = 0.0
        out[active] = cur
    reward = np.where(out[:, 0] >= goal, 0.0, -1.0)
    return out, reward


def mc_step(s: Array, a: float, spec: BenchmarkSpec) -> tuple[Array, float]:
    s2, r = mc_step_batch(np.asarray(s, dtype=float)[None, :], np.asarray([a]), spec)
    return s2[0], float(r[0])


# ---------------------------------------------------------------------------
# cart-pole

def cp_derivative(spec: BenchmarkSpec):
    g = spec.physics["gravity"]
    m_total = spec.physics["cart_mass"] + spec.physics["pole_mass"]
    m_pole = spec.physics["pole_mass"]
    length = spec.physics["pole_half_length"]

    def deriv(s: Array, a) -> Array:
        theta = s[..., 0]
        theta_dot = s[..., 1]
        pos_dot = s[..., 3]
        sin = np.sin(theta)
        cos = np.cos(theta)
        tmp = (a + m_pole * length * theta_dot ** 2 * sin) / m_total
        theta_acc = (g * sin - cos * tmp) / (
            length * (4.0 / 3.0 - m_pole * cos ** 2 / m_total)
        )
        pos_acc = tmp - m_pole * length * theta_acc * cos / m_total
        return np.stack(
            [theta_dot, theta_acc, pos_dot, pos_acc], axis=-1
        )

    return deriv


def _cpb_failed(theta: Array, pos: Array, spec: BenchmarkSpec) -> Array:
    return (np.abs(theta) > spec.physics["theta_max"]) | (
        np.abs(pos) > spec.physics["pos_max"]
    )


def cp_step_batch(s: Array, a: Array, spec: BenchmarkSpec) -> tuple[Array, Array, Array]:
    """Advance a batch of cart-pole states; returns ``(s_next, reward, failed)``."""
    s = _check_states(s, spec)
    a = _clamp_actions(np.asarray(a, dtype=float), spec)
    deriv = cp_derivative(spec)
    h = spec.dt / spec.substeps
    balancing = spec.benchmark_id == "cpb"

    if balancing:
        dead = _cpb_failed(s[:, 0], s[:, 2], spec)
    else:
        dead = np.zeros(len(s), dtype=bool)

    out = s.copy()
    active = ~dead
    if np.any(active):
        cur = s[active]
        act = a[active]
        for _ in range(spec.substeps):
            cur = rk4_step(deriv, cur, act, h)
            if spec.wrap_dim is not None:
                cur[:, spec.wrap_dim] = wrap_angle(cur[:, spec.wrap_dim])
        out[active] = cur

    theta = out[:, 0]
    pos = out[:, 2]
    if balancing:
        failed = _cpb_failed(theta, pos, spec)
        # terminal: pose kept, velocities dropped
        out[failed | dead, 1] = 0.0
        out[failed | dead, 3] = 0.0
        goal = (np.abs(theta) < spec.physics["goal_theta"]) & (
            np.abs(pos) < spec.physics["goal_pos"]
        )
        reward = np.where(failed | dead, -1.0, np.where(goal, 0.0, -0.1))
        return out, reward, failed | dead
    goal = (np.abs(theta) < spec.physics["goal_theta"]) & (
        np.abs(pos) < spec.physics["goal_pos"]
    )
    reward = np.where(goal, 0.0, -1.0)
    return out, reward, np.zeros(len(s), dtype=bool)


def cp_step(s: Array, a: float, spec: BenchmarkSpec) -> tuple[Array, float, bool]:
    s2, r, failed = cp_step_batch(
        np.asarray(s, dtype=float)[None, :], np.asarray([a]), spec
    )
    return s2[0], float(r[0]), bool(failed[0])


# ---------------------------------------------------------------------------
# shared entry points

def true_step_batch(spec: BenchmarkSpec, s: Array, a: Array) -> tuple[Array, Array]:
    """Benchmark-dispatching batched step, discarding the terminal flag."""
    if spec.benchmark_id == "mc":
        return mc_step_batch(s, a, spec)
    s2, r, _ = cp_step_batch(s, a, spec)
    return s2, r


def absorbing_mask(spec: BenchmarkSpec, s: Array) -> Array:
    """Mask of states the dynamics hold fixed (goal region or failure)."""
    s = _check_states(s, spec)
    if spec.benchmark_id == "mc":
        return s[:, 0] >= spec.physics["goal_pos"]
    if spec.benchmark_id == "cpb":
        return _cpb_failed(s[:, 0], s[:, 2], spec)
    return np.zeros(len(s), dtype=bool)


def _check_states(s: Array, spec: BenchmarkSpec) -> Array:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[1] != spec.state_dim:
        raise ContractViolation(
            f"expected states of shape (n, {spec.state_dim}), got {s.shape}"
        )
    if not np.all(np.isfinite(s)):
        raise ContractViolation("non-finite state")
    return s


def sample_start_states(
    spec: BenchmarkSpec, region: str, n: int, rng: np.random.Generator
) -> Array:
    """Draw ``n`` start states uniformly from the named box (``start``/``test``)."""
    if n < 1:
        raise ContractViolation("need at least one start state")
    low, high = spec.region(region)
    return rng.uniform(low, high, size=(n, spec.state_dim))
