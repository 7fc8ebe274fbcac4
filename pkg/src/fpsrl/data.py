"""Transition batches: generation on the true dynamics and JSONL persistence.

A batch is stored column-wise (arrays over transitions) with trajectory and
step ids, so exact replay and per-episode analyses stay cheap.  The file
format is one JSON object per line: a header record with metadata, then one
record per transition in (trajectory, step) order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import (
    BenchmarkSpec,
    absorbing_mask,
    sample_start_states,
    true_step_batch,
)
from .errors import ContractViolation, DataFormatError

Array = np.ndarray

FORMAT_VERSION = 1
POLICY_KINDS = ("uniform", "random_walk")
RANDOM_WALK_INCREMENT = 0.2   # fraction of the action range, per step

# number of episodes simulated at once during generation
_CHUNK_EPISODES = 256


@dataclass(frozen=True)
class Transition:
    s: Array
    a: float
    s_next: Array
    r: float
    traj: int
    step: int


@dataclass
class Batch:
    """Column-wise transition set plus its generation metadata."""

    benchmark: str
    seed: int
    policy_kind: str
    episode_len: int
    states: Array       # (n, D)
    actions: Array      # (n,)
    next_states: Array  # (n, D)
    rewards: Array      # (n,)
    traj_ids: Array     # (n,) int
    step_ids: Array     # (n,) int

    def __post_init__(self):
        n = len(self.actions)
        if n == 0:
            raise ContractViolation("batch must be nonempty")
        shapes_ok = (
            self.states.ndim == 2
            and self.states.shape == self.next_states.shape
            and self.states.shape[0] == n
            and self.rewards.shape == (n,)
            and self.traj_ids.shape == (n,)
            and self.step_ids.shape == (n,)
        )
        if not shapes_ok:
            raise ContractViolation("inconsistent batch column shapes")
        if self.policy_kind not in POLICY_KINDS:
            raise ContractViolation(f"unknown policy kind {self.policy_kind!r}")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    def transition(self, i: int) -> Transition:
        return Transition(
            s=self.states[i],
            a=float(self.actions[i]),
            s_next=self.next_states[i],
            r=float(self.rewards[i]),
            traj=int(self.traj_ids[i]),
            step=int(self.step_ids[i]),
        )

    def __iter__(self):
        return (self.transition(i) for i in range(len(self)))


def generate_batch(
    spec: BenchmarkSpec,
    size: int,
    episode_len: int | None = None,
    policy_kind: str | None = None,
    seed: int = 0,
) -> Batch:
    """Roll exploration episodes on the true dynamics until ``size`` transitions.

    Episodes start uniformly in the benchmark's data-generation region.  The
    ``uniform`` policy draws an independent action each step; ``random_walk``
    starts at 0 and adds a clamped uniform increment of +-20% of the action
    range.  Balancing episodes end with the transition into a failure state
    (exploration cannot leave one, and padding with frozen repeats would
    drown out the live dynamics).  Mountain-car episodes run the full length
    even after reaching the goal: the absorbing goal rows are the only r = 0
    examples the reward model ever sees.  The final episode is truncated to
    land exactly on ``size``.
    """
    if size < 1:
        raise ContractViolation("batch size must be >= 1")
    episode_len = spec.episode_len if episode_len is None else episode_len
    policy_kind = spec.exploration if policy_kind is None else policy_kind
    if episode_len < 1:
        raise ContractViolation("episode length must be >= 1")
    if policy_kind not in POLICY_KINDS:
        raise ContractViolation(f"unknown policy kind {policy_kind!r}")

    rng = np.random.default_rng(seed)

    columns: list[tuple[Array, ...]] = []   # per-episode transition columns
    collected = 0
    next_traj = 0
    while collected < size:
        chunk = min(_CHUNK_EPISODES, (size - collected) // episode_len + 1)
        starts = sample_start_states(spec, "start", chunk, rng)
        ep = _run_episodes(spec, starts, episode_len, policy_kind, rng)
        for s, a, s2, r in ep:
            steps = np.arange(len(a))
            trajs = np.full(len(a), next_traj)
            columns.append((s, a, s2, r, trajs, steps))
            next_traj += 1
            collected += len(a)
            if collected >= size:
                break

    states = np.concatenate([c[0] for c in columns])[:size]
    actions = np.concatenate([c[1] for c in columns])[:size]
    next_states = np.concatenate([c[2] for c in columns])[:size]
    rewards = np.concatenate([c[3] for c in columns])[:size]
    traj_ids = np.concatenate([c[4] for c in columns])[:size]
    step_ids = np.concatenate([c[5] for c in columns])[:size]
    return Batch(
        benchmark=spec.benchmark_id,
        seed=seed,
        policy_kind=policy_kind,
        episode_len=episode_len,
        states=states,
        actions=actions,
        next_states=next_states,
        rewards=rewards,
        traj_ids=traj_ids,
        step_ids=step_ids,
    )


def _run_episodes(spec, starts, episode_len, policy_kind, rng):
    """Simulate a block of episodes in lockstep; returns per-episode columns."""
    n = len(starts)
    s = np.asarray(starts, dtype=float)
    actions = np.zeros(n)
    rec_s = np.empty((episode_len, n, spec.state_dim))
    rec_a = np.empty((episode_len, n))
    rec_s2 = np.empty((episode_len, n, spec.state_dim))
    rec_r = np.empty((episode_len, n))
    lengths = np.full(n, episode_len)
    alive = np.ones(n, dtype=bool)
    for k in range(episode_len):
        if policy_kind == "uniform":
            actions = rng.uniform(spec.action_low, spec.action_high, size=n)
        else:
            inc = RANDOM_WALK_INCREMENT * spec.action_range
            actions = np.clip(
                actions + rng.uniform(-inc, inc, size=n),
                spec.action_low,
                spec.action_high,
            )
        s2, r = true_step_batch(spec, s, actions)
        rec_s[k] = s
        rec_a[k] = actions
        rec_s2[k] = s2
        rec_r[k] = r
        s = s2
        if spec.episode_ends_on_absorb:
            absorbed = absorbing_mask(spec, s2)
            lengths[alive & absorbed] = k + 1
            alive &= ~absorbed
            if not alive.any():
                break
    return [
        (
            rec_s[: lengths[e], e],
            rec_a[: lengths[e], e],
            rec_s2[: lengths[e], e],
            rec_r[: lengths[e], e],
        )
        for e in range(n)
    ]


def validate_batch(batch: Batch, spec: BenchmarkSpec) -> None:
    """Check that every stored transition replays exactly on the true dynamics."""
    if batch.benchmark != spec.benchmark_id:
        raise ContractViolation(
            f"batch benchmark {batch.benchmark!r} does not match spec {spec.benchmark_id!r}"
        )
    if batch.state_dim != spec.state_dim:
        raise ContractViolation("batch state dimension does not match the benchmark")
    s2, r = true_step_batch(spec, batch.states, batch.actions)
    bad = ~(np.all(s2 == batch.next_states, axis=1) & (r == batch.rewards))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ContractViolation(
            f"transition {i} (traj {int(batch.traj_ids[i])}, step "
            f"{int(batch.step_ids[i])}) does not replay on the true dynamics"
        )


# ---------------------------------------------------------------------------
# persistence

def save_batch(batch: Batch, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "transition_batch",
            "benchmark": batch.benchmark,
            "seed": batch.seed,
            "policy_kind": batch.policy_kind,
            "episode_len": batch.episode_len,
            "count": len(batch),
        }
        fh.write(json.dumps(header) + "\n")
        for t in batch:
            rec = {
                "traj": t.traj,
                "step": t.step,
                "s": t.s.tolist(),
                "a": t.a,
                "s_next": t.s_next.tolist(),
                "r": t.r,
            }
            fh.write(json.dumps(rec) + "\n")


def load_batch(path: str | Path) -> Batch:
    path = Path(path)
    with path.open() as fh:
        line = fh.readline()
        if not line:
            raise DataFormatError("empty batch file", line=1)
        header = _parse(line, 1)
        if header.get("kind") != "transition_batch":
            raise DataFormatError("not a transition batch file", line=1)
        if header.get("format_version") != FORMAT_VERSION:
            raise DataFormatError(
                f"unsupported format version {header.get('format_version')!r}", line=1
            )
        count = header.get("count")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            rec = _parse(line, lineno)
            try:
                rows.append(
                    (
                        rec["traj"],
                        rec["step"],
                        rec["s"],
                        rec["a"],
                        rec["s_next"],
                        rec["r"],
                    )
                )
            except KeyError as missing:
                raise DataFormatError(f"missing field {missing}", line=lineno) from None
    if count is not None and len(rows) != count:
        raise DataFormatError(
            f"header promises {count} transitions, file has {len(rows)}"
        )
    if not rows:
        raise DataFormatError("batch file has no transitions")
    return Batch(
        benchmark=header["benchmark"],
        seed=header["seed"],
        policy_kind=header["policy_kind"],
        episode_len=header["episode_len"],
        states=np.array([r[2] for r in rows], dtype=float),
        actions=np.array([r[3] for r in rows], dtype=float),
        next_states=np.array([r[4] for r in rows], dtype=float),
        rewards=np.array([r[5] for r in rows], dtype=float),
        traj_ids=np.array([r[0] for r in rows], dtype=np.int64),
        step_ids=np.array([r[1] for r in rows], dtype=np.int64),
    )


def _parse(line: str, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as err:
        raise DataFormatError(f"invalid JSON ({err.msg})", line=lineno) from None
    if not isinstance(rec, dict):
        raise DataFormatError("record is not an object", line=lineno)
    return rec
