"""Seeded Monte Carlo rollouts of the coupled user / app / world system.

Randomness: every episode owns a Philox-4x64 counter-based generator keyed by
its 64-bit seed, so an episode's draws do not depend on which other episodes
ran, in what order, or in which process.  :func:`episode_seeds` derives
per-episode keys from one master seed through ``numpy.random.SeedSequence``.

Each step consumes exactly two uniforms, ``u_exec`` and ``u_move``, whatever
happens.  Runs that differ only in ``sigma2`` therefore share common random
numbers step by step.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from .core import ParameterError, UserParams, WorldParams
from .interventions import InterventionKind, InterventionProfile, induced_action
from .planner import AppPolicy

__all__ = [
    "Outcome",
    "Step",
    "Trajectory",
    "BatchStats",
    "episode_seeds",
    "make_rng",
    "rollout",
    "batch_stats",
    "write_trajectory",
]

_U64 = (1 << 64) - 1
_CHUNK = 64


class Outcome(enum.Enum):
    GOAL = "goal"
    DISENGAGED = "disengaged"
    HORIZON_EXCEEDED = "horizon_exceeded"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Step:
    w: int
    intervention: InterventionKind
    a_intended: int
    a_observed: int
    r_app: float


@dataclass
class Trajectory:
    seed: int
    start_w: int
    steps: list[Step] = field(default_factory=list)
    outcome: Outcome = Outcome.HORIZON_EXCEEDED

    @property
    def app_return(self) -> float:
        return sum(s.r_app for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0 or seed > _U64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))


def episode_seeds(master_seed: int, n: int) -> list[int]:
    """``n`` independent 64-bit episode keys derived from one master seed."""
    if n < 0:
        raise ParameterError("number of episodes must be nonnegative")
    state = np.random.SeedSequence(master_seed).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def _intended_table(
    theta: UserParams, world: WorldParams, policy: AppPolicy, profile: InterventionProfile
) -> tuple[list[InterventionKind], list[int]]:
    if policy.n_states != world.n_states:
        raise ParameterError("policy and world disagree on the number of states")
    kinds = [InterventionKind.NOOP]  # index 0 unused
    acts = [0]
    for w in range(1, world.n_states):
        kind = policy.chosen(w)
        kinds.append(kind)
        acts.append(induced_action(theta, world, world.n_states - w, kind, profile))
    return kinds, acts


def _run(
    world: WorldParams,
    kinds: Sequence[InterventionKind],
    acts: Sequence[int],
    seed: int,
    horizon: int,
    start_w: int,
    record: bool,
) -> tuple[Outcome, int, float, list[Step]]:
    rng = make_rng(seed)
    N = world.n_states
    p_exec = 1.0 - world.sigma2
    w = start_w
    steps: list[Step] = []
    ret = 0.0
    t = 0
    u = rng.random((0, 2))
    while t < horizon:
        i = t % _CHUNK
        if i == 0:
            u = rng.random((_CHUNK, 2))
        u_exec, u_move = u[i]
        a_int = acts[w]
        a_obs = 1 if (a_int == 1 and u_exec < p_exec) else 0
        r = 2.0 * a_obs - 1.0
        ret += r
        t += 1
        if record:
            steps.append(Step(w, kinds[w], a_int, a_obs, r))
        if a_obs:
            if u_move < world.p_world:
                w += 1
                if w == N:
                    return Outcome.GOAL, t, ret, steps
        elif u_move < world.d_world:
            return Outcome.DISENGAGED, t, ret, steps
    return Outcome.HORIZON_EXCEEDED, t, ret, steps


def rollout(
    theta: UserParams,
    world: WorldParams,
    policy: AppPolicy,
    profile: InterventionProfile,
    seed: int,
    horizon: int = 1000,
    start_w: int = 1,
) -> Trajectory:
    """Simulate one episode from progress state ``start_w``; deterministic in ``seed``."""
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    world.delta(start_w)
    kinds, acts = _intended_table(theta, world, policy, profile)
    outcome, _, _, steps = _run(world, kinds, acts, seed, horizon, start_w, record=True)
    return Trajectory(seed=seed, start_w=start_w, steps=steps, outcome=outcome)


@dataclass(frozen=True)
class BatchStats:
    n: int
    goal_rate: float
    disengage_rate: float
    horizon_rate: float
    mean_return: float
    mean_steps: float
    goal_ci: tuple[float, float]
    disengage_ci: tuple[float, float]
    return_ci: tuple[float, float]
    steps_ci: tuple[float, float]
    mean_steps_to_goal: Optional[float]

    def standard_error(self, rate: float) -> float:
        return math.sqrt(rate * (1.0 - rate) / self.n)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "goal_rate": self.goal_rate,
            "disengage_rate": self.disengage_rate,
            "horizon_rate": self.horizon_rate,
            "mean_return": self.mean_return,
            "mean_steps": self.mean_steps,
            "goal_ci": list(self.goal_ci),
            "disengage_ci": list(self.disengage_ci),
            "return_ci": list(self.return_ci),
            "steps_ci": list(self.steps_ci),
            "mean_steps_to_goal": self.mean_steps_to_goal,
        }


def _mean_ci(values: np.ndarray, z: float) -> tuple[float, tuple[float, float]]:
    m = float(values.mean())
    if values.size < 2:
        return m, (m, m)
    half = z * float(values.std(ddof=1)) / math.sqrt(values.size)
    return m, (m - half, m + half)


def batch_stats(
    theta: UserParams,
    world: WorldParams,
    policy: AppPolicy,
    profile: InterventionProfile,
    seeds: Iterable[int],
    horizon: int = 1000,
    start_w: int = 1,
    z: float = 1.96,
) -> BatchStats:
    """Aggregate one episode per seed; intervals use the normal approximation."""
    seeds = list(seeds)
    if not seeds:
        raise ParameterError("batch_stats needs at least one seed")
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    world.delta(start_w)
    kinds, acts = _intended_table(theta, world, policy, profile)
    n = len(seeds)
    outcomes = np.empty(n, dtype=np.int8)
    lengths = np.empty(n)
    returns = np.empty(n)
    code = {Outcome.GOAL: 0, Outcome.DISENGAGED: 1, Outcome.HORIZON_EXCEEDED: 2}
    for i, seed in enumerate(seeds):
        outcome, t, ret, _ = _run(world, kinds, acts, seed, horizon, start_w, record=False)
        outcomes[i] = code[outcome]
        lengths[i] = t
        returns[i] = ret
    goal = outcomes == 0
    rates = [float(np.mean(outcomes == c)) for c in range(3)]

    def rate_ci(r: float) -> tuple[float, float]:
        half = z * math.sqrt(r * (1.0 - r) / n)
        return (r - half, r + half)

    mean_ret, ret_ci = _mean_ci(returns, z)
    mean_len, len_ci = _mean_ci(lengths, z)
    return BatchStats(
        n=n,
        goal_rate=rates[0],
        disengage_rate=rates[1],
        horizon_rate=rates[2],
        mean_return=mean_ret,
        mean_steps=mean_len,
        goal_ci=rate_ci(rates[0]),
        disengage_ci=rate_ci(rates[1]),
        return_ci=ret_ci,
        steps_ci=len_ci,
        mean_steps_to_goal=float(lengths[goal].mean()) if goal.any() else None,
    )


def write_trajectory(traj: Trajectory, fh: IO[str]) -> None:
    """One JSON object per line, one line per step."""
    for i, s in enumerate(traj.steps):
        record = {
            "step": i,
            "w": s.w,
            "intervention": s.intervention.value,
            "a_intended": s.a_intended,
            "a_observed": s.a_observed,
            "r_app": s.r_app,
        }
        fh.write(json.dumps(record) + "\n")
