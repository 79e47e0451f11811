"""User decision model: parameters, perceived rewards and closed-form values.

The user lives on a one-dimensional progress chain ``w = 1 .. N`` with two
absorbing states, ``Goal`` (``w = N``) and ``Disengaged``.  At every progress
state they either act (``a = 1``, pay the burden ``B`` and move right with
their *believed* probability ``p_user``) or abstain (``a = 0``, and risk
disengaging with probability ``d_world``).  Because progress is never lost,
the optimal value at distance ``delta = N - w`` from the goal is the larger of
two geometric series: always-stay and always-act.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

__all__ = [
    "ParameterError",
    "SingularityError",
    "UserParams",
    "WorldParams",
    "Progress",
    "Terminal",
    "UserState",
    "GOAL",
    "DISENGAGED",
    "DecisionComponents",
    "user_reward",
    "z_factor",
    "v_stay",
    "v_right",
    "decision_components",
    "user_policy",
    "user_value",
]


class ParameterError(ValueError):
    """A parameter lies outside its admissible range."""


class SingularityError(ParameterError):
    """A geometric-series denominator vanishes (gamma = 1 with p = 0 or d = 0)."""


def _check_unit(name: str, value: float, *, open_low: bool = False) -> None:
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    low_ok = value > 0.0 if open_low else value >= 0.0
    if not (low_ok and value <= 1.0):
        interval = "(0, 1]" if open_low else "[0, 1]"
        raise ParameterError(f"{name} must lie in {interval}, got {value!r}")


@dataclass(frozen=True)
class UserParams:
    """The user's decision parameters.

    ``burden`` is the per-action reward (usually negative), ``goal_reward``
    is collected on reaching the goal, ``disengage_reward`` on disengaging.
    """

    burden: float = -1.0
    goal_reward: float = 10.0
    disengage_reward: float = 0.0
    p_user: float = 0.6
    gamma_user: float = 0.6

    def __post_init__(self) -> None:
        for name in ("burden", "goal_reward", "disengage_reward"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        _check_unit("p_user", self.p_user)
        _check_unit("gamma_user", self.gamma_user)
        if self.gamma_user == 1.0 and self.p_user == 0.0:
            raise SingularityError("gamma_user = 1 with p_user = 0 makes z = 0")

    @property
    def z(self) -> float:
        return z_factor(self.gamma_user, self.p_user)


@dataclass(frozen=True)
class WorldParams:
    """Ground truth of the environment the user acts in."""

    n_states: int = 8
    p_world: float = 0.6
    d_world: float = 0.1
    sigma2: float = 0.0

    def __post_init__(self) -> None:
        if isinstance(self.n_states, bool) or not isinstance(self.n_states, int):
            raise ParameterError(f"n_states must be an integer, got {self.n_states!r}")
        if self.n_states < 2:
            raise ParameterError(f"n_states must be >= 2, got {self.n_states}")
        _check_unit("p_world", self.p_world, open_low=True)
        _check_unit("d_world", self.d_world, open_low=True)
        _check_unit("sigma2", self.sigma2)

    def delta(self, w: int) -> int:
        """Distance to the goal from progress state ``w``."""
        if not 1 <= w <= self.n_states - 1:
            raise ParameterError(f"progress state must be in 1..{self.n_states - 1}, got {w}")
        return self.n_states - w


@dataclass(frozen=True)
class Progress:
    w: int


class Terminal(enum.Enum):
    GOAL = "goal"
    DISENGAGED = "disengaged"

    def __repr__(self) -> str:
        return f"Terminal.{self.name}"


GOAL = Terminal.GOAL
DISENGAGED = Terminal.DISENGAGED

UserState = Union[Progress, Terminal]


@dataclass(frozen=True)
class DecisionComponents:
    """The three terms of the act/abstain inequality, plus ``z``.

    The user acts iff ``burden_term + goal_term > disengage_term``.
    """

    burden_term: float
    goal_term: float
    disengage_term: float
    z: float

    @property
    def act_value(self) -> float:
        return self.burden_term + self.goal_term

    @property
    def margin(self) -> float:
        return self.burden_term + self.goal_term - self.disengage_term


def user_reward(theta: UserParams, state: UserState, action: int) -> float:
    """Perceived one-step reward.

    Terminal states report their one-shot reward (G or D); the oracle MDP pays
    it on the entering transition, so a goal entry under ``a = 1`` is worth
    ``G + B`` along a trajectory.
    """
    if action not in (0, 1):
        raise ParameterError(f"action must be 0 or 1, got {action!r}")
    if state is GOAL:
        return theta.goal_reward
    if state is DISENGAGED:
        return theta.disengage_reward
    return theta.burden if action == 1 else 0.0


def z_factor(gamma: float, p: float) -> float:
    z = 1.0 - gamma * (1.0 - p)
    if z <= 0.0:
        raise SingularityError(f"z = 1 - gamma(1 - p) vanishes for gamma={gamma}, p={p}")
    return z


def v_stay(theta: UserParams, d_world: float) -> float:
    """Value of abstaining forever: ``d D / (1 - gamma (1 - d))``."""
    gamma = theta.gamma_user
    denom = 1.0 - gamma * (1.0 - d_world)
    if denom <= 0.0:
        raise SingularityError(f"stay value undefined for gamma={gamma}, d_world={d_world}")
    return d_world * theta.disengage_reward / denom


def _right_terms(theta: UserParams, delta: int) -> tuple[float, float, float]:
    # Written in terms of q = gamma p / z and p / z, both in [0, 1], so the
    # running products cannot overflow however large delta gets.
    if isinstance(delta, bool) or int(delta) != delta or delta < 1:
        raise ParameterError(f"delta must be a positive integer, got {delta!r}")
    delta = int(delta)
    z = theta.z
    q = theta.gamma_user * theta.p_user / z
    series = 1.0
    qk = 1.0
    for _ in range(delta - 1):
        qk *= q
        if qk == 0.0:
            break
        series += qk
    # qk == q**(delta - 1) here, or 0.0 once it underflowed
    burden_term = theta.burden * series / z
    goal_term = theta.goal_reward * (theta.p_user / z) * qk
    return burden_term, goal_term, z


def v_right(theta: UserParams, delta: int) -> float:
    """Value of acting at every step from distance ``delta`` until the goal."""
    burden_term, goal_term, _ = _right_terms(theta, delta)
    return burden_term + goal_term


def decision_components(theta: UserParams, d_world: float, delta: int) -> DecisionComponents:
    burden_term, goal_term, z = _right_terms(theta, delta)
    return DecisionComponents(burden_term, goal_term, v_stay(theta, d_world), z)


def user_policy(theta: UserParams, d_world: float, delta: int) -> int:
    """1 iff acting strictly beats abstaining; ties resolve to abstain."""
    c = decision_components(theta, d_world, delta)
    return int(c.burden_term + c.goal_term > c.disengage_term)


def user_value(theta: UserParams, d_world: float, delta: int) -> float:
    c = decision_components(theta, d_world, delta)
    return max(c.disengage_term, c.burden_term + c.goal_term)
