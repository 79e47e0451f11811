"""App interventions as transient shifts of the user's parameters.

Each intervention moves exactly one parameter for a single decision.  B and D
shifts are unbounded in principle; gamma and p cannot be pushed past 1.  The
*effectiveness* of an intervention is its shift as a percentage of the
largest feasible shift (its cap).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

from .core import ParameterError, UserParams, WorldParams, user_policy

__all__ = [
    "InterventionKind",
    "ACTIVE_KINDS",
    "InterventionProfile",
    "max_delta",
    "shift",
    "apply",
    "induced_action",
    "min_effective_delta",
    "min_effectiveness",
]

BISECT_TOL = 1e-9


class InterventionKind(enum.Enum):
    NOOP = "noop"
    ON_B = "B"
    ON_D = "D"
    ON_GAMMA = "gamma"
    ON_P = "p"

    @property
    def index(self) -> int:
        return _KIND_ORDER.index(self)

    @classmethod
    def parse(cls, text: str) -> "InterventionKind":
        # accepts "p", "ON_P", "on_p" and "OnP"
        key = text.strip().lower().replace("_", "")
        for kind in cls:
            if key in (kind.value.lower(), kind.name.lower().replace("_", "")):
                return kind
        raise ParameterError(f"unknown intervention kind {text!r}")

    def __str__(self) -> str:
        return self.value


# Fixed action order; also the planner's tie-break order.
_KIND_ORDER = list(InterventionKind)
ACTIVE_KINDS = tuple(k for k in _KIND_ORDER if k is not InterventionKind.NOOP)


@dataclass(frozen=True)
class InterventionProfile:
    """Effect magnitudes of the four interventions.

    ``d_floor`` bounds how low an intervention may push D (None means
    ``-goal_reward``); ``epsilon_B`` is how far above zero a maximal burden
    intervention lands (None means ``1e-6 * max(1, |G|)``).
    """

    delta_B: float = 0.0
    delta_D: float = 0.0
    delta_gamma: float = 0.0
    delta_p: float = 0.0
    d_floor: Optional[float] = None
    epsilon_B: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("delta_B", "delta_D", "delta_gamma", "delta_p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ParameterError(f"{name} must be a finite nonnegative number, got {value!r}")
        if self.d_floor is not None and not math.isfinite(self.d_floor):
            raise ParameterError("d_floor must be finite")
        if self.epsilon_B is not None and not (math.isfinite(self.epsilon_B) and self.epsilon_B > 0):
            raise ParameterError("epsilon_B must be a finite positive number")

    def floor_for(self, theta: UserParams) -> float:
        return -theta.goal_reward if self.d_floor is None else self.d_floor

    def epsilon_for(self, theta: UserParams) -> float:
        if self.epsilon_B is not None:
            return self.epsilon_B
        return 1e-6 * max(1.0, abs(theta.goal_reward))

    def delta(self, kind: InterventionKind) -> float:
        return {
            InterventionKind.NOOP: 0.0,
            InterventionKind.ON_B: self.delta_B,
            InterventionKind.ON_D: self.delta_D,
            InterventionKind.ON_GAMMA: self.delta_gamma,
            InterventionKind.ON_P: self.delta_p,
        }[kind]

    @classmethod
    def maximal(
        cls,
        theta: UserParams,
        d_floor: Optional[float] = None,
        epsilon_B: Optional[float] = None,
    ) -> "InterventionProfile":
        """Every effect set to its cap for ``theta``."""
        base = cls(d_floor=d_floor, epsilon_B=epsilon_B)
        return replace(
            base,
            delta_B=max_delta(theta, InterventionKind.ON_B, base),
            delta_D=max_delta(theta, InterventionKind.ON_D, base),
            delta_gamma=max_delta(theta, InterventionKind.ON_GAMMA, base),
            delta_p=max_delta(theta, InterventionKind.ON_P, base),
        )


def max_delta(theta: UserParams, kind: InterventionKind, profile: InterventionProfile) -> float:
    """Largest feasible shift of ``kind`` for this user."""
    if kind is InterventionKind.NOOP:
        return 0.0
    if kind is InterventionKind.ON_B:
        return -theta.burden + profile.epsilon_for(theta) if theta.burden < 0.0 else 0.0
    if kind is InterventionKind.ON_D:
        return max(0.0, theta.disengage_reward - profile.floor_for(theta))
    if kind is InterventionKind.ON_GAMMA:
        return 1.0 - theta.gamma_user
    return 1.0 - theta.p_user


def shift(
    theta: UserParams,
    kind: InterventionKind,
    delta: float,
    profile: InterventionProfile = InterventionProfile(),
) -> UserParams:
    """Move one parameter of ``theta`` by ``delta`` (clamped, never failing)."""
    if delta < 0.0:
        raise ParameterError(f"intervention magnitude must be nonnegative, got {delta}")
    if kind is InterventionKind.NOOP or delta == 0.0:
        return theta
    if kind is InterventionKind.ON_B:
        return replace(theta, burden=theta.burden + delta)
    if kind is InterventionKind.ON_D:
        # the floor may cap a decrease but never raises D
        floor = min(profile.floor_for(theta), theta.disengage_reward)
        return replace(theta, disengage_reward=max(theta.disengage_reward - delta, floor))
    if kind is InterventionKind.ON_GAMMA:
        return replace(theta, gamma_user=min(1.0, theta.gamma_user + delta))
    return replace(theta, p_user=min(1.0, theta.p_user + delta))


def apply(theta: UserParams, kind: InterventionKind, profile: InterventionProfile) -> UserParams:
    """Parameters the user decides with for one step under ``kind``."""
    return shift(theta, kind, profile.delta(kind), profile)


def induced_action(
    theta: UserParams,
    world: WorldParams,
    delta: int,
    kind: InterventionKind,
    profile: InterventionProfile,
) -> int:
    return user_policy(apply(theta, kind, profile), world.d_world, delta)


def min_effective_delta(
    theta: UserParams,
    world: WorldParams,
    delta: int,
    kind: InterventionKind,
    profile: InterventionProfile = InterventionProfile(),
    resolution: int = 1000,
    tol: float = BISECT_TOL,
) -> Optional[float]:
    """Smallest shift of ``kind`` that makes the user act at distance ``delta``.

    Returns 0.0 if the user already acts and None if even the cap fails.  The
    grid scan finds the first flipping cell (no monotonicity is assumed for
    gamma or p); bisection then narrows that cell to ``tol``.
    """
    if kind is InterventionKind.NOOP:
        raise ParameterError("min effectiveness is undefined for the no-op intervention")
    if resolution < 1000:
        raise ParameterError(f"resolution must be at least 1000, got {resolution}")
    d = world.d_world

    def acts(amount: float) -> bool:
        return user_policy(shift(theta, kind, amount, profile), d, delta) == 1

    if acts(0.0):
        return 0.0
    cap = max_delta(theta, kind, profile)
    if cap <= 0.0:
        return None
    lo = 0.0
    for i in range(1, resolution + 1):
        hi = cap * i / resolution
        if acts(hi):
            break
        lo = hi
    else:
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if acts(mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_effectiveness(
    theta: UserParams,
    world: WorldParams,
    delta: int,
    kind: InterventionKind,
    profile: InterventionProfile = InterventionProfile(),
    resolution: int = 1000,
) -> Optional[float]:
    """Minimum effectiveness in percent, or None when the cap is insufficient."""
    amount = min_effective_delta(theta, world, delta, kind, profile, resolution)
    if amount is None:
        return None
    if amount == 0.0:
        return 0.0
    return 100.0 * amount / max_delta(theta, kind, profile)
