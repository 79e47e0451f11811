"""App-side planning: which intervention to send in each progress state.

The app earns ``2 a_obs - 1`` per step, where ``a_obs`` is the user's observed
action, and experiences the *true* world dynamics.  Since the observed action
does not change future dynamics beyond ``w``, planning over progress states
alone is sufficient; the observed action is kept in simulated traces.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .core import ParameterError, Terminal, UserParams, WorldParams
from .interventions import (
    ACTIVE_KINDS,
    InterventionKind,
    InterventionProfile,
    induced_action,
)
from .oracle import TabularMDP, user_state_labels, value_iteration

__all__ = [
    "DEFAULT_GAMMA_APP",
    "StatePlan",
    "AppPolicy",
    "WindowLabel",
    "WindowRun",
    "WindowDecomposition",
    "build_app_mdp",
    "admissible_kinds",
    "plan",
    "policy_from_choices",
    "classify_state",
    "extract_windows",
]

DEFAULT_GAMMA_APP = 0.99
KINDS = list(InterventionKind)
NOOP = InterventionKind.NOOP
BD_KINDS = frozenset({InterventionKind.ON_B, InterventionKind.ON_D})
BOUNDED_KINDS = frozenset({InterventionKind.ON_GAMMA, InterventionKind.ON_P})


@dataclass(frozen=True)
class StatePlan:
    w: int
    admissible: frozenset
    chosen: InterventionKind
    default_act: bool


@dataclass(frozen=True)
class AppPolicy:
    """Per progress state: admissible interventions and the chosen one.

    Goal and Disengaged carry no entry; nothing can be done there.
    """

    n_states: int
    states: tuple  # StatePlan for w = 1 .. N-1, in order

    def __post_init__(self) -> None:
        if [s.w for s in self.states] != list(range(1, self.n_states)):
            raise ParameterError("AppPolicy needs one StatePlan per progress state, in order")

    def at(self, w: int) -> StatePlan:
        if not 1 <= w < self.n_states:
            raise ParameterError(f"no plan for state {w!r}")
        return self.states[w - 1]

    def chosen(self, w: int) -> InterventionKind:
        return self.at(w).chosen

    def admissible(self, state) -> frozenset:
        if isinstance(state, Terminal):
            return frozenset()
        return self.at(state).admissible


def admissible_kinds(
    theta: UserParams, world: WorldParams, delta: int, profile: InterventionProfile
) -> frozenset:
    """Every intervention (NoOp included) after which the user acts."""
    return frozenset(k for k in KINDS if induced_action(theta, world, delta, k, profile) == 1)


def build_app_mdp(
    theta: UserParams,
    world: WorldParams,
    profile: InterventionProfile,
    gamma_app: float = DEFAULT_GAMMA_APP,
) -> TabularMDP:
    """The app's MDP over progress states; one action per intervention kind."""
    if not 0.0 <= gamma_app < 1.0:
        raise ParameterError(f"gamma_app must lie in [0, 1), got {gamma_app}")
    N = world.n_states
    n = N + 1
    goal, dis = N - 1, N
    keep = 1.0 - world.sigma2
    P = np.zeros((n, len(KINDS), n))
    R = np.zeros((n, len(KINDS)))
    for w in range(1, N):
        s = w - 1
        nxt = goal if w + 1 == N else s + 1
        delta = N - w
        for k in KINDS:
            a = k.index
            act = keep * induced_action(theta, world, delta, k, profile)
            R[s, a] = 2.0 * act - 1.0
            move = act * world.p_world
            quit_ = (1.0 - act) * world.d_world
            P[s, a, nxt] += move
            P[s, a, dis] += quit_
            P[s, a, s] += 1.0 - move - quit_
    for s in (goal, dis):
        P[s, :, s] = 1.0
    absorbing = np.zeros(n, dtype=bool)
    absorbing[[goal, dis]] = True
    return TabularMDP(P, R, gamma_app, absorbing, user_state_labels(N))


def plan(
    theta: UserParams,
    world: WorldParams,
    profile: Optional[InterventionProfile] = None,
    gamma_app: float = DEFAULT_GAMMA_APP,
    tol: float = 1e-12,
) -> AppPolicy:
    """Solve the app MDP; ``profile`` defaults to the maximal one for ``theta``."""
    if profile is None:
        profile = InterventionProfile.maximal(theta)
    mdp = build_app_mdp(theta, world, profile, gamma_app)
    # Interventions with the same induced action have bit-identical Q rows,
    # so the lowest-index tie-break yields the NoOp, B, D, gamma, p order.
    result = value_iteration(mdp, tol=tol, tie_tol=1e-12)
    states = []
    for w in range(1, world.n_states):
        admissible = admissible_kinds(theta, world, world.n_states - w, profile)
        states.append(
            StatePlan(
                w=w,
                admissible=admissible,
                chosen=KINDS[int(result.policy[w - 1])],
                default_act=NOOP in admissible,
            )
        )
    return AppPolicy(world.n_states, tuple(states))


def policy_from_choices(
    theta: UserParams,
    world: WorldParams,
    profile: InterventionProfile,
    choices: Mapping[int, InterventionKind] | InterventionKind,
) -> AppPolicy:
    """An AppPolicy with hand-picked interventions (admissible sets still computed)."""
    states = []
    for w in range(1, world.n_states):
        kind = choices if isinstance(choices, InterventionKind) else choices.get(w, NOOP)
        admissible = admissible_kinds(theta, world, world.n_states - w, profile)
        states.append(StatePlan(w, admissible, kind, NOOP in admissible))
    return AppPolicy(world.n_states, tuple(states))


class WindowLabel(enum.Enum):
    WINDOW1 = "window1"
    WINDOW2 = "window2"
    WINDOW3 = "window3"
    DEFAULT_ACT = "default_act"
    HOPELESS = "hopeless"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class WindowRun:
    first_w: int
    last_w: int
    label: WindowLabel
    signature: frozenset  # union of admissible sets over the run
    bounded: frozenset  # the single gamma or p kind of a Window2 run

    @property
    def states(self) -> range:
        return range(self.first_w, self.last_w + 1)


@dataclass(frozen=True)
class WindowDecomposition:
    runs: tuple

    def labels(self) -> list[WindowLabel]:
        return [r.label for r in self.runs]


def classify_state(admissible: frozenset) -> tuple[WindowLabel, frozenset]:
    """Window label of one state plus the bounded kinds it relies on."""
    if NOOP in admissible:
        return WindowLabel.DEFAULT_ACT, frozenset()
    if not admissible:
        return WindowLabel.HOPELESS, frozenset()
    bounded = admissible & BOUNDED_KINDS
    # both bounded kinds working means neither is singled out: Window3-like
    if admissible >= frozenset(ACTIVE_KINDS) or bounded == BOUNDED_KINDS:
        return WindowLabel.WINDOW3, frozenset()
    if not bounded:
        return WindowLabel.WINDOW1, frozenset()
    return WindowLabel.WINDOW2, bounded


def extract_windows(policy: AppPolicy) -> WindowDecomposition:
    """Maximal runs of equal label (and equal bounded kinds), far to near."""
    if policy.n_states - 1 < 1:
        raise ParameterError("policy has no progress states")
    runs: list[WindowRun] = []
    for sp in policy.states:
        label, bounded = classify_state(sp.admissible)
        if runs and runs[-1].label is label and runs[-1].bounded == bounded:
            prev = runs[-1]
            runs[-1] = WindowRun(prev.first_w, sp.w, label, prev.signature | sp.admissible, bounded)
        else:
            runs.append(WindowRun(sp.w, sp.w, label, sp.admissible, bounded))
    return WindowDecomposition(tuple(runs))
