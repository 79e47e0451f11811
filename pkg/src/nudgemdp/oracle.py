"""Dense tabular MDPs, value iteration and absorbing-chain analysis.

Serves as the brute-force reference for the closed forms in
:mod:`nudgemdp.core` and as the solver for the app's planning problem.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DISENGAGED, GOAL, ParameterError, Progress, UserParams, UserState, WorldParams

__all__ = [
    "ConvergenceError",
    "AbsorptionError",
    "TabularMDP",
    "ValueIterationResult",
    "user_state_labels",
    "build_user_mdp",
    "value_iteration",
    "absorption_probabilities",
]

ROW_SUM_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Value iteration hit ``max_iter`` before reaching the tolerance."""

    def __init__(self, n_iter: int, residual: float, tol: float):
        super().__init__(
            f"value iteration did not converge after {n_iter} iterations "
            f"(residual {residual:.3e} > tol {tol:.3e})"
        )
        self.n_iter = n_iter
        self.residual = residual


class AbsorptionError(RuntimeError):
    """Some transient state cannot reach any absorbing state."""


@dataclass
class TabularMDP:
    """Finite MDP with expected rewards ``R[s, a]`` and kernel ``P[s, a, s']``.

    Terminal rewards are paid on the entering transition (folded into ``R`` of
    the predecessor), so absorbing states self-loop with zero reward.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    discount: float
    absorbing: np.ndarray
    state_labels: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.absorbing = np.asarray(self.absorbing, dtype=bool)
        P, R = self.transitions, self.rewards
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ParameterError(f"transitions must have shape (S, A, S), got {P.shape}")
        n, m = P.shape[:2]
        if n < 1 or m < 1:
            raise ParameterError("MDP needs at least one state and one action")
        if R.shape != (n, m):
            raise ParameterError(f"rewards must have shape {(n, m)}, got {R.shape}")
        if self.absorbing.shape != (n,):
            raise ParameterError(f"absorbing mask must have shape {(n,)}")
        if not 0.0 <= self.discount < 1.0:
            raise ParameterError(f"discount must lie in [0, 1), got {self.discount}")
        if np.any(P < 0.0):
            raise ParameterError("transition probabilities must be nonnegative")
        worst = np.max(np.abs(P.sum(axis=2) - 1.0))
        if worst > ROW_SUM_TOL:
            raise ParameterError(f"transition rows must sum to 1 (worst deviation {worst:.3e})")
        for s in np.flatnonzero(self.absorbing):
            if not np.all(P[s, :, s] == 1.0) or np.any(R[s] != 0.0):
                raise ParameterError(f"absorbing state {s} must self-loop with zero reward")
        if not self.state_labels:
            self.state_labels = list(range(n))
        elif len(self.state_labels) != n:
            raise ParameterError("state_labels length does not match the number of states")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def index(self, label) -> int:
        return self.state_labels.index(label)


@dataclass
class ValueIterationResult:
    values: np.ndarray
    policy: np.ndarray
    q_values: np.ndarray
    residuals: list[float]

    @property
    def n_iter(self) -> int:
        return len(self.residuals)


def user_state_labels(n_states: int) -> list[UserState]:
    """Progress(1..N-1), then Goal, then Disengaged; index of Progress(w) is w - 1."""
    return [Progress(w) for w in range(1, n_states)] + [GOAL, DISENGAGED]


def build_user_mdp(theta: UserParams, world: WorldParams) -> TabularMDP:
    """The MDP the user believes in (``p_user``, never ``p_world``)."""
    if theta.gamma_user >= 1.0:
        raise ParameterError("the tabular oracle requires gamma_user < 1")
    N = world.n_states
    n = N + 1
    goal, dis = N - 1, N
    p, d = theta.p_user, world.d_world
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2))
    for w in range(1, N):
        s = w - 1
        nxt = goal if w + 1 == N else s + 1
        P[s, 1, nxt] += p
        P[s, 1, s] += 1.0 - p
        R[s, 1] = theta.burden + (p * theta.goal_reward if nxt == goal else 0.0)
        P[s, 0, dis] += d
        P[s, 0, s] += 1.0 - d
        R[s, 0] = d * theta.disengage_reward
    for s in (goal, dis):
        P[s, :, s] = 1.0
    absorbing = np.zeros(n, dtype=bool)
    absorbing[[goal, dis]] = True
    return TabularMDP(P, R, theta.gamma_user, absorbing, user_state_labels(N))


def _greedy(q: np.ndarray, tie_tol: float) -> np.ndarray:
    # lowest action index among those within tie_tol of the best
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tie_tol, axis=1)


def value_iteration(
    mdp: TabularMDP,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    tie_tol: float = 0.0,
) -> ValueIterationResult:
    """Bellman backups until the sup-norm residual drops to ``tol``.

    The greedy policy prefers the lowest-numbered action on ties, which for
    the user MDP means abstaining.
    """
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    P, R, gamma = mdp.transitions, mdp.rewards, mdp.discount
    V = np.zeros(mdp.n_states)
    residuals: list[float] = []
    for _ in range(max_iter):
        V_new = (R + gamma * (P @ V)).max(axis=1)
        residual = float(np.max(np.abs(V_new - V)))
        residuals.append(residual)
        V = V_new
        if residual <= tol:
            break
    else:
        raise ConvergenceError(max_iter, residuals[-1], tol)
    q = R + gamma * (P @ V)
    return ValueIterationResult(V, _greedy(q, tie_tol), q, residuals)


def _can_reach_absorbing(chain: np.ndarray, absorbing: np.ndarray) -> np.ndarray:
    n = chain.shape[0]
    reach = absorbing.copy()
    queue = deque(np.flatnonzero(absorbing))
    preds = [np.flatnonzero(chain[:, j] > 0.0) for j in range(n)]
    while queue:
        j = queue.popleft()
        for i in preds[j]:
            if not reach[i]:
                reach[i] = True
                queue.append(i)
    return reach


def absorption_probabilities(mdp: TabularMDP, policy: Sequence[int]) -> np.ndarray:
    """Probability of ending in each absorbing state under a fixed policy.

    Returns an ``(n_states, n_absorbing)`` array whose columns follow
    ``np.flatnonzero(mdp.absorbing)``.
    """
    policy = np.asarray(policy, dtype=int)
    if policy.shape != (mdp.n_states,):
        raise ParameterError(f"policy must assign one action to each of {mdp.n_states} states")
    if np.any((policy < 0) | (policy >= mdp.n_actions)):
        raise ParameterError("policy contains an invalid action index")
    chain = mdp.transitions[np.arange(mdp.n_states), policy]
    absorbing = mdp.absorbing
    stuck = ~_can_reach_absorbing(chain, absorbing)
    if np.any(stuck):
        labels = [mdp.state_labels[s] for s in np.flatnonzero(stuck)]
        raise AbsorptionError(f"no absorbing state reachable from {labels}")
    transient = np.flatnonzero(~absorbing)
    targets = np.flatnonzero(absorbing)
    out = np.zeros((mdp.n_states, targets.size))
    out[targets, np.arange(targets.size)] = 1.0
    if transient.size:
        Q = chain[np.ix_(transient, transient)]
        Rt = chain[np.ix_(transient, targets)]
        try:
            out[transient] = np.linalg.solve(np.eye(transient.size) - Q, Rt)
        except np.linalg.LinAlgError as exc:
            raise AbsorptionError(f"absorbing-chain system is singular: {exc}") from exc
    return out
