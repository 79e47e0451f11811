import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import users
from nudgemdp.core import DISENGAGED, GOAL, ParameterError, Progress, UserParams, WorldParams, user_policy, user_value
from nudgemdp.oracle import (
    AbsorptionError,
    ConvergenceError,
    TabularMDP,
    absorption_probabilities,
    build_user_mdp,
    user_state_labels,
    value_iteration,
)

DEFAULT = UserParams()


def test_labels():
    labels = user_state_labels(4)
    assert labels == [Progress(1), Progress(2), Progress(3), GOAL, DISENGAGED]


class TestBuild:
    def test_small_chain_is_stochastic(self):
        mdp = build_user_mdp(DEFAULT, WorldParams(n_states=3))
        assert mdp.n_states == 4
        np.testing.assert_allclose(mdp.transitions.sum(axis=2), 1.0, atol=1e-12)

    def test_certain_progress_reaches_goal(self):
        mdp = build_user_mdp(UserParams(p_user=1.0), WorldParams(n_states=5))
        assert mdp.transitions[mdp.index(Progress(4)), 1, mdp.index(GOAL)] == 1.0

    def test_certain_disengagement(self):
        mdp = build_user_mdp(DEFAULT, WorldParams(n_states=5, d_world=1.0))
        for w in range(1, 5):
            assert mdp.transitions[mdp.index(Progress(w)), 0, mdp.index(DISENGAGED)] == 1.0

    def test_goal_reward_on_entry(self):
        mdp = build_user_mdp(DEFAULT, WorldParams(n_states=5))
        assert mdp.rewards[mdp.index(Progress(4)), 1] == pytest.approx(-1.0 + 6.0)
        assert mdp.rewards[mdp.index(Progress(3)), 1] == -1.0
        assert np.all(mdp.rewards[mdp.absorbing] == 0.0)

    def test_uses_believed_probability(self):
        mdp = build_user_mdp(UserParams(p_user=0.2), WorldParams(n_states=4, p_world=0.9))
        assert mdp.transitions[0, 1, 1] == pytest.approx(0.2)

    def test_full_patience_rejected(self):
        with pytest.raises(ParameterError):
            build_user_mdp(UserParams(gamma_user=1.0), WorldParams())

    def test_bad_kernel_rejected(self):
        P = np.zeros((2, 1, 2))
        P[0, 0, 0] = 0.5
        P[1, 0, 1] = 1.0
        with pytest.raises(ParameterError):
            TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([False, True]))


class TestValueIteration:
    def test_default_next_to_goal(self):
        mdp = build_user_mdp(DEFAULT, WorldParams(n_states=10))
        res = value_iteration(mdp, tol=1e-12)
        assert res.values[mdp.index(Progress(9))] == pytest.approx(125 / 19, abs=1e-8)

    def test_myopic_stays_away_from_goal(self):
        theta = UserParams(gamma_user=0.0)
        res = value_iteration(build_user_mdp(theta, WorldParams(n_states=6)))
        assert list(res.policy[:5]) == [0, 0, 0, 0, 1]

    def test_residuals_nonincreasing(self):
        res = value_iteration(build_user_mdp(UserParams(gamma_user=0.9), WorldParams(n_states=8)))
        r = np.array(res.residuals)
        assert np.all(np.diff(r) <= 1e-15)
        assert r[-1] <= 1e-12

    def test_nonconvergence_raises(self):
        mdp = build_user_mdp(UserParams(gamma_user=0.99), WorldParams(n_states=8))
        with pytest.raises(ConvergenceError) as info:
            value_iteration(mdp, max_iter=10)
        assert info.value.n_iter == 10

    def test_ties_prefer_lowest_action(self):
        P = np.zeros((2, 2, 2))
        P[:, :, 1] = 1.0
        mdp = TabularMDP(P, np.array([[1.0, 1.0], [0.0, 0.0]]), 0.5, np.array([False, True]))
        assert value_iteration(mdp).policy[0] == 0

    @settings(max_examples=150)
    @given(users, st.floats(0.05, 1.0), st.integers(2, 10))
    def test_agrees_with_closed_form(self, theta, d, n):
        world = WorldParams(n_states=n, d_world=d)
        mdp = build_user_mdp(theta, world)
        res = value_iteration(mdp, tol=1e-12)
        for w in range(1, n):
            delta = n - w
            assert res.values[w - 1] == pytest.approx(user_value(theta, d, delta), abs=1e-8)
            margin = abs(res.q_values[w - 1, 1] - res.q_values[w - 1, 0])
            if margin > 1e-9:
                assert res.policy[w - 1] == user_policy(theta, d, delta)


class TestAbsorption:
    def _mdp(self, **kw):
        return build_user_mdp(DEFAULT, WorldParams(n_states=5, **kw))

    def test_always_act_reaches_goal(self):
        out = absorption_probabilities(self._mdp(), [1, 1, 1, 1, 0, 0])
        np.testing.assert_allclose(out[:4, 0], 1.0)
        np.testing.assert_allclose(out[:4, 1], 0.0, atol=1e-15)

    def test_never_act_disengages(self):
        out = absorption_probabilities(self._mdp(), [0] * 6)
        np.testing.assert_allclose(out[:4, 1], 1.0)

    def test_absorbing_rows_are_identity(self):
        out = absorption_probabilities(self._mdp(), [0, 1, 0, 1, 0, 0])
        np.testing.assert_array_equal(out[4:], np.eye(2))
        np.testing.assert_allclose(out.sum(axis=1), 1.0)

    def test_stuck_state_detected(self):
        P = np.zeros((2, 1, 2))
        P[:, 0, :] = np.eye(2)
        mdp = TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([False, True]))
        with pytest.raises(AbsorptionError):
            absorption_probabilities(mdp, [0, 0])

    def test_bad_policy(self):
        with pytest.raises(ParameterError):
            absorption_probabilities(self._mdp(), [0, 1])
        with pytest.raises(ParameterError):
            absorption_probabilities(self._mdp(), [2] * 6)

    def test_mixed_policy_is_all_or_nothing(self):
        # act iff distance <= 2, N = 5: abstaining never moves and acting never
        # disengages, so each start is decided by which side of the switch it is
        mdp = build_user_mdp(UserParams(p_user=0.5), WorldParams(n_states=5, d_world=0.2))
        out = absorption_probabilities(mdp, [0, 0, 1, 1, 0, 0])
        np.testing.assert_allclose(out[:4, 0], [0.0, 0.0, 1.0, 1.0], atol=1e-12)

    def test_random_chain_matches_monte_carlo(self):
        rng = np.random.default_rng(2024)
        n_t, n_a = 5, 2
        n = n_t + n_a
        P = np.zeros((n, 1, n))
        P[:n_t, 0, :] = rng.dirichlet(np.ones(n), size=n_t)
        for s in range(n_t, n):
            P[s, 0, s] = 1.0
        absorbing = np.arange(n) >= n_t
        mdp = TabularMDP(P, np.zeros((n, 1)), 0.9, absorbing)
        exact = absorption_probabilities(mdp, [0] * n)[0]

        episodes = 1_000_000
        state = np.zeros(episodes, dtype=int)
        cum = np.cumsum(P[:, 0, :], axis=1)
        live = ~absorbing[state]
        while live.any():
            idx = np.flatnonzero(live)
            u = rng.random(idx.size)
            state[idx] = np.minimum((u[:, None] > cum[state[idx]]).sum(axis=1), n - 1)
            live = ~absorbing[state]
        for j in range(n_a):
            rate = np.mean(state == n_t + j)
            se = np.sqrt(exact[j] * (1 - exact[j]) / episodes)
            assert abs(rate - exact[j]) <= 3 * se
