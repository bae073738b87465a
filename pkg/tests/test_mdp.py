import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mdp_cases, single_state
from earl.envs import random_mdp
from earl.mdp import (
    TabularMDP,
    TabularPolicy,
    advantage,
    discounted_return,
    entropy_rows,
    exact_policy_eval,
    policy_entropy,
    policy_value,
    q_to_v,
    state_visitation,
)
from earl.operators import bootstrap_backup


def naive_shaped_reward(mdp, probs, alpha):
    S, A = probs.shape
    H = np.zeros(S)
    for s in range(S):
        for a in range(A):
            if probs[s, a] > 0:
                H[s] -= probs[s, a] * np.log(probs[s, a])
    out = np.array(mdp.reward, dtype=float)
    for s in range(S):
        for a in range(A):
            out[s, a] += mdp.discount * alpha * sum(mdp.transition[s, a, t] * H[t] for t in range(S))
    return out


def iterate_eval(mdp, probs, alpha, sweeps):
    r_hat = naive_shaped_reward(mdp, probs, alpha)
    q = np.zeros_like(r_hat)
    for _ in range(sweeps):
        q = r_hat + mdp.discount * mdp.transition @ np.sum(probs * q, axis=1)
    return q


class TestConstruction:
    def test_defaults(self):
        m = single_state()
        assert m.initial_dist.tolist() == [1.0]
        assert m.reward_bound == 1.0
        assert m.n_states == 1 and m.n_actions == 1

    def test_arrays_are_read_only(self, mdp5):
        with pytest.raises(ValueError):
            mdp5.reward[0, 0] = 3.0

    @pytest.mark.parametrize("bad", [
        dict(transition=np.full((2, 1, 2), 0.6)),
        dict(transition=np.array([[[1.2, -0.2]], [[0.0, 1.0]]])),
        dict(discount=1.0),
        dict(discount=-0.1),
        dict(initial_dist=np.array([0.5, 0.6])),
        dict(reward=np.array([[np.nan], [0.0]])),
        dict(reward_bound=0.5),
    ])
    def test_invalid_inputs_rejected(self, bad):
        kw = dict(transition=np.array([[[1.0, 0.0]], [[0.0, 1.0]]]), reward=np.array([[1.0], [0.0]]),
                  discount=0.9)
        kw.update(bad)
        with pytest.raises(ValueError):
            TabularMDP(**kw)

    def test_policy_rows_checked(self):
        with pytest.raises(ValueError):
            TabularPolicy(np.array([[0.5, 0.4]]))
        with pytest.raises(ValueError):
            TabularPolicy(np.array([[1.5, -0.5]]))

    def test_value_bound(self):
        m = random_mdp(0, 4, 4, 0.9)
        assert m.value_bound(0.5) == pytest.approx((1.0 + 0.9 * 0.5 * np.log(4)) / 0.1)


class TestEntropy:
    def test_uniform_four(self):
        assert policy_entropy(TabularPolicy.uniform(1, 4), 0) == pytest.approx(1.3862944, abs=1e-7)

    def test_deterministic(self):
        assert policy_entropy(TabularPolicy.deterministic([2], 4), 0) == 0.0

    def test_half_half(self):
        pi = TabularPolicy(np.array([[0.5, 0.5, 0.0, 0.0]]))
        assert policy_entropy(pi, 0) == pytest.approx(0.6931472, abs=1e-7)

    @pytest.mark.parametrize("state", [-1, 3, 1.0])
    def test_out_of_range(self, state):
        with pytest.raises(ValueError):
            policy_entropy(TabularPolicy.uniform(3, 2), state)

    @given(st.integers(0, 10**6), st.integers(1, 6))
    def test_range(self, seed, n):
        pi = TabularPolicy.random(3, n, np.random.default_rng(seed), concentration=0.3)
        H = pi.entropy()
        assert np.all(H >= 0) and np.all(H <= np.log(n) + 1e-12)


class TestExactPolicyEval:
    def test_single_state(self):
        q = exact_policy_eval(single_state(), TabularPolicy.uniform(1, 1), 0.0)
        assert q[0, 0] == pytest.approx(10.0, abs=1e-12)

    def test_deterministic_ignores_alpha(self):
        m = single_state(n_actions=2)
        q = exact_policy_eval(m, TabularPolicy.deterministic([0], 2), 0.5)
        assert np.allclose(q, 10.0, atol=1e-12)

    def test_matches_iterative_oracle(self, mdp5, policy5):
        for alpha in (0.0, 0.3):
            q = exact_policy_eval(mdp5, policy5, alpha)
            # gamma^400 * bound is far below 1e-8 at gamma = 0.9
            assert np.max(np.abs(q - iterate_eval(mdp5, policy5.probs, alpha, 400))) <= 1e-8

    @given(mdp_cases, st.sampled_from([0.0, 0.1, 1.0]))
    def test_fixed_point_of_bootstrap_backup(self, case, alpha):
        mdp, pi = case
        q = exact_policy_eval(mdp, pi, alpha)
        assert np.max(np.abs(bootstrap_backup(q, mdp, pi, alpha) - q)) <= 1e-10 * max(1.0, np.max(np.abs(q)))

    @given(mdp_cases, st.sampled_from([0.0, 0.3]))
    def test_agrees_with_value_side_solve(self, case, alpha):
        mdp, pi = case
        q = exact_policy_eval(mdp, pi, alpha)
        v = policy_value(mdp, pi, alpha)
        assert np.allclose(q_to_v(q, pi), v, atol=1e-9 * max(1.0, np.max(np.abs(v))))

    def test_policy_shape_mismatch(self, mdp5):
        with pytest.raises(ValueError):
            exact_policy_eval(mdp5, TabularPolicy.uniform(4, 3))


class TestDiscountedReturn:
    def test_single_state(self):
        assert discounted_return(single_state(), TabularPolicy.uniform(1, 1)) == pytest.approx(10.0)

    def test_v_side(self, mdp5, policy5):
        eta = discounted_return(mdp5, policy5, 0.3)
        assert eta == pytest.approx(mdp5.initial_dist @ policy_value(mdp5, policy5, 0.3), abs=1e-10)

    def test_monte_carlo(self):
        mdp = random_mdp(8, 3, 2, 0.5)
        pi = TabularPolicy.random(3, 2, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        n, horizon = 100_000, 40  # 0.5^40 truncation is negligible
        s = rng.choice(3, size=n, p=mdp.initial_dist)
        total = np.zeros(n)
        cdf_pi = np.cumsum(pi.probs, axis=1)
        cdf_p = np.cumsum(mdp.transition, axis=2)
        for t in range(horizon):
            a = np.minimum((cdf_pi[s] < rng.random(n)[:, None]).sum(1), 1)
            total += 0.5**t * mdp.reward[s, a]
            s = np.minimum((cdf_p[s, a] < rng.random(n)[:, None]).sum(1), 2)
        se = total.std() / np.sqrt(n)
        assert abs(total.mean() - discounted_return(mdp, pi)) <= 3 * se


class TestStateVisitation:
    def test_single_state(self):
        assert state_visitation(single_state(), TabularPolicy.uniform(1, 1))[0] == pytest.approx(10.0)

    def test_two_state_cycle(self):
        P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
        m = TabularMDP(P, np.zeros((2, 1)), 0.5, np.array([1.0, 0.0]))
        assert np.allclose(state_visitation(m, TabularPolicy.uniform(2, 1)), [4 / 3, 2 / 3], atol=1e-12)

    def test_truncated_series(self, mdp5, policy5):
        P_pi = np.einsum("sa,sat->st", policy5.probs, mdp5.transition)
        dist, total = mdp5.initial_dist.copy(), np.zeros(5)
        for t in range(1000):
            total += 0.9**t * dist
            dist = dist @ P_pi
        assert np.max(np.abs(state_visitation(mdp5, policy5) - total)) <= 1e-9

    @given(mdp_cases)
    def test_mass(self, case):
        mdp, pi = case
        rho = state_visitation(mdp, pi)
        assert np.all(rho >= -1e-12)
        assert rho.sum() == pytest.approx(1.0 / (1.0 - mdp.discount), abs=1e-9 / (1.0 - mdp.discount))


class TestAdvantage:
    def test_deterministic(self):
        q = np.array([[1.0, 5.0], [2.0, -1.0]])
        A = advantage(q, TabularPolicy.deterministic([1, 0], 2))
        assert A[0, 1] == 0.0 and A[1, 0] == 0.0

    def test_uniform_pair(self):
        assert advantage(np.array([[1.0, 3.0]]), TabularPolicy.uniform(1, 2)).tolist() == [[-1.0, 1.0]]

    @given(st.integers(0, 10**6))
    def test_zero_mean(self, seed):
        rng = np.random.default_rng(seed)
        pi = TabularPolicy.random(4, 3, rng)
        A = advantage(rng.normal(size=(4, 3)) * 10, pi)
        assert np.all(np.abs(np.sum(pi.probs * A, axis=1)) <= 1e-12 * 50)

    def test_entropy_rows_zero_log_zero(self):
        assert entropy_rows(np.array([1.0, 0.0])) == 0.0
