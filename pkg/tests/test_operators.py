import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mdp_cases, single_state
from earl.envs import random_mdp, to_tabular
from earl.mdp import TabularMDP, TabularPolicy, exact_policy_eval
from earl.operators import (
    ConvergenceError,
    SoftValueIteration,
    argmax_sets,
    bootstrap_backup,
    greedy_policy,
    iterate_to_fixed_point,
    kl_divergence,
    soft_backup,
    soft_improvement_step,
    soft_q_iteration,
    soft_state_value,
    v_backup,
    value_iteration,
)


def naive_soft_backup(q, mdp, probs, alpha):
    S, A = probs.shape
    out = np.zeros((S, A))
    for s in range(S):
        for a in range(A):
            total = mdp.reward[s, a]
            for t in range(S):
                inner = 0.0
                for b in range(A):
                    if probs[t, b] > 0:
                        inner += probs[t, b] * (q[t, b] - alpha * np.log(probs[t, b]))
                total += mdp.discount * mdp.transition[s, a, t] * inner
            out[s, a] = total
    return out


def classical_vi(mdp, sweeps=3000):
    v = np.zeros(mdp.n_states)
    for _ in range(sweeps):
        v = np.max(mdp.reward + mdp.discount * mdp.transition @ v, axis=1)
    return v


class TestSoftBackup:
    def test_alpha_zero_is_expected_backup(self, mdp5, policy5):
        q = np.random.default_rng(0).normal(size=(5, 3))
        expected = mdp5.reward + 0.9 * mdp5.transition @ np.sum(policy5.probs * q, axis=1)
        assert np.allclose(soft_backup(q, mdp5, policy5, 0.0), expected, atol=1e-14)

    @pytest.mark.parametrize("alpha", [0.1, 1.0])
    def test_zero_q_uniform_policy(self, alpha):
        m = random_mdp(1, 3, 4, 0.9)
        out = soft_backup(np.zeros((3, 4)), m, TabularPolicy.uniform(3, 4), alpha)
        assert np.allclose(out, m.reward + 0.9 * alpha * np.log(4), atol=1e-14)

    def test_matches_triple_loop(self, mdp5, policy5):
        q = np.random.default_rng(1).normal(size=(5, 3))
        assert np.allclose(soft_backup(q, mdp5, policy5, 0.7), naive_soft_backup(q, mdp5, policy5.probs, 0.7),
                           atol=1e-12)

    def test_zero_probability_actions(self):
        m = random_mdp(2, 2, 3, 0.9)
        pi = TabularPolicy(np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]]))
        q = np.ones((2, 3))
        assert np.all(np.isfinite(soft_backup(q, m, pi, 1.0)))


class TestBootstrapBackup:
    def test_alpha_zero_equals_soft(self, mdp5, policy5):
        q = np.random.default_rng(2).normal(size=(5, 3))
        assert np.array_equal(bootstrap_backup(q, mdp5, policy5, 0.0), soft_backup(q, mdp5, policy5, 0.0))

    def test_fixed_point(self, mdp5, policy5):
        q = exact_policy_eval(mdp5, policy5, 0.4)
        assert np.max(np.abs(bootstrap_backup(q, mdp5, policy5, 0.4) - q)) <= 1e-10

    @given(mdp_cases, st.floats(0, 2), st.integers(0, 10**6))
    def test_conjugate_with_soft(self, case, alpha, seed):
        mdp, pi = case
        q = np.random.default_rng(seed).uniform(-10, 10, size=pi.shape)
        assert np.max(np.abs(soft_backup(q, mdp, pi, alpha) - bootstrap_backup(q, mdp, pi, alpha))) <= 1e-12

    @given(mdp_cases, st.sampled_from([0.0, 0.5]), st.integers(0, 10**6))
    def test_monotone(self, case, alpha, seed):
        mdp, pi = case
        rng = np.random.default_rng(seed)
        q1 = rng.normal(size=pi.shape)
        q2 = q1 + rng.uniform(0, 1, size=pi.shape)
        for op in (soft_backup, bootstrap_backup):
            assert np.all(op(q1, mdp, pi, alpha) <= op(q2, mdp, pi, alpha) + 1e-12)

    @given(mdp_cases, st.sampled_from([0.0, 0.1, 1.0]), st.integers(0, 10**6))
    def test_q_contraction(self, case, alpha, seed):
        mdp, pi = case
        rng = np.random.default_rng(seed)
        q1, q2 = rng.uniform(-10, 10, size=(2,) + pi.shape)
        for op in (soft_backup, bootstrap_backup):
            lhs = np.max(np.abs(op(q1, mdp, pi, alpha) - op(q2, mdp, pi, alpha)))
            assert lhs <= mdp.discount * np.max(np.abs(q1 - q2)) + 1e-9


class TestVBackup:
    def test_single_state_fixed_point(self):
        assert v_backup(np.array([10.0]), single_state(), 0.0)[0] == pytest.approx(10.0)

    def test_optimal_matches_enumeration(self):
        m = random_mdp(5, 2, 3, 0.8)
        v = np.array([1.0, -2.0])
        ref = TabularPolicy.random(2, 3, np.random.default_rng(0))
        H = ref.entropy()
        expected = []
        for s in range(2):
            best = -np.inf
            for a in range(3):
                val = m.reward[s, a] + sum(m.transition[s, a, t] * (0.8 * 0.3 * H[t] + 0.8 * v[t]) for t in range(2))
                best = max(best, val)
            expected.append(best)
        assert np.allclose(v_backup(v, m, 0.3, reference=ref), expected, atol=1e-12)
        # greedy reference: no entropy
        assert np.allclose(v_backup(v, m, 0.3), np.max(m.reward + 0.8 * m.transition @ v, axis=1))

    def test_deterministic_policy_ignores_alpha(self, mdp5):
        pi = TabularPolicy.deterministic([0, 1, 2, 0, 1], 3)
        v = np.arange(5.0)
        assert np.array_equal(v_backup(v, mdp5, 0.7, pi), v_backup(v, mdp5, 0.0, pi))

    @given(mdp_cases, st.sampled_from([0.0, 0.1, 1.0]), st.integers(0, 10**6))
    def test_contraction(self, case, alpha, seed):
        mdp, pi = case
        rng = np.random.default_rng(seed)
        v1, v2 = rng.uniform(-10, 10, size=(2, mdp.n_states))
        d = mdp.discount * np.max(np.abs(v1 - v2))
        ref = TabularPolicy.random(mdp.n_states, mdp.n_actions, rng)
        assert np.max(np.abs(v_backup(v1, mdp, alpha, pi) - v_backup(v2, mdp, alpha, pi))) <= d + 1e-9
        assert np.max(np.abs(v_backup(v1, mdp, alpha, reference=ref)
                             - v_backup(v2, mdp, alpha, reference=ref))) <= d + 1e-9


class TestValueIteration:
    def test_single_state(self):
        v, pi = value_iteration(single_state(), 0.0, 1e-10)
        assert v[0] == pytest.approx(10.0, abs=1e-9)

    def test_two_state_analytic(self):
        # state 0: stay (r=0) or move to 1 (r=0); state 1: stay with r=1
        P = np.zeros((2, 2, 2))
        P[0, 0, 0] = P[0, 1, 1] = P[1, :, 1] = 1.0
        R = np.array([[0.0, 0.0], [1.0, 1.0]])
        v, pi = value_iteration(TabularMDP(P, R, 0.9), 0.0, 1e-12)
        assert np.allclose(v, [9.0, 10.0], atol=1e-11)
        assert pi.greedy_actions()[0] == 1

    @given(st.integers(0, 10**6), st.sampled_from([0.5, 0.9]))
    def test_matches_classical_oracle(self, seed, gamma):
        m = random_mdp(seed, 6, 3, gamma)
        v, _ = value_iteration(m, 0.0, 1e-11)
        assert np.max(np.abs(v - classical_vi(m, 600))) <= 1e-9

    def test_diagonal_optimal_path(self):
        m = to_tabular("diagonal", gamma=0.99)
        v, pi = value_iteration(m, 0.0, 1e-10)
        # nine moves down to the 5.0 corner, paid on the ninth
        assert v[0] == pytest.approx(5.0 * 0.99**8, abs=1e-9)
        s = 0
        for _ in range(9):
            assert pi.greedy_actions()[s] == 1
            s = int(np.argmax(m.transition[s, 1]))
        assert s == 100

    def test_cap_raises(self):
        with pytest.raises(ConvergenceError):
            soft_q_iteration(random_mdp(0, 3, 2, 0.99), 0.0, tol=1e-12, max_iter=3)

    def test_estimator(self):
        m = random_mdp(4, 4, 3, 0.9)
        est = SoftValueIteration(alpha=0.5).fit(m)
        assert est.get_params()["alpha"] == 0.5
        assert est.predict([0, 1]).shape == (2,)
        assert np.allclose(est.predict_proba(np.arange(4)).sum(axis=1), 1.0)
        with pytest.raises(ValueError):
            est.predict([7])


class TestSoftImprovement:
    def test_constant_row(self):
        assert np.allclose(soft_improvement_step(np.full((2, 3), 4.0), 0.5).probs, 1 / 3)

    def test_log_three(self):
        alpha = 0.7
        p = soft_improvement_step(np.array([[0.0, alpha * np.log(3)]]), alpha).probs
        assert np.allclose(p, [[0.25, 0.75]], atol=1e-12)

    def test_small_alpha_concentrates(self):
        p = soft_improvement_step(np.array([[0.0, 0.1, -0.3]]), 1e-3).probs
        assert p[0, 1] >= 0.999

    def test_alpha_zero_rejected(self):
        with pytest.raises(ValueError):
            soft_improvement_step(np.zeros((1, 2)), 0.0)

    def test_large_values_do_not_overflow(self):
        p = soft_improvement_step(np.array([[1e5, 1e5 + 1.0]]), 0.01).probs
        assert np.all(np.isfinite(p)) and abs(p.sum() - 1) <= 1e-12

    @given(st.integers(0, 10**6), st.floats(0.01, 5))
    def test_simplex_and_shift_invariance(self, seed, alpha):
        rng = np.random.default_rng(seed)
        q = rng.normal(size=(4, 3)) * 5
        p = soft_improvement_step(q, alpha).probs
        assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)
        shifted = soft_improvement_step(q + rng.normal(size=(4, 1)) * 10, alpha).probs
        assert np.allclose(p, shifted, atol=1e-9)

    def test_is_kl_minimiser(self):
        rng = np.random.default_rng(3)
        q, alpha = rng.normal(size=(1, 4)), 0.5
        target = np.exp(q / alpha) / np.exp(q / alpha).sum()
        best = soft_improvement_step(q, alpha).probs
        for _ in range(200):
            other = rng.dirichlet(np.ones(4))[None]
            assert kl_divergence(best, target)[0] <= kl_divergence(other, target)[0] + 1e-12


class TestHelpers:
    def test_kl_conventions(self):
        assert kl_divergence(np.array([0.0, 1.0]), np.array([0.5, 0.5])) == pytest.approx(np.log(2))
        assert kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0])) == np.inf

    def test_argmax_sets_report_ties(self):
        assert argmax_sets(np.array([[1.0, 1.0 + 1e-12, 0.0], [0.0, 2.0, 1.0]])) == [(0, 1), (1,)]

    def test_soft_state_value_limits(self):
        q = np.array([[1.0, 2.0]])
        assert soft_state_value(q, 0.0)[0] == 2.0
        assert soft_state_value(q, 1.0)[0] == pytest.approx(np.log(np.e + np.e**2))

    def test_greedy_first_maximiser(self):
        assert greedy_policy(np.array([[3.0, 3.0]])).greedy_actions().tolist() == [0]

    def test_iterate_to_fixed_point(self):
        q, res = iterate_to_fixed_point(lambda x: 0.5 * x + 1.0, np.zeros(1), 1e-12)
        assert res <= 1e-12 and q[0] == pytest.approx(2.0)
