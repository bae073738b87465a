import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mdp_cases
from earl.envs import random_mdp
from earl.mdp import TabularPolicy, entropy_rows, exact_policy_eval
from earl.operators import argmax_sets
from earl.shaping import (
    PotentialFunction,
    absorbing_audit,
    entropy_witness_mdp,
    optimal_q,
    potential_shaped_mdp,
    potential_shaping_audit,
    shape_rewards,
    trajectory_shaped_reward,
)


def test_uniform_policy_bonus():
    m = random_mdp(0, 4, 3, 0.9)
    s = shape_rewards(m, TabularPolicy.uniform(4, 3), 0.2)
    assert np.allclose(s.bonus, 0.9 * 0.2 * np.log(3), atol=1e-14)
    assert np.allclose(s.shaped, m.reward + s.bonus)


def test_deterministic_policy_has_no_bonus(mdp5):
    pi = TabularPolicy.deterministic([0, 0, 1, 2, 1], 3)
    assert np.all(shape_rewards(mdp5, pi, 1.0).bonus == 0.0)


def test_alpha_zero_has_no_bonus(mdp5, policy5):
    assert np.all(shape_rewards(mdp5, policy5, 0.0).bonus == 0.0)


def test_sample_path_reward():
    assert trajectory_shaped_reward(1.0, np.log(2), 0.9, 0.5) == pytest.approx(1.0 + 0.45 * np.log(2))


def test_negative_alpha_rejected(mdp5, policy5):
    with pytest.raises(ValueError):
        shape_rewards(mdp5, policy5, -0.1)


@given(mdp_cases, st.sampled_from([0.0, 0.3, 1.0]))
def test_absorbing_audit(case, alpha):
    mdp, pi = case
    report = absorbing_audit(mdp, pi, alpha, horizon=60)
    assert report.passed, report.to_text()


def test_soft_gap_is_first_state_entropy(mdp5, policy5):
    report = absorbing_audit(mdp5, policy5, 0.5)
    assert report.values["first_step_gap_max"] == pytest.approx(0.5 * np.max(entropy_rows(policy5.probs)), rel=1e-9)


def test_shaped_q_is_expected_shaped_return(mdp5, policy5):
    # Monte Carlo-free check: unroll the expectation by hand for 400 steps
    alpha, gamma = 0.3, 0.9
    shaped = shape_rewards(mdp5, policy5, alpha).shaped
    P = mdp5.transition
    total = np.zeros((5, 3))
    dist = np.zeros((5, 3, 5, 3))
    for s in range(5):
        dist[s, :, :, :] = 0
        for a in range(3):
            dist[s, a, s, a] = 1.0
    for t in range(400):
        total += gamma**t * np.einsum("ijkl,kl->ij", dist, shaped)
        state_next = np.einsum("ijkl,klm->ijm", dist, P)
        dist = state_next[..., None] * policy5.probs[None, None]
    assert np.allclose(total, exact_policy_eval(mdp5, policy5, alpha), atol=1e-10)


class TestPotentialShaping:
    def test_potential_validation(self):
        with pytest.raises(ValueError):
            PotentialFunction(np.array([[1.0]]))
        with pytest.raises(ValueError):
            PotentialFunction([np.nan])

    def test_shaped_rewards(self):
        m = random_mdp(1, 3, 2, 0.9)
        phi = np.array([1.0, -2.0, 0.5])
        shaped = potential_shaped_mdp(m, phi)
        expected = m.reward + 0.9 * m.transition @ phi - phi[:, None]
        assert np.allclose(shaped.reward, expected)

    @given(st.integers(0, 10**6), st.sampled_from([0.5, 0.9]))
    def test_policy_invariance(self, seed, gamma):
        m = random_mdp(seed, 5, 3, gamma)
        phi = np.random.default_rng(seed).uniform(-5, 5, size=5)
        report = potential_shaping_audit(m, phi)
        assert report.passed, report.to_text()

    def test_witness_entropy_moves_argmax(self):
        m = entropy_witness_mdp()
        report = potential_shaping_audit(m, [0.3, -1.0], alpha=1.0)
        assert report.passed
        assert report.values["entropy_changes_argmax"] == 1

    def test_witness_values(self):
        q0 = optimal_q(entropy_witness_mdp())
        q1 = optimal_q(entropy_witness_mdp(), 1.0)
        assert np.allclose(q0, [[8.15, 8.5], [6.65, 10.0]], atol=1e-8)
        assert argmax_sets(q0)[0] == (1,)
        assert argmax_sets(q1)[0] == (0,)
        assert q1[0, 0] - q1[0, 1] > 0.4
