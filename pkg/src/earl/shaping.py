"""Entropy reward shaping and the shaping-theory audits.

The entropy bonus moves the policy entropy of the successor state into the
reward channel, ``r_hat(s, a) = r(s, a) + gamma * alpha * E_{s'}[H(s')]``.
Because the bonus is a function of ``(s, a)`` alone, the shaped return
telescopes like an ordinary reward. The soft backup, by contrast, leaves the
first step's entropy out of its Q-values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMDP, as_probs, entropy_bonus, entropy_rows, exact_policy_eval
from .operators import argmax_sets, bootstrap_backup, soft_backup, soft_q_iteration
from .reports import AuditReport
from .validation import check_alpha


@dataclass(frozen=True)
class ShapedReward:
    base: np.ndarray
    bonus: np.ndarray
    alpha: float

    @property
    def shaped(self):
        return self.base + self.bonus


@dataclass(frozen=True)
class PotentialFunction:
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.ndim != 1 or not np.all(np.isfinite(phi)):
            raise ValueError("potential must be a finite vector over states")
        object.__setattr__(self, "phi", phi)

    def shaping_table(self, mdp: TabularMDP):
        """E_{s'}[gamma Phi(s') - Phi(s)] for every (s, a)."""
        if self.phi.shape != (mdp.n_states,):
            raise ValueError("potential length must equal n_states")
        return mdp.discount * (mdp.transition @ self.phi) - self.phi[:, None]


def shape_rewards(mdp: TabularMDP, policy, alpha) -> ShapedReward:
    alpha = check_alpha(alpha)
    bonus = entropy_bonus(mdp, policy, alpha)
    return ShapedReward(mdp.reward.copy(), bonus, alpha)


def trajectory_shaped_reward(r_t, entropy_next, gamma, alpha) -> float:
    """Sample-path shaped reward r_t + gamma * alpha * H(s_{t+1})."""
    return r_t + gamma * alpha * entropy_next


def _unroll(mdp, probs, reward_table, horizon):
    """sum_{t < horizon} gamma^t (P Pi)^t reward_table."""
    term = np.array(reward_table, dtype=np.float64)
    total = np.zeros_like(term)
    for _ in range(horizon):
        total += term
        term = mdp.discount * (mdp.transition @ np.sum(probs * term, axis=1))
    return total


def absorbing_audit(mdp: TabularMDP, policy, alpha, horizon=200) -> AuditReport:
    """Numerical view of the absorbing property.

    Bootstrap side: the truncated expected shaped return reproduces the exact
    Q^pi up to the geometric tail ``gamma^horizon * (C_r + gamma alpha C_H)/(1-gamma)``.
    Soft side: the soft operator's Q falls short of the always-absorbing
    reformulation ``r + alpha H(s)`` of the maximum-entropy return by exactly
    ``alpha H(s)``, the entropy of the very first state.
    """
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    alpha = check_alpha(alpha)
    probs = as_probs(policy, mdp)
    S, A = probs.shape
    gamma = mdp.discount

    q_exact = exact_policy_eval(mdp, probs, alpha)
    shaped = shape_rewards(mdp, probs, alpha).shaped
    q_trunc = _unroll(mdp, probs, shaped, horizon)
    tail_bound = gamma**horizon * mdp.value_bound(alpha)
    bootstrap_residual = float(np.max(np.abs(q_trunc - q_exact)))

    q_soft = np.zeros((S, A))
    q_boot = np.zeros((S, A))
    for _ in range(horizon):
        q_soft = soft_backup(q_soft, mdp, probs, alpha)
        q_boot = bootstrap_backup(q_boot, mdp, probs, alpha)
    soft_vs_bootstrap = float(np.max(np.abs(q_soft - q_boot)))

    H = entropy_rows(probs)
    absorbing = np.broadcast_to((mdp.reward + alpha * H[:, None]), (S, A))
    q_absorbing = _solve_q(mdp, probs, absorbing)
    # alpha * sum_a -pi log pi, summed term by term
    first_step = np.zeros(S)
    for s in range(S):
        for a in range(A):
            p = probs[s, a]
            if p > 0.0:
                first_step[s] -= alpha * p * np.log(p)
    gap = q_absorbing - q_exact
    first_step_residual = float(np.max(np.abs(gap - first_step[:, None])))
    unrolled_gap = _unroll(mdp, probs, absorbing, horizon) - q_soft
    unrolled_residual = float(np.max(np.abs(unrolled_gap - first_step[:, None])))

    values = {
        "alpha": alpha,
        "horizon": horizon,
        "bootstrap_residual": bootstrap_residual,
        "tail_bound": tail_bound,
        "soft_vs_bootstrap_unroll": soft_vs_bootstrap,
        "first_step_gap_max": float(np.max(np.abs(gap))),
        "first_step_residual": first_step_residual,
        "unrolled_first_step_residual": unrolled_residual,
    }
    checks = {
        "bootstrap_truncation": bootstrap_residual <= tail_bound + 1e-12,
        "soft_equals_bootstrap": soft_vs_bootstrap <= 1e-9 * max(1.0, float(np.max(np.abs(q_exact)))),
        "soft_misses_first_entropy": first_step_residual <= 1e-9,
        # the unrolled gap also carries a tail of at most gamma^horizon alpha C_H
        "unrolled_first_entropy": unrolled_residual <= gamma**horizon * alpha * mdp.entropy_bound + 1e-9,
    }
    return AuditReport("absorbing", values, checks)


def _solve_q(mdp, probs, reward_table):
    S, A = probs.shape
    P = mdp.transition.reshape(S * A, S)
    Pi = np.zeros((S, S * A))
    Pi[np.repeat(np.arange(S), A), np.arange(S * A)] = probs.reshape(-1)
    return np.linalg.solve(np.eye(S * A) - mdp.discount * P @ Pi, np.reshape(reward_table, -1)).reshape(S, A)


def potential_shaped_mdp(mdp: TabularMDP, phi) -> TabularMDP:
    phi = phi if isinstance(phi, PotentialFunction) else PotentialFunction(phi)
    shaped = mdp.reward + phi.shaping_table(mdp)
    return TabularMDP(mdp.transition, shaped, mdp.discount, mdp.initial_dist, name=f"{mdp.name}+phi")


def optimal_q(mdp: TabularMDP, alpha=0.0, tol=1e-11):
    return soft_q_iteration(mdp, alpha, tol=tol)[0]


def potential_shaping_audit(mdp: TabularMDP, phi, alpha=None, tie_tol=1e-9) -> AuditReport:
    """Policy invariance of potential-based shaping, contrasted with entropy shaping.

    The greedy argmax sets of Q* must coincide for the original and the
    potential-shaped MDP, and the shaped Q* must equal Q* - Phi(s). When
    ``alpha`` is given, the argmax sets of the entropy-augmented optimum are
    reported too; those are allowed to differ.
    """
    phi = phi if isinstance(phi, PotentialFunction) else PotentialFunction(phi)
    q_star = optimal_q(mdp)
    q_shaped = optimal_q(potential_shaped_mdp(mdp, phi))
    sets_orig = argmax_sets(q_star, tie_tol)
    sets_shaped = argmax_sets(q_shaped, tie_tol)
    offset_error = float(np.max(np.abs(q_shaped - (q_star - phi.phi[:, None]))))
    ties = sum(len(s) > 1 for s in sets_orig)
    values = {
        "n_states": mdp.n_states,
        "offset_error": offset_error,
        "tied_states": ties,
        "potential_max_abs": float(np.max(np.abs(phi.phi))) if phi.phi.size else 0.0,
    }
    checks = {
        "argmax_sets_equal": sets_orig == sets_shaped,
        "offset_matches_potential": offset_error <= 1e-8 * max(1.0, float(np.max(np.abs(q_star)))),
    }
    if alpha is not None:
        q_entropy = optimal_q(mdp, check_alpha(alpha))
        sets_entropy = argmax_sets(q_entropy, tie_tol)
        values["entropy_alpha"] = float(alpha)
        values["entropy_changes_argmax"] = int(sets_entropy != sets_orig)
    return AuditReport("potential_shaping", values, checks)


def entropy_witness_mdp(gamma=0.9) -> TabularMDP:
    """Two-state MDP where entropy shaping moves the optimal action at state 0.

    Found by exhaustive search over deterministic two-state, two-action MDPs
    with rewards in {-1, -0.5, 0, 0.5, 1}, keeping the widest margin. In state 0
    action 0 stays and action 1 moves; state 1 is the mirror image. Without shaping the
    optimal first move from state 0 is to pay 0.5 and reach the rewarding
    self-loop of state 1 (margin 0.35); at alpha = 1 the entropy earned by
    mixing between staying and leaving makes staying better (margin 0.41).
    """
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 1, 1] = 1.0
    P[0, 1, 1] = P[1, 0, 0] = 1.0
    R = np.array([[0.5, -0.5], [-1.0, 1.0]])
    return TabularMDP(P, R, gamma, np.array([1.0, 0.0]), name="entropy-witness")


__all__ = [
    "PotentialFunction",
    "ShapedReward",
    "absorbing_audit",
    "entropy_witness_mdp",
    "potential_shaped_mdp",
    "potential_shaping_audit",
    "shape_rewards",
    "trajectory_shaped_reward",
]
