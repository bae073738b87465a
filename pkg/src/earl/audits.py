"""Numerical certificates for the operator and policy-improvement results.

Every audit evaluates its quantities exactly on a tabular MDP (direct solves
or iteration to a tight residual) and returns :class:`BoundReport` records.
Random instances come from :func:`corpus_mdp`, which is keyed by an integer
seed so that every record can be regenerated on its own.
"""

from __future__ import annotations

import numpy as np

from .envs import random_mdp
from .mdp import (
    TabularMDP,
    TabularPolicy,
    advantage,
    as_probs,
    discounted_return,
    entropy_rows,
    exact_policy_eval,
    policy_transition,
    state_visitation,
)
from .operators import (
    BackupKind,
    bootstrap_backup,
    iterate_to_fixed_point,
    kl_divergence,
    soft_backup,
    soft_improvement_step,
    soft_q_iteration,
    v_backup,
    value_iteration,
)
from .reports import BoundReport
from .validation import check_alpha, check_random_state

DISCOUNTS = (0.5, 0.9, 0.99)


def corpus_mdp(seed, max_states=20, max_actions=5, discounts=DISCOUNTS) -> TabularMDP:
    """Random MDP with 2..max_states states, 2..max_actions actions and a discount from ``discounts``."""
    rng = np.random.default_rng([int(seed), 2024])
    n_states = int(rng.integers(2, max_states + 1))
    n_actions = int(rng.integers(2, max_actions + 1))
    gamma = float(discounts[int(rng.integers(len(discounts)))])
    return random_mdp(seed, n_states, n_actions, gamma)


def random_policy(mdp, rng, concentration=1.0) -> TabularPolicy:
    return TabularPolicy.random(mdp.n_states, mdp.n_actions, check_random_state(rng), concentration)


def nearby_policy(policy, rng, zeta_max=0.05) -> TabularPolicy:
    """Perturb the logits of ``policy`` until max_s KL(old || new) <= a target drawn from (0, zeta_max]."""
    rng = check_random_state(rng)
    probs = as_probs(policy)
    logits = np.log(np.clip(probs, 1e-300, None))
    noise = rng.normal(size=probs.shape)
    target = zeta_max * (1.0 - rng.random())
    scale = 1.0
    for _ in range(200):
        z = logits + scale * noise
        new = np.exp(z - z.max(axis=1, keepdims=True))
        new /= new.sum(axis=1, keepdims=True)
        if np.max(kl_divergence(probs, new)) <= target:
            return TabularPolicy(new)
        scale *= 0.5
    return TabularPolicy(probs)


def _instance(mdp, alpha, **extra):
    out = {"mdp": mdp.name, "n_states": mdp.n_states, "n_actions": mdp.n_actions,
           "gamma": mdp.discount, "alpha": alpha}
    out.update(extra)
    return out


def contraction_audit(mdp: TabularMDP, alpha, trials=10, seed=None):
    """gamma-contraction of all four backups on random pairs with entries in [-10, 10].

    T_alpha^pi uses a fresh random policy per trial and T_alpha^* a fresh
    random reference policy for its entropy bonus. The first trial also
    records the constant-shift witness ``V2 = V1 + c``, where the policy
    backup moves by exactly ``gamma |c|``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    alpha = check_alpha(alpha)
    rng = check_random_state(seed)
    gamma = mdp.discount
    S, A = mdp.n_states, mdp.n_actions
    reports = []
    for trial in range(trials):
        policy = random_policy(mdp, rng)
        reference = random_policy(mdp, rng)
        v1, v2 = rng.uniform(-10, 10, size=(2, S))
        q1, q2 = rng.uniform(-10, 10, size=(2, S, A))
        pairs = {
            BackupKind.V_POLICY: (v_backup(v1, mdp, alpha, policy), v_backup(v2, mdp, alpha, policy),
                                  np.max(np.abs(v1 - v2))),
            BackupKind.V_OPTIMAL: (v_backup(v1, mdp, alpha, reference=reference),
                                   v_backup(v2, mdp, alpha, reference=reference), np.max(np.abs(v1 - v2))),
            BackupKind.SOFT_Q: (soft_backup(q1, mdp, policy, alpha), soft_backup(q2, mdp, policy, alpha),
                                np.max(np.abs(q1 - q2))),
            BackupKind.BOOTSTRAP_Q: (bootstrap_backup(q1, mdp, policy, alpha),
                                     bootstrap_backup(q2, mdp, policy, alpha), np.max(np.abs(q1 - q2))),
        }
        for kind, (t1, t2, dist) in pairs.items():
            reports.append(BoundReport(
                f"contraction/{kind.value}", np.max(np.abs(t1 - t2)), gamma * dist, "<=", 1e-9,
                instance=_instance(mdp, alpha, trial=trial),
            ))
        if trial == 0:
            c = float(rng.uniform(-10, 10))
            shifted = v_backup(v1 + c, mdp, alpha, policy) - v_backup(v1, mdp, alpha, policy)
            reports.append(BoundReport(
                "contraction/shift-witness", np.max(np.abs(shifted)), gamma * abs(c), "==", 1e-9,
                instance=_instance(mdp, alpha, trial=trial), details={"shift": c},
            ))
    return reports


def conjugacy_audit(mdp: TabularMDP, policy, alpha, tol=1e-12, seed=None) -> BoundReport:
    """Soft and bootstrap Q-operators: one application and the fixed points.

    ``lhs`` is the sup distance between the two fixed points, each obtained
    by iterating its own operator from zero down to a ``tol`` residual. The
    single-application check uses a random Q table and must agree to 1e-12.
    """
    alpha = check_alpha(alpha)
    policy = policy if isinstance(policy, TabularPolicy) else TabularPolicy(policy)
    rng = check_random_state(seed)
    q = rng.uniform(-10, 10, size=(mdp.n_states, mdp.n_actions))
    single = float(np.max(np.abs(soft_backup(q, mdp, policy, alpha) - bootstrap_backup(q, mdp, policy, alpha))))
    zeros = np.zeros_like(q)
    q_soft, res_soft = iterate_to_fixed_point(lambda x: soft_backup(x, mdp, policy, alpha), zeros, tol)
    q_boot, res_boot = iterate_to_fixed_point(lambda x: bootstrap_backup(x, mdp, policy, alpha), zeros, tol)
    return BoundReport(
        "conjugacy", np.max(np.abs(q_soft - q_boot)), 0.0, "==", 1e-8,
        instance=_instance(mdp, alpha),
        details={"single_application": single, "residual_soft": res_soft, "residual_bootstrap": res_boot},
        conditions={"single_application": single <= 1e-12},
    )


def optimal_error_bound_audit(mdp: TabularMDP, alpha, tol=1e-11, v_star=None) -> BoundReport:
    """||V~* - V*|| against gamma/(1 - gamma) * alpha * log|A|.

    Both values come from :func:`value_iteration` to within ``tol``; pass a
    precomputed ``v_star`` to reuse the alpha = 0 solution across alphas.
    """
    alpha = check_alpha(alpha)
    gamma = mdp.discount
    v_tilde, _ = value_iteration(mdp, alpha, tol)
    if v_star is None:
        v_star, _ = value_iteration(mdp, 0.0, tol)
    bound = gamma / (1.0 - gamma) * alpha * mdp.entropy_bound
    return BoundReport(
        "optimal-error-bound", np.max(np.abs(v_tilde - v_star)), bound, "<=", 1e-9,
        instance=_instance(mdp, alpha),
    )


def single_state_mdp(n_actions, gamma=0.9) -> TabularMDP:
    """One state, ``n_actions`` identical zero-reward self-loops.

    V* = 0 and the augmented optimum keeps the uniform policy forever, so
    ||V~* - V*|| = gamma alpha log n / (1 - gamma): the error bound is tight.
    """
    P = np.ones((1, n_actions, 1))
    return TabularMDP(P, np.zeros((1, n_actions)), gamma, name=f"single-state-{n_actions}")


def soft_policy_iteration_audit(mdp: TabularMDP, alpha, iterations=30, seed=None, start=None):
    """Exact evaluation alternated with the softmax projection.

    One ``>=`` report per round for ``min(Q_{k+1} - Q_k)`` (slack -1e-10),
    then ``soft-pi/convergence`` (last change <= 1e-8) and ``soft-pi/fixed-point``
    (distance to the soft Q-iteration fixed point <= 1e-6).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    alpha = check_alpha(alpha, strictly_positive=True)
    rng = check_random_state(seed)
    policy = random_policy(mdp, rng) if start is None else start
    q = exact_policy_eval(mdp, policy, alpha)
    reports = []
    change = np.inf
    for k in range(iterations):
        policy = soft_improvement_step(q, alpha)
        q_next = exact_policy_eval(mdp, policy, alpha)
        change = float(np.max(np.abs(q_next - q)))
        reports.append(BoundReport(
            "soft-pi/monotone", np.min(q_next - q), 0.0, ">=", 1e-10,
            instance=_instance(mdp, alpha, round=k), details={"change": change},
        ))
        q = q_next
    q_fixed, _ = soft_q_iteration(mdp, alpha, tol=1e-11)
    reports.append(BoundReport("soft-pi/convergence", change, 1e-8, "<=", 0.0,
                               instance=_instance(mdp, alpha, round=iterations)))
    reports.append(BoundReport("soft-pi/fixed-point", np.max(np.abs(q - q_fixed)), 1e-6, "<=", 0.0,
                               instance=_instance(mdp, alpha, round=iterations)))
    return reports


def _entropy_gain(mdp, new_probs, old_probs, alpha):
    """gamma alpha E_{s'}[H_new(s') - H_old(s')] for every (s, a)."""
    dH = entropy_rows(new_probs) - entropy_rows(old_probs)
    return mdp.discount * alpha * (mdp.transition @ dH)


def perf_diff_audit(mdp: TabularMDP, pi_old, pi_new, alpha) -> BoundReport:
    """Performance-difference identity, augmented form (with the classical one as a condition).

    eta(new) - eta(old) = sum_s rho_new(s) sum_a pi_new(a|s) [A_old(s, a) + gamma alpha E_{s'}(H_new - H_old)(s')]
    with unnormalised visitation rho_new and advantages of the shaped Q of pi_old.
    """
    alpha = check_alpha(alpha)
    old, new = as_probs(pi_old, mdp), as_probs(pi_new, mdp)
    rho_new = state_visitation(mdp, new)

    def sides(a):
        lhs = discounted_return(mdp, new, a) - discounted_return(mdp, old, a)
        adv = advantage(exact_policy_eval(mdp, old, a), old)
        rhs = rho_new @ np.sum(new * (adv + _entropy_gain(mdp, new, old, a)), axis=1)
        return lhs, rhs

    lhs, rhs = sides(alpha)
    c_lhs, c_rhs = (lhs, rhs) if alpha == 0.0 else sides(0.0)
    return BoundReport(
        "perf-diff", lhs, rhs, "==", 1e-8,
        instance=_instance(mdp, alpha),
        details={"classical_lhs": c_lhs, "classical_rhs": c_rhs},
        conditions={"classical": abs(c_lhs - c_rhs) <= 1e-8},
    )


def surrogate_bound_audit(mdp: TabularMDP, pi_old, pi_new, alpha) -> BoundReport:
    """Lower bound on eta(pi_new) from the local surrogate.

    The surrogate is
    ``L = eta(old) + sum_s rho_old(s) sum_a pi_new [A_old + gamma alpha E_{s'}(H_new - H_old)]``,
    which equals eta(old) when the policies coincide. The asserted bound uses
    the linear penalty ``2 eps gamma zeta / (1 - gamma)^2``; the quadratic
    ``4 eps gamma zeta^2 / (1 - gamma)^2`` form is reported as a diagnostic.
    A policy pair with infinite KL is flagged diagnostic and not asserted.
    """
    alpha = check_alpha(alpha)
    old, new = as_probs(pi_old, mdp), as_probs(pi_new, mdp)
    gamma = mdp.discount
    eta_old = discounted_return(mdp, old, alpha)
    eta_new = discounted_return(mdp, new, alpha)
    adv = advantage(exact_policy_eval(mdp, old, alpha), old)
    gain = np.sum(new * (adv + _entropy_gain(mdp, new, old, alpha)), axis=1)
    surrogate = eta_old + state_visitation(mdp, old) @ gain
    surrogate_new_rho = eta_old + state_visitation(mdp, new) @ gain
    eps = float(np.max(np.abs(adv)))
    zeta = float(np.max(kl_divergence(old, new)))
    scale = eps * gamma / (1.0 - gamma) ** 2
    finite = np.isfinite(zeta)
    linear_rhs = surrogate - 2.0 * scale * zeta if finite else -np.inf
    quad_rhs = surrogate - 4.0 * scale * zeta**2 if finite else -np.inf
    return BoundReport(
        "surrogate-bound", eta_new, linear_rhs, ">=", 1e-10,
        instance=_instance(mdp, alpha),
        details={
            "surrogate": surrogate,
            "surrogate_new_visitation": surrogate_new_rho,
            "visitation_gap": abs(surrogate - surrogate_new_rho),
            "epsilon": eps,
            "zeta": zeta,
            "quadratic_rhs": quad_rhs,
            "quadratic_violated": int(eta_new < quad_rhs - 1e-10),
        },
        diagnostic=not finite,
    )


def soft_objective_audit(mdp: TabularMDP, policy, alpha) -> BoundReport:
    """Maximum-entropy objective J against the shaped objective eta.

    J counts the entropy of every visited state including s0; eta starts at
    s1. ``lhs = J - eta`` must equal ``alpha E_{rho0}[H(s0)]``, and eta must
    equal the rho0/pi average of the soft operator's fixed point.
    """
    alpha = check_alpha(alpha)
    policy = policy if isinstance(policy, TabularPolicy) else TabularPolicy(policy)
    probs = policy.probs
    H = entropy_rows(probs)
    rewards = np.sum(probs * mdp.reward, axis=1) + alpha * H
    j = float(mdp.initial_dist @ np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * policy_transition(mdp, probs),
                                                 rewards))
    eta = discounted_return(mdp, probs, alpha)
    q_soft, residual = iterate_to_fixed_point(lambda q: soft_backup(q, mdp, policy, alpha),
                                              np.zeros(probs.shape), 1e-12)
    soft = float(mdp.initial_dist @ np.sum(probs * q_soft, axis=1))
    return BoundReport(
        "soft-objective", j - eta, alpha * float(mdp.initial_dist @ H), "==", 1e-8,
        instance=_instance(mdp, alpha),
        details={"J": j, "eta": eta, "soft_fixed_point": soft, "soft_residual": residual},
        conditions={"eta_equals_soft": abs(eta - soft) <= 1e-8},
    )


__all__ = [
    "conjugacy_audit",
    "contraction_audit",
    "corpus_mdp",
    "nearby_policy",
    "optimal_error_bound_audit",
    "perf_diff_audit",
    "random_policy",
    "single_state_mdp",
    "soft_objective_audit",
    "soft_policy_iteration_audit",
    "surrogate_bound_audit",
]
