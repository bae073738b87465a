"""Generalized advantage estimation over entropy-shaped rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMDP, as_probs, entropy_rows, policy_value
from .reports import AuditReport
from .validation import check_alpha, check_discount, check_random_state


@dataclass(frozen=True)
class Transition:
    """One step of experience.

    ``reward`` is the raw environment reward; ``entropy_next`` is the policy
    entropy at the successor state (zero when the episode terminated there).
    ``done`` marks true termination, ``truncated`` a time-limit cut after
    which the successor value is still bootstrapped.
    """

    state: object
    action: int
    reward: float
    entropy_next: float
    value: float
    value_next: float
    log_prob: float
    done: bool = False
    truncated: bool = False
    next_state: object = None

    def shaped_reward(self, gamma, alpha) -> float:
        return self.reward + gamma * alpha * self.entropy_next


@dataclass(frozen=True)
class GaeConfig:
    gamma: float = 0.99
    lam: float = 0.95
    alpha: float = 0.0

    def __post_init__(self):
        check_discount(self.gamma)
        check_alpha(self.alpha)
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam!r}")


def gae_from_arrays(rewards, values, values_next, dones, truncated, gamma, lam):
    """Backward GAE recursion on time-major arrays.

    Arrays have shape ``(T,)`` or ``(T, n_envs)``; ``rewards`` are already
    shaped. ``dones`` zero the bootstrap value; both ``dones`` and
    ``truncated`` stop the accumulation across episode boundaries.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(dones, dtype=np.float64)
    cont = nonterminal * (1.0 - np.asarray(truncated, dtype=np.float64))
    deltas = rewards + gamma * nonterminal * np.asarray(values_next, dtype=np.float64) - np.asarray(values, dtype=np.float64)
    adv = np.zeros_like(deltas)
    running = np.zeros_like(deltas[0]) if deltas.ndim > 1 else 0.0
    for t in range(len(deltas) - 1, -1, -1):
        running = deltas[t] + gamma * lam * cont[t] * running
        adv[t] = running
    return adv


def _columns(trajectory, config):
    if not trajectory:
        raise ValueError("trajectory must not be empty")
    g, a = config.gamma, config.alpha
    rewards = np.array([tr.shaped_reward(g, a) for tr in trajectory])
    values = np.array([tr.value for tr in trajectory])
    values_next = np.array([tr.value_next for tr in trajectory])
    dones = np.array([tr.done for tr in trajectory], dtype=float)
    truncs = np.array([tr.truncated for tr in trajectory], dtype=float)
    return rewards, values, values_next, dones, truncs


def compute_gae(trajectory, config: GaeConfig):
    """One advantage per transition, A_t = delta_t + gamma lam (1 - done_t) A_{t+1}."""
    rewards, values, values_next, dones, truncs = _columns(trajectory, config)
    return gae_from_arrays(rewards, values, values_next, dones, truncs, config.gamma, config.lam)


def augment_advantage(advantage, entropy_next_current_policy, gamma, alpha):
    """A_t + gamma * alpha * H^{pi_theta}(s_{t+1})."""
    return advantage + gamma * alpha * entropy_next_current_policy


def exponential_average(nstep):
    """(1 - lam) sum_n lam^(n-1) A^n on a finite list, the last term taking the tail mass.

    ``nstep`` is a list of (n-step advantage) values for n = 1..N; returns a
    function of ``lam``.
    """
    nstep = np.asarray(nstep, dtype=np.float64)

    def average(lam):
        N = len(nstep)
        if lam == 1.0:
            return float(nstep[-1])
        weights = (1.0 - lam) * lam ** np.arange(N)
        weights[-1] = lam ** (N - 1)
        return float(weights @ nstep)

    return average


def sample_tabular_trajectory(mdp: TabularMDP, policy, alpha, length, seed=None, start=None):
    """Roll ``policy`` for ``length`` steps, attaching exact bootstrap values.

    The final transition is marked ``truncated`` so estimators bootstrap
    from its successor value.
    """
    rng = check_random_state(seed)
    probs = as_probs(policy, mdp)
    H = entropy_rows(probs)
    V = policy_value(mdp, probs, alpha)
    s = rng.choice(mdp.n_states, p=mdp.initial_dist) if start is None else start
    out = []
    for t in range(length):
        a = rng.choice(mdp.n_actions, p=probs[s])
        s_next = rng.choice(mdp.n_states, p=mdp.transition[s, a])
        out.append(Transition(
            state=int(s), action=int(a), reward=float(mdp.reward[s, a]),
            entropy_next=float(H[s_next]), value=float(V[s]), value_next=float(V[s_next]),
            log_prob=float(np.log(probs[s, a])), done=False, truncated=(t == length - 1),
            next_state=int(s_next),
        ))
        s = s_next
    return out


def _nstep_bootstrap(traj, t, n, gamma, alpha):
    total = sum(gamma**l * traj[t + l].shaped_reward(gamma, alpha) for l in range(n))
    return total + gamma**n * traj[t + n - 1].value_next - traj[t].value


def incompatibility_demo(mdp: TabularMDP, policy, trajectory, config: GaeConfig) -> AuditReport:
    """Compare the GAE telescoping identity for bootstrap and soft n-step targets.

    For every start ``t`` the exponential average of n-step advantages is
    compared with ``sum_l (gamma lam)^l delta_{t+l}``.

    * Bootstrap: n-step targets use ``r_hat = r + gamma alpha H(s')`` and
      ``V = E_pi[Q]``; the identity holds to rounding.
    * Soft: n-step targets unroll the soft backup, ``V_soft = E_pi[Q - alpha log pi]``,
      so ``-alpha log pi`` appears at steps 1..n-1 but never at step 0. No
      per-step reward reproduces that; each candidate (entropy dropped,
      attached to r_t through the next action, attached to the step itself)
      leaves a residual. The smallest of them is reported.
    """
    gamma, lam, alpha = config.gamma, config.lam, config.alpha
    probs = as_probs(policy, mdp)
    H = entropy_rows(probs)
    traj = list(trajectory)
    if any(tr.done for tr in traj):
        raise ValueError("the demo expects a single non-terminating trajectory")
    T = len(traj)
    v_boot = policy_value(mdp, probs, alpha)
    v_soft = v_boot + alpha * H
    states = [tr.state for tr in traj] + [traj[-1].next_state]
    logp = np.array([tr.log_prob for tr in traj])

    boot_avg = np.zeros(T)
    soft_avg = np.zeros(T)
    for t in range(T):
        N = T - t
        boot = [_nstep_bootstrap(traj, t, n, gamma, alpha) for n in range(1, N + 1)]
        soft = []
        for n in range(1, N + 1):
            total = traj[t].reward
            for l in range(1, n):
                total += gamma**l * (traj[t + l].reward - alpha * logp[t + l])
            soft.append(total + gamma**n * v_soft[states[t + n]] - v_soft[states[t]])
        boot_avg[t] = exponential_average(boot)(lam)
        soft_avg[t] = exponential_average(soft)(lam)

    boot_gae = gae_from_arrays(
        [tr.shaped_reward(gamma, alpha) for tr in traj],
        [v_boot[s] for s in states[:-1]], [v_boot[s] for s in states[1:]],
        np.zeros(T), np.zeros(T), gamma, lam,
    )
    # the last step has no sampled successor action: use its expected entropy
    next_logp = np.append(logp[1:], -H[states[-1]])
    candidates = {
        "none": np.array([tr.reward for tr in traj]),
        "with_current_reward": np.array([tr.reward for tr in traj]) - gamma * alpha * next_logp,
        "with_own_step": np.array([tr.reward for tr in traj]) - alpha * logp,
    }
    soft_residuals = {}
    for label, rewards in candidates.items():
        soft_gae = gae_from_arrays(
            rewards, [v_soft[s] for s in states[:-1]], [v_soft[s] for s in states[1:]],
            np.zeros(T), np.zeros(T), gamma, lam,
        )
        soft_residuals[label] = float(np.max(np.abs(soft_gae - soft_avg)))

    boot_residual = float(np.max(np.abs(boot_gae - boot_avg)))
    soft_residual = min(soft_residuals.values())
    values = {
        "alpha": alpha,
        "lam": lam,
        "length": T,
        "bootstrap_residual": boot_residual,
        "soft_residual": soft_residual,
    }
    values.update({f"soft_residual_{k}": v for k, v in soft_residuals.items()})
    checks = {"bootstrap_telescopes": boot_residual <= 1e-12}
    if alpha > 0 and T > 1:
        checks["soft_breaks_telescoping"] = soft_residual > 1e-10
    return AuditReport("gae_incompatibility", values, checks)


__all__ = [
    "GaeConfig",
    "Transition",
    "augment_advantage",
    "compute_gae",
    "exponential_average",
    "gae_from_arrays",
    "incompatibility_demo",
    "sample_tabular_trajectory",
]
