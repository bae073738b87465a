"""Finite MDPs, exact policy evaluation and discounted state visitation.

Values are plain ndarrays: ``V`` has shape ``(n_states,)`` and ``Q`` / ``A``
have shape ``(n_states, n_actions)``. Entropies are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import (
    check_alpha,
    check_discount,
    check_probability_rows,
    check_state,
    check_table,
)


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite discounted MDP ``(S, A, P, r, rho0, gamma)``.

    Parameters
    ----------
    transition : array of shape (n_states, n_actions, n_states)
        ``transition[s, a, s']`` is P(s'|s, a).
    reward : array of shape (n_states, n_actions)
    discount : float in [0, 1)
    initial_dist : array of shape (n_states,), optional
        Defaults to a point mass on state 0.
    reward_bound : float, optional
        Stored bound C_r with ``|r| <= C_r``. Defaults to ``max |r|``.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    initial_dist: np.ndarray = None
    reward_bound: float = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        P = check_probability_rows(self.transition, "transition")
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        n_states, n_actions = P.shape[:2]
        r = check_table(self.reward, (n_states, n_actions), "reward")
        gamma = check_discount(self.discount)
        if self.initial_dist is None:
            rho0 = np.zeros(n_states)
            rho0[0] = 1.0
        else:
            rho0 = check_probability_rows(self.initial_dist, "initial_dist")
            if rho0.shape != (n_states,):
                raise ValueError(f"initial_dist must have shape ({n_states},)")
        bound = float(np.max(np.abs(r))) if self.reward_bound is None else float(self.reward_bound)
        if not np.isfinite(bound) or np.any(np.abs(r) > bound):
            raise ValueError("reward exceeds the stored bound C_r")
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "reward", _frozen(r))
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "initial_dist", _frozen(rho0))
        object.__setattr__(self, "reward_bound", bound)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def entropy_bound(self) -> float:
        """C_H = log |A|, the largest entropy a discrete policy can reach."""
        return float(np.log(self.n_actions))

    def with_reward(self, reward) -> "TabularMDP":
        return TabularMDP(self.transition, reward, self.discount, self.initial_dist, name=self.name)

    def with_discount(self, gamma) -> "TabularMDP":
        return TabularMDP(self.transition, self.reward, gamma, self.initial_dist, name=self.name)

    def value_bound(self, alpha=0.0) -> float:
        """(C_r + gamma * alpha * C_H) / (1 - gamma)."""
        return (self.reward_bound + self.discount * alpha * self.entropy_bound) / (1.0 - self.discount)


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Row-stochastic table ``probs[s, a] = pi(a|s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = check_probability_rows(self.probs, "policy")
        if p.ndim != 2:
            raise ValueError(f"policy must be a 2-d table, got shape {p.shape}")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def shape(self):
        return self.probs.shape

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def random(cls, n_states, n_actions, rng, concentration=1.0):
        return cls(rng.dirichlet(np.full(n_actions, concentration), size=n_states))

    def entropy(self):
        return entropy_rows(self.probs)

    def greedy_actions(self):
        return np.argmax(self.probs, axis=1)


def as_probs(policy, mdp=None):
    """Probability table of a ``TabularPolicy`` or array-like, shape-checked against ``mdp``."""
    if isinstance(policy, TabularPolicy):
        probs = policy.probs
    else:
        probs = TabularPolicy(policy).probs
    if mdp is not None and probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")
    return probs


def entropy_rows(probs):
    """Row-wise Shannon entropy with 0 log 0 = 0."""
    probs = np.asarray(probs, dtype=np.float64)
    logs = np.log(probs, out=np.zeros_like(probs), where=probs > 0)
    return -np.sum(probs * logs, axis=-1)


def policy_entropy(policy, state) -> float:
    """Entropy H(s) of ``pi(.|state)`` in nats."""
    probs = as_probs(policy)
    state = check_state(state, probs.shape[0])
    return float(entropy_rows(probs[state]))


def policy_transition(mdp, policy):
    """State-to-state kernel P_pi[s, s'] = sum_a pi(a|s) P(s'|s, a)."""
    probs = as_probs(policy, mdp)
    return np.einsum("sa,sat->st", probs, mdp.transition)


def entropy_bonus(mdp, policy, alpha):
    """gamma * alpha * E_{s'~P(.|s,a)}[H_pi(s')] for every (s, a)."""
    alpha = check_alpha(alpha)
    H = entropy_rows(as_probs(policy, mdp))
    return mdp.discount * alpha * (mdp.transition @ H)


def shaped_reward_table(mdp, policy, alpha):
    return mdp.reward + entropy_bonus(mdp, policy, alpha)


def _solve(matrix, rhs):
    try:
        out = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"singular evaluation system: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("evaluation system produced non-finite values")
    return out


def exact_policy_eval(mdp, policy, alpha=0.0):
    """Fixed point of the bootstrap backup for ``policy``, by a direct solve.

    Solves ``Q = r_hat + gamma * P Pi Q`` on the (S*A)-dimensional system,
    where ``r_hat = r + gamma * alpha * P H_pi``.
    """
    probs = as_probs(policy, mdp)
    S, A = mdp.n_states, mdp.n_actions
    r_hat = shaped_reward_table(mdp, probs, alpha).reshape(S * A)
    P = mdp.transition.reshape(S * A, S)
    # Pi[s, s*A + a] = pi(a|s)
    Pi = np.zeros((S, S * A))
    Pi[np.repeat(np.arange(S), A), np.arange(S * A)] = probs.reshape(-1)
    system = np.eye(S * A) - mdp.discount * (P @ Pi)
    return _solve(system, r_hat).reshape(S, A)


def policy_value(mdp, policy, alpha=0.0):
    """V^pi from the S-dimensional system ``(I - gamma P_pi) V = r_hat_pi``."""
    probs = as_probs(policy, mdp)
    r_pi = np.sum(probs * shaped_reward_table(mdp, probs, alpha), axis=1)
    system = np.eye(mdp.n_states) - mdp.discount * policy_transition(mdp, probs)
    return _solve(system, r_pi)


def q_to_v(q, policy):
    return np.sum(as_probs(policy) * q, axis=1)


def discounted_return(mdp, policy, alpha=0.0) -> float:
    """eta(pi) = E_{s0~rho0, a0~pi}[Q^pi(s0, a0)] of the entropy-augmented objective."""
    probs = as_probs(policy, mdp)
    q = exact_policy_eval(mdp, probs, alpha)
    return float(mdp.initial_dist @ q_to_v(q, probs))


def state_visitation(mdp, policy):
    """Unnormalised discounted visitation rho_pi = (I - gamma P_pi^T)^-1 rho0."""
    P_pi = policy_transition(mdp, policy)
    system = np.eye(mdp.n_states) - mdp.discount * P_pi.T
    return _solve(system, mdp.initial_dist)


def advantage(q, policy):
    """A(s, a) = Q(s, a) - sum_a pi(a|s) Q(s, a)."""
    probs = as_probs(policy)
    q = check_table(q, probs.shape, "q")
    return q - q_to_v(q, probs)[:, None]
