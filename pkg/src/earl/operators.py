"""Bellman backups for the soft and the bootstrap (entropy-augmented) operators.

Two Q-operators share a fixed point for every policy:

* ``soft_backup``:      r + gamma E_{s'}[ E_{a'~pi}[Q(s', a') - alpha log pi(a'|s')] ]
* ``bootstrap_backup``: r + gamma E_{s'}[ E_{a'~pi}[Q(s', a')] + alpha H_pi(s') ]

and two V-backups act on the shaped reward
``r_hat(s, a) = r(s, a) + gamma alpha E_{s'}[H(s')]``.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .mdp import TabularMDP, TabularPolicy, as_probs, entropy_bonus, entropy_rows, q_to_v
from .reports import BoundReport
from .validation import check_alpha, check_table


class ConvergenceError(RuntimeError):
    pass


class BackupKind(enum.Enum):
    SOFT_Q = "soft-Q"
    BOOTSTRAP_Q = "bootstrap-Q"
    V_POLICY = "v-policy"
    V_OPTIMAL = "v-optimal"


def _xlogx_weighted(probs, alpha):
    """sum_a pi(a|s) * alpha * log pi(a|s), with 0 log 0 = 0."""
    logs = np.log(probs, out=np.zeros_like(probs), where=probs > 0)
    return alpha * np.sum(probs * logs, axis=1)


def soft_backup(q, mdp: TabularMDP, policy, alpha=1.0):
    probs = as_probs(policy, mdp)
    alpha = check_alpha(alpha)
    q = check_table(q, probs.shape, "q")
    v_soft = np.sum(probs * q, axis=1) - _xlogx_weighted(probs, alpha)
    return mdp.reward + mdp.discount * (mdp.transition @ v_soft)


def bootstrap_backup(q, mdp: TabularMDP, policy, alpha=1.0):
    probs = as_probs(policy, mdp)
    alpha = check_alpha(alpha)
    q = check_table(q, probs.shape, "q")
    v = np.sum(probs * q, axis=1)
    return mdp.reward + mdp.discount * (mdp.transition @ (v + alpha * entropy_rows(probs)))


def v_backup(v, mdp: TabularMDP, alpha=0.0, policy=None, reference=None):
    """One application of the policy V-backup or the optimal V-backup.

    With ``policy`` the backup is ``E_{a~pi}[r_hat(s, a) + gamma E_{s'}V(s')]``
    where ``r_hat`` carries the entropy of ``policy``. Without it, the maximum
    over actions is taken and ``r_hat`` carries the entropy of ``reference``;
    the default reference is a greedy policy, whose entropy is zero.
    """
    alpha = check_alpha(alpha)
    v = check_table(v, (mdp.n_states,), "v")
    if policy is not None:
        probs = as_probs(policy, mdp)
        lookahead = mdp.reward + entropy_bonus(mdp, probs, alpha) + mdp.discount * (mdp.transition @ v)
        return np.sum(probs * lookahead, axis=1)
    bonus = 0.0 if reference is None else entropy_bonus(mdp, reference, alpha)
    lookahead = mdp.reward + bonus + mdp.discount * (mdp.transition @ v)
    return lookahead.max(axis=1)


def soft_state_value(q, alpha):
    """alpha * log sum_a exp(Q(s, a) / alpha); max_a Q(s, a) when alpha == 0."""
    q = np.asarray(q, dtype=np.float64)
    top = q.max(axis=1)
    if alpha == 0.0:
        return top
    # max-shifted log-sum-exp; cheaper than scipy's in the inner loop of value iteration
    return top + alpha * np.log(np.sum(np.exp((q - top[:, None]) / alpha), axis=1))


def soft_improvement_step(q, alpha) -> TabularPolicy:
    """Exact minimiser of KL(pi' || exp(Q/alpha) / Z) over unrestricted discrete policies."""
    alpha = check_alpha(alpha, strictly_positive=True)
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or not np.all(np.isfinite(q)):
        raise ValueError("q must be a finite 2-d table")
    probs = softmax(q / alpha, axis=1)
    return TabularPolicy(probs / probs.sum(axis=1, keepdims=True))


def greedy_policy(q) -> TabularPolicy:
    """Deterministic policy picking the first maximiser of each row."""
    q = np.asarray(q, dtype=np.float64)
    return TabularPolicy.deterministic(np.argmax(q, axis=1), q.shape[1])


def argmax_sets(q, tie_tol=1e-9):
    """Per-state tuple of actions within ``tie_tol`` of the row maximum."""
    q = np.asarray(q, dtype=np.float64)
    best = q.max(axis=1, keepdims=True)
    return [tuple(np.flatnonzero(row)) for row in (q >= best - tie_tol)]


def kl_divergence(p, q):
    """Row-wise KL(p || q) with 0 log(0/q) = 0 and +inf where p > 0 = q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    pos = p > 0
    out = np.zeros(p.shape)
    with np.errstate(divide="ignore"):
        out[pos] = p[pos] * (np.log(p[pos]) - np.log(q[pos]))
    return out.sum(axis=-1)


def max_kl(p, q) -> float:
    return float(np.max(kl_divergence(as_probs(p), as_probs(q))))


def soft_q_iteration(mdp: TabularMDP, alpha, tol=1e-10, max_iter=10**6, q0=None):
    """Iterate ``Q <- r + gamma P [alpha log sum exp(Q / alpha)]`` to within ``tol`` of its fixed point.

    Returns ``(Q, n_iterations)``. Each sweep equals a bootstrap backup under
    the softmax policy of the current iterate, so the fixed point is the
    action-value of the entropy-augmented optimal control problem.
    """
    alpha = check_alpha(alpha)
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma = mdp.discount
    q = np.zeros((mdp.n_states, mdp.n_actions)) if q0 is None else np.array(q0, dtype=np.float64)
    threshold = tol * (1.0 - gamma)
    for k in range(1, max_iter + 1):
        q_next = mdp.reward + gamma * (mdp.transition @ soft_state_value(q, alpha))
        change = np.max(np.abs(q_next - q))
        q = q_next
        # ||Q_k - Q*|| <= gamma/(1-gamma) ||Q_k - Q_{k-1}||
        if gamma * change <= threshold:
            return q, k
    raise ConvergenceError(f"soft Q iteration did not reach tol={tol} in {max_iter} sweeps")


def value_iteration(mdp: TabularMDP, alpha=0.0, tol=1e-10, max_iter=10**6):
    """Optimal augmented value V~*(s) and a greedy policy.

    V~*(s) = max_a Q~*(s, a) is the largest entropy-augmented return
    obtainable from ``s``: the first action is free and the entropy bonus of
    each successor state follows the softmax policy of the current iterate,
    recomputed every sweep. With ``alpha == 0`` this is classical value
    iteration. The returned value is within ``tol`` of the fixed point.
    """
    q, _ = soft_q_iteration(mdp, alpha, tol=tol, max_iter=max_iter)
    return q.max(axis=1), greedy_policy(q)


class SoftValueIteration(BaseEstimator):
    """Estimator wrapper around :func:`soft_q_iteration`.

    ``fit(mdp)`` stores ``q_``, ``value_`` (V~*), ``soft_value_`` and
    ``n_iter_``. ``predict`` returns greedy actions for state ids and
    ``predict_proba`` the softmax policy (the greedy one when ``alpha == 0``).
    """

    def __init__(self, alpha=0.0, tol=1e-10, max_iter=10**6):
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, mdp, y=None):
        if not isinstance(mdp, TabularMDP):
            raise TypeError("SoftValueIteration.fit expects a TabularMDP")
        self.q_, self.n_iter_ = soft_q_iteration(mdp, self.alpha, self.tol, self.max_iter)
        self.value_ = self.q_.max(axis=1)
        self.soft_value_ = soft_state_value(self.q_, self.alpha)
        self.n_states_, self.n_actions_ = self.q_.shape
        return self

    def _states(self, X):
        check_is_fitted(self, "q_")
        states = np.asarray(X, dtype=int).reshape(-1)
        if np.any((states < 0) | (states >= self.n_states_)):
            raise ValueError("state id out of range")
        return states

    def predict(self, X):
        return np.argmax(self.q_[self._states(X)], axis=1)

    def predict_proba(self, X):
        states = self._states(X)
        if self.alpha == 0:
            return greedy_policy(self.q_).probs[states]
        return soft_improvement_step(self.q_, self.alpha).probs[states]

    def policy(self) -> TabularPolicy:
        check_is_fitted(self, "q_")
        return greedy_policy(self.q_)


def iterate_to_fixed_point(backup, q0, tol=1e-12, max_iter=10**6):
    """Apply ``backup`` until the sup-norm residual is <= tol or stops shrinking.

    Returns ``(Q, residual)``. Stagnation at the floating-point floor ends the
    loop rather than raising.
    """
    q = np.asarray(q0, dtype=np.float64)
    best = np.inf
    stalled = 0
    for _ in range(max_iter):
        q_next = backup(q)
        residual = float(np.max(np.abs(q_next - q)))
        q = q_next
        if residual <= tol:
            return q, residual
        if residual < best:
            best, stalled = residual, 0
        else:
            stalled += 1
            if stalled > 50:
                return q, residual
    raise ConvergenceError(f"backup iteration did not reach tol={tol}")


__all__ = [
    "BackupKind",
    "BoundReport",
    "ConvergenceError",
    "SoftValueIteration",
    "argmax_sets",
    "bootstrap_backup",
    "greedy_policy",
    "iterate_to_fixed_point",
    "kl_divergence",
    "max_kl",
    "q_to_v",
    "soft_backup",
    "soft_improvement_step",
    "soft_q_iteration",
    "soft_state_value",
    "v_backup",
    "value_iteration",
]
