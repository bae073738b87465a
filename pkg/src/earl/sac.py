"""Discrete-action soft actor-critic with bootstrap (entropy-augmented) targets.

Per environment step, after a warm-up:

1. critic:  Q_w(s, a)   -> y_Q = r + gamma (1 - done) (V_target(s') + alpha H(s'))
2. actor:   minimise KL(pi_theta(.|s) || softmax(Q_w(s, .) / alpha)), closed form
3. value:   V_phi(s)    -> y_V = Q_w(s, a'), a' ~ pi_theta(.|s) drawn after the actor step
4. target:  phi_bar <- (1 - tau) phi_bar + tau phi

``H(s')`` is the average of ``-log pi`` over a few sampled actions. The
``target="soft"`` variant instead uses ``y_Q = r + gamma V_target(s')`` and
``y_V = Q_w(s, a') - alpha log pi(a'|s)``, the soft-operator form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .envs import make_env
from .nets import (
    Adam,
    MLP,
    entropy_from_logits,
    kl_projection_loss,
    log_softmax,
    softmax,
    squared_loss,
)
from .ppo import PPO_COLUMNS
from .reports import TrainingError, TrainingRecord
from .schedule import TemperatureSchedule
from .validation import check_random_state

SAC_COLUMNS = PPO_COLUMNS + ["q_loss", "buffer_size", "target_divergence"]


class ReplayBuffer:
    """Fixed-capacity ring of (s, a, r, s', done) with uniform sampling."""

    def __init__(self, capacity, obs_dim, seed=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.rng = check_random_state(seed)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros(self.capacity, dtype=int)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done):
        i = self.cursor
        self.obs[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_obs[i] = s_next
        self.dones[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.rng.integers(0, self.size, size=n)

    def sample(self, n):
        idx = self.sample_indices(n)
        return {
            "obs": self.obs[idx], "actions": self.actions[idx], "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx], "dones": self.dones[idx], "index": idx,
        }


def q_target(r, v_target_next, entropy_next, gamma, alpha, done):
    """r + gamma (1 - done) (V_target(s') + alpha H(s'))."""
    return r + gamma * (1.0 - np.asarray(done, dtype=float)) * (v_target_next + alpha * entropy_next)


def v_target(q_net, state, sampled_action, log_prob=None, alpha=0.0, kind="bootstrap"):
    """Q_w(s, a') for freshly sampled a'; the soft variant subtracts alpha log pi(a'|s)."""
    q = q_net(np.atleast_2d(state))
    a = np.atleast_1d(np.asarray(sampled_action, dtype=int))
    out = q[np.arange(a.size), a]
    if kind == "soft":
        out = out - alpha * np.asarray(log_prob, dtype=float)
    elif kind != "bootstrap":
        raise ValueError(f"unknown target kind {kind!r}")
    return out


def entropy_estimate(log_probs):
    """Monte Carlo entropy, mean of -log pi over the sampled actions (last axis)."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    if log_probs.shape[-1] < 1:
        raise ValueError("need at least one sample")
    return -np.mean(log_probs, axis=-1)


def sample_actions(logits, rng, n=None):
    """Draw actions from softmax(logits); returns (actions, log_probs), with a trailing axis of size n if given."""
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp), axis=1)
    k = 1 if n is None else n
    u = rng.random((logp.shape[0], k))
    a = np.minimum((cdf[:, None, :] < u[:, :, None]).sum(axis=2), logp.shape[1] - 1)
    lp = np.take_along_axis(logp, a, axis=1)
    if n is None:
        return a[:, 0], lp[:, 0]
    return a, lp


def policy_update(states, q_net, policy_net, alpha, optimizer):
    """One gradient step on the closed-form projection loss; returns (loss, mean entropy)."""
    if alpha <= 0:
        raise ValueError("the projection step needs alpha > 0")
    q = q_net(states)
    logits, cache = policy_net.forward(states)
    loss, grad = kl_projection_loss(logits, q, alpha)
    if not np.isfinite(loss):
        raise TrainingError("non-finite projection loss", {"alpha": alpha})
    optimizer.step(policy_net, policy_net.backward(cache, grad))
    return loss, float(entropy_from_logits(logits).mean())


@dataclass
class SacConfig:
    env: str = "diagonal"
    env_params: dict = field(default_factory=dict)
    total_steps: int = 20000
    capacity: int = 100_000
    batch_size: int = 64
    tau: float = 0.005
    q_lr: float = 3e-4
    value_lr: float = 3e-4
    policy_lr: float = 3e-4
    gamma: float = 0.99
    hidden: int = 64
    warmup: int = 500
    entropy_samples: int = 5       # 0 = closed-form entropy
    target: str = "bootstrap"      # or "soft"
    schedule_every: int = 25       # env steps per temperature step
    log_every: int = 500
    max_grad_norm: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.target not in ("bootstrap", "soft"):
            raise ValueError(f"unknown target {self.target!r}")
        for name in ("total_steps", "capacity", "batch_size", "schedule_every", "log_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")


class SacNets:
    def __init__(self, n_inputs, n_actions, hidden=64, seed=None, tau=0.005):
        rng = check_random_state(seed)
        self.q_net = MLP(n_inputs, n_actions, hidden, seed=rng, out_scale=0.1)
        self.value_net = MLP(n_inputs, 1, hidden, seed=rng, out_scale=0.1)
        self.target_value_net = MLP(n_inputs, 1, hidden, seed=rng)
        self.target_value_net.copy_from(self.value_net)
        self.policy_net = MLP(n_inputs, n_actions, hidden, seed=rng)
        self.tau = tau

    def polyak(self):
        for key, p in self.value_net.params.items():
            self.target_value_net.params[key] = (1.0 - self.tau) * self.target_value_net.params[key] + self.tau * p

    def target_divergence(self):
        return float(np.linalg.norm(self.target_value_net.flat() - self.value_net.flat()))


def sac_update(nets: SacNets, batch, alpha, gamma, opts, rng, entropy_samples=5, target="bootstrap"):
    """One round of critic, actor, value and target updates on ``batch``."""
    s, a, r, s2, d = batch["obs"], batch["actions"], batch["rewards"], batch["next_obs"], batch["dones"]
    rows = np.arange(a.size)
    v_next = nets.target_value_net(s2)[:, 0]
    if target == "bootstrap":
        logits_next = nets.policy_net(s2)
        if entropy_samples > 0:
            _, lp = sample_actions(logits_next, rng, entropy_samples)
            h_next = entropy_estimate(lp)
        else:
            h_next = entropy_from_logits(logits_next)
        y_q = q_target(r, v_next, h_next, gamma, alpha, d)
    else:
        y_q = q_target(r, v_next, 0.0, gamma, 0.0, d)

    q_out, q_cache = nets.q_net.forward(s)
    q_loss, g = squared_loss(q_out[rows, a], y_q)
    grad = np.zeros_like(q_out)
    grad[rows, a] = g[:, 0]
    opts["q"].step(nets.q_net, nets.q_net.backward(q_cache, grad))

    pi_loss, entropy = policy_update(s, nets.q_net, nets.policy_net, alpha, opts["policy"])

    a_new, lp_new = sample_actions(nets.policy_net(s), rng)
    y_v = v_target(nets.q_net, s, a_new, lp_new, alpha, target)
    v_out, v_cache = nets.value_net.forward(s)
    v_loss, vg = squared_loss(v_out, y_v)
    opts["value"].step(nets.value_net, nets.value_net.backward(v_cache, vg))
    nets.polyak()
    if not (np.isfinite(q_loss) and np.isfinite(v_loss)):
        raise TrainingError("non-finite critic loss", {"q_loss": q_loss, "value_loss": v_loss, "alpha": alpha})
    return {"q_loss": q_loss, "policy_loss": pi_loss, "value_loss": v_loss, "entropy": entropy}


def sac_train(env_kind, config: SacConfig, schedule: TemperatureSchedule, seed=0, callback=None):
    """Algorithm loop on one environment; returns ``(record, nets)``.

    The temperature advances once every ``config.schedule_every`` environment
    steps; a CSV row is emitted every ``config.log_every`` steps.
    """
    if schedule.alpha0 <= 0:
        raise ValueError("the soft actor-critic needs alpha0 > 0")
    env_kind = env_kind or config.env
    root = np.random.SeedSequence(seed)
    env_seed, net_seed, act_seed, buf_seed = (np.random.default_rng(s) for s in root.spawn(4))
    env = make_env(env_kind, seed=env_seed, **config.env_params)
    nets = SacNets(env.feature_dim, env.n_actions, config.hidden, net_seed, config.tau)
    opts = {
        "q": Adam(config.q_lr, max_grad_norm=config.max_grad_norm),
        "policy": Adam(config.policy_lr, max_grad_norm=config.max_grad_norm),
        "value": Adam(config.value_lr, max_grad_norm=config.max_grad_norm),
    }
    buffer = ReplayBuffer(config.capacity, env.feature_dim, buf_seed)
    record = TrainingRecord(list(SAC_COLUMNS), meta={"seed": seed, "learner": "sac", "env": env_kind})
    alpha = schedule.step()
    obs = env.observe("onehot")
    window = {"returns": [], "opt": 0, "sub": 0, "metrics": [], "kl": []}
    for step in range(1, config.total_steps + 1):
        logits = nets.policy_net(obs)
        a, _ = sample_actions(logits, act_seed)
        res = env.step(int(a[0]))
        buffer.add(obs, int(a[0]), res.reward, res.observation, res.terminated)
        cap = res.info.get("captured")
        if cap == "optimum":
            window["opt"] += 1
        elif cap == "suboptimum":
            window["sub"] += 1
        if res.done:
            window["returns"].append(env.episode_return)
            env.reset()
        obs = env.observe("onehot")

        if len(buffer) >= max(config.warmup, config.batch_size):
            batch = buffer.sample(config.batch_size)
            old = softmax(nets.policy_net(batch["obs"]))
            window["metrics"].append(sac_update(nets, batch, alpha, config.gamma, opts, act_seed,
                                                config.entropy_samples, config.target))
            new = log_softmax(nets.policy_net(batch["obs"]))
            window["kl"].append(float(np.mean(np.sum(old * (np.log(np.clip(old, 1e-300, None)) - new), axis=1))))

        if step % config.log_every == 0:
            rets = np.asarray(window["returns"], dtype=float)
            ms = window["metrics"]
            mean = (lambda k: float(np.mean([m[k] for m in ms])) if ms else float("nan"))
            row = {
                "iteration": step // config.log_every - 1,
                "raw_return_mean": float(rets.mean()) if rets.size else float("nan"),
                "raw_return_std": float(rets.std()) if rets.size else float("nan"),
                "entropy_mean": mean("entropy"),
                "alpha": alpha,
                "policy_loss": mean("policy_loss"),
                "value_loss": mean("value_loss"),
                "kl": float(np.mean(window["kl"])) if window["kl"] else float("nan"),
                "episodes": int(rets.size),
                "optimum_captures": window["opt"],
                "suboptimum_captures": window["sub"],
                "env_steps": step,
                "q_loss": mean("q_loss"),
                "buffer_size": len(buffer),
                "target_divergence": nets.target_divergence(),
            }
            record.append(row)
            if callback is not None:
                callback(row)
            window = {"returns": [], "opt": 0, "sub": 0, "metrics": [], "kl": []}
        if step % config.schedule_every == 0:
            alpha = schedule.step()
    return record, nets


class EARLSAC(BaseEstimator):
    """Discrete soft actor-critic with bootstrap targets; ``fit()`` trains on the configured grid world."""

    def __init__(self, env="diagonal", alpha0=0.05, schedule="exponential", decay_rate=0.99, total_steps=20000,
                 batch_size=64, capacity=100_000, tau=0.005, q_lr=3e-4, value_lr=3e-4, policy_lr=3e-4, gamma=0.99,
                 hidden=64, warmup=500, entropy_samples=5, target="bootstrap", schedule_every=25, seed=0):
        self.env = env
        self.alpha0 = alpha0
        self.schedule = schedule
        self.decay_rate = decay_rate
        self.total_steps = total_steps
        self.batch_size = batch_size
        self.capacity = capacity
        self.tau = tau
        self.q_lr = q_lr
        self.value_lr = value_lr
        self.policy_lr = policy_lr
        self.gamma = gamma
        self.hidden = hidden
        self.warmup = warmup
        self.entropy_samples = entropy_samples
        self.target = target
        self.schedule_every = schedule_every
        self.seed = seed

    def make_config(self) -> SacConfig:
        names = {f.name for f in fields(SacConfig)}
        return SacConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def make_schedule(self) -> TemperatureSchedule:
        rate = self.decay_rate if self.schedule == "exponential" else 1.0
        return TemperatureSchedule(self.schedule, self.alpha0, rate)

    def fit(self, X=None, y=None):
        self.record_, self.nets_ = sac_train(self.env, self.make_config(), self.make_schedule(), self.seed)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "nets_")
        return softmax(self.nets_.policy_net(np.atleast_2d(X)))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


__all__ = [
    "EARLSAC",
    "ReplayBuffer",
    "SAC_COLUMNS",
    "SacConfig",
    "SacNets",
    "entropy_estimate",
    "policy_update",
    "q_target",
    "sac_train",
    "sac_update",
    "v_target",
]
