"""On-policy learner: PPO-clip on entropy-shaped rewards with advantage augmentation.

Each iteration collects ``rollout_steps`` steps from ``n_envs`` environments,
shapes rewards with the rollout policy's successor-state entropy, runs GAE,
normalises the advantages and then, inside every minibatch, adds
``gamma * alpha * H_theta(s')`` computed from the *current* parameters so the
entropy term is differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .envs import make_env
from .gae import GaeConfig, Transition, gae_from_arrays
from .nets import (
    entropy_from_logits,
    log_softmax,
    make_model,
    make_optimizer,
    ppo_clip_loss,
    softmax,
    squared_loss,
)
from .reports import TrainingError, TrainingRecord
from .schedule import TemperatureSchedule
from .shaping import trajectory_shaped_reward
from .validation import check_random_state

PPO_COLUMNS = [
    "iteration", "raw_return_mean", "raw_return_std", "entropy_mean", "alpha",
    "policy_loss", "value_loss", "kl",
    "episodes", "optimum_captures", "suboptimum_captures", "env_steps",
]


@dataclass
class PpoConfig:
    env: str = "diagonal"
    env_params: dict = field(default_factory=dict)
    iterations: int = 200          # N
    rollout_steps: int = 64        # M, per environment
    n_envs: int = 8
    epochs: int = 4                # L
    minibatch_size: int = 128
    clip_ratio: float = 0.2
    model: str = "mlp"
    hidden: int = 64
    optimizer: str = None          # adam for mlp, sgd for tabular
    policy_lr: float = 1e-3
    value_lr: float = 1e-3
    max_grad_norm: float = 0.5
    gae: GaeConfig = field(default_factory=lambda: GaeConfig(gamma=0.99, lam=0.95))
    shape_rewards: bool = True
    augment_advantage: bool = True
    normalize_advantage: bool = True
    bootstrap_truncated: bool = True

    def __post_init__(self):
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be > 0")
        for name in ("iterations", "rollout_steps", "n_envs", "epochs", "minibatch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.model not in ("mlp", "tabular"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.optimizer is None:
            self.optimizer = "adam" if self.model == "mlp" else "sgd"

    @property
    def gamma(self):
        return self.gae.gamma


class Rollout:
    """Time-major arrays of one collection phase, viewable as a list of Transitions.

    Shapes are ``(T, n_envs)`` (``obs`` and ``next_obs`` add a feature axis).
    ``terminated`` marks true episode ends, ``truncated`` time-limit cuts.
    """

    def __init__(self, **arrays):
        self.__dict__.update(arrays)

    def __len__(self):
        return self.actions.size

    def transitions(self):
        T, n = self.actions.shape
        out = []
        for t in range(T):
            for e in range(n):
                out.append(Transition(
                    state=self.obs[t, e], action=int(self.actions[t, e]), reward=float(self.rewards[t, e]),
                    entropy_next=float(self.entropy_next[t, e]), value=float(self.values[t, e]),
                    value_next=float(self.values_next[t, e]), log_prob=float(self.log_probs[t, e]),
                    done=bool(self.terminated[t, e]), truncated=bool(self.truncated[t, e]),
                    next_state=self.next_obs[t, e],
                ))
        return out

    def __iter__(self):
        return iter(self.transitions())

    def __getitem__(self, i):
        return self.transitions()[i]


def _features(envs):
    return np.stack([env.observe("onehot") for env in envs])


def collect_rollout(env, policy, value, steps, alpha, gamma, seed=None, shape=True) -> Rollout:
    """Run ``policy`` for ``steps`` steps in each environment of ``env`` (one env or a list).

    Environments are not reset first; an episode that ends is reset in
    place. Successor entropies and values are evaluated in one batched pass
    at the end, on the pre-reset successor observations. The entropy of a
    terminated successor is 0.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    envs = env if isinstance(env, (list, tuple)) else [env]
    rng = check_random_state(seed)
    n = len(envs)
    obs = _features(envs)
    d = obs.shape[1]
    buf_obs = np.zeros((steps, n, d))
    buf_next = np.zeros((steps, n, d))
    actions = np.zeros((steps, n), dtype=int)
    rewards = np.zeros((steps, n))
    log_probs = np.zeros((steps, n))
    values = np.zeros((steps, n))
    terminated = np.zeros((steps, n), dtype=bool)
    truncated = np.zeros((steps, n), dtype=bool)
    episode_returns, captures = [], {"optimum": 0, "suboptimum": 0}

    for t in range(steps):
        logits = policy(obs)
        logp = log_softmax(logits)
        p = np.exp(logp)
        u = rng.random(n)[:, None]
        a = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), p.shape[1] - 1)
        buf_obs[t] = obs
        actions[t] = a
        log_probs[t] = logp[np.arange(n), a]
        values[t] = value(obs)[:, 0]
        obs = obs.copy()
        for i, e in enumerate(envs):
            res = e.step(int(a[i]))
            rewards[t, i] = res.reward
            buf_next[t, i] = obs[i] = res.observation
            cap = res.info.get("captured")
            if cap:
                captures[cap] += 1
            if res.done:
                terminated[t, i] = res.terminated
                truncated[t, i] = res.truncated
                episode_returns.append(e.episode_return)
                obs[i] = e.reset()

    flat_next = buf_next.reshape(steps * n, d)
    entropy_next = entropy_from_logits(policy(flat_next)).reshape(steps, n) * ~terminated
    values_next = value(flat_next)[:, 0].reshape(steps, n) * ~terminated
    shaped = trajectory_shaped_reward(rewards, entropy_next, gamma, alpha if shape else 0.0)
    entropy_now = entropy_from_logits(policy(buf_obs.reshape(steps * n, d)))
    return Rollout(
        obs=buf_obs, next_obs=buf_next, actions=actions, rewards=rewards, shaped=shaped,
        entropy_next=entropy_next, values=values, values_next=values_next, log_probs=log_probs,
        terminated=terminated, truncated=truncated, episode_returns=episode_returns,
        captures=captures, entropy_mean=float(entropy_now.mean()),
    )


def _finite_or_raise(label, value, dump):
    if not np.all(np.isfinite(value)):
        raise TrainingError(f"non-finite {label}", dump)


def ppo_update(batch: Rollout, policy, value, config: PpoConfig, alpha, policy_opt=None, value_opt=None,
               seed=None):
    """L epochs of minibatch PPO-clip on ``batch``; returns mean metrics.

    ``batch`` must already carry ``advantages`` (from GAE) and ``returns``.
    """
    rng = check_random_state(seed)
    policy_opt = policy_opt or make_optimizer(config.optimizer, config.policy_lr, config.max_grad_norm)
    value_opt = value_opt or make_optimizer(config.optimizer, config.value_lr, config.max_grad_norm)
    d = batch.obs.shape[-1]
    X = batch.obs.reshape(-1, d)
    Xn = batch.next_obs.reshape(-1, d)
    acts = batch.actions.reshape(-1)
    old_logp = batch.log_probs.reshape(-1)
    adv = batch.advantages.reshape(-1)
    if config.normalize_advantage and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    returns = batch.returns.reshape(-1)
    mask = (~batch.terminated).reshape(-1).astype(float)
    aug_alpha = alpha if config.augment_advantage else 0.0
    gamma = config.gamma

    N = acts.size
    mb = min(config.minibatch_size, N)
    stats = {"policy_loss": [], "value_loss": [], "kl": []}
    for _ in range(config.epochs):
        order = rng.permutation(N)
        for start in range(0, N, mb):
            idx = order[start:start + mb]
            both = np.concatenate([X[idx], Xn[idx]])
            out, cache = policy.forward(both)
            k = idx.size
            loss, g, g_next, info = ppo_clip_loss(out[:k], out[k:], acts[idx], old_logp[idx], adv[idx],
                                                  mask[idx], gamma, aug_alpha, config.clip_ratio)
            grads = policy.backward(cache, np.concatenate([g, g_next]))
            v_out, v_cache = value.forward(X[idx])
            v_loss, v_grad = squared_loss(v_out, returns[idx])
            v_grads = value.backward(v_cache, v_grad)
            dump = {"loss": loss, "value_loss": v_loss, "alpha": alpha, "adv_abs_max": float(np.max(np.abs(adv[idx])))}
            _finite_or_raise("policy loss", loss, dump)
            _finite_or_raise("value loss", v_loss, dump)
            policy_opt.step(policy, grads)
            value_opt.step(value, v_grads)
            stats["policy_loss"].append(loss)
            stats["value_loss"].append(v_loss)
            stats["kl"].append(info["approx_kl"])
    for model in (policy, value):
        _finite_or_raise("parameters", model.flat(), {"alpha": alpha})
    return {key: float(np.mean(vals)) for key, vals in stats.items()}


def compute_batch_targets(batch: Rollout, config: PpoConfig):
    """Attach GAE advantages and shaped returns to ``batch``."""
    dones = batch.terminated if config.bootstrap_truncated else batch.terminated | batch.truncated
    adv = gae_from_arrays(batch.shaped, batch.values, batch.values_next, dones, batch.truncated,
                          config.gae.gamma, config.gae.lam)
    batch.advantages = adv
    batch.returns = adv + batch.values
    return batch


def build_models(config: PpoConfig, n_inputs, n_actions, seed):
    rng = check_random_state(seed)
    kw = {} if config.model == "tabular" else {"hidden": config.hidden}
    policy = make_model(config.model, n_inputs, n_actions, seed=rng, **kw)
    value = make_model(config.model, n_inputs, 1, seed=rng, **kw)
    return policy, value


def train(env_kind, config: PpoConfig, schedule: TemperatureSchedule, seed=0, callback=None):
    """Run ``config.iterations`` PPO iterations; returns ``(record, policy, value)``.

    The schedule advances once per outer iteration. Returns reported in the
    record are sums of raw environment rewards over completed episodes.
    """
    config = replace(config, env=env_kind) if env_kind else config
    root = np.random.SeedSequence(seed)
    env_seeds, model_seed, act_seed, upd_seed = root.spawn(4)
    envs = [make_env(config.env, seed=np.random.default_rng(s), **config.env_params)
            for s in env_seeds.spawn(config.n_envs)]
    policy, value = build_models(config, envs[0].feature_dim, envs[0].n_actions, np.random.default_rng(model_seed))
    policy_opt = make_optimizer(config.optimizer, config.policy_lr, config.max_grad_norm)
    value_opt = make_optimizer(config.optimizer, config.value_lr, config.max_grad_norm)
    act_rng = np.random.default_rng(act_seed)
    upd_rng = np.random.default_rng(upd_seed)
    record = TrainingRecord(list(PPO_COLUMNS), meta={"seed": seed, "learner": "ppo", "env": config.env})
    steps = 0
    for it in range(config.iterations):
        alpha = schedule.step()
        batch = collect_rollout(envs, policy, value, config.rollout_steps, alpha, config.gamma, act_rng,
                                shape=config.shape_rewards)
        compute_batch_targets(batch, config)
        metrics = ppo_update(batch, policy, value, config, alpha, policy_opt, value_opt, upd_rng)
        steps += len(batch)
        rets = np.asarray(batch.episode_returns, dtype=float)
        row = {
            "iteration": it,
            "raw_return_mean": float(rets.mean()) if rets.size else float("nan"),
            "raw_return_std": float(rets.std()) if rets.size else float("nan"),
            "entropy_mean": batch.entropy_mean,
            "alpha": alpha,
            "episodes": int(rets.size),
            "optimum_captures": batch.captures["optimum"],
            "suboptimum_captures": batch.captures["suboptimum"],
            "env_steps": steps,
            **metrics,
        }
        record.append(row)
        if callback is not None:
            callback(row)
    return record, policy, value


class EARLPPO(BaseEstimator):
    """PPO-clip learner with entropy-augmented rewards and advantages.

    ``fit()`` trains on the configured grid world (there is no ``X``);
    ``predict`` / ``predict_proba`` act on feature rows of that environment.
    """

    def __init__(self, env="diagonal", alpha0=0.05, schedule="exponential", decay_rate=0.99, iterations=200,
                 rollout_steps=64, n_envs=8, epochs=4, minibatch_size=128, clip_ratio=0.2, model="mlp",
                 hidden=64, policy_lr=1e-3, value_lr=1e-3, gamma=0.99, lam=0.95, shape_rewards=True,
                 augment_advantage=True, seed=0):
        self.env = env
        self.alpha0 = alpha0
        self.schedule = schedule
        self.decay_rate = decay_rate
        self.iterations = iterations
        self.rollout_steps = rollout_steps
        self.n_envs = n_envs
        self.epochs = epochs
        self.minibatch_size = minibatch_size
        self.clip_ratio = clip_ratio
        self.model = model
        self.hidden = hidden
        self.policy_lr = policy_lr
        self.value_lr = value_lr
        self.gamma = gamma
        self.lam = lam
        self.shape_rewards = shape_rewards
        self.augment_advantage = augment_advantage
        self.seed = seed

    def make_config(self) -> PpoConfig:
        names = {f.name for f in fields(PpoConfig)}
        params = {k: v for k, v in self.get_params().items() if k in names}
        return PpoConfig(gae=GaeConfig(self.gamma, self.lam), **params)

    def make_schedule(self) -> TemperatureSchedule:
        rate = self.decay_rate if self.schedule == "exponential" else 1.0
        return TemperatureSchedule(self.schedule, self.alpha0, rate)

    def fit(self, X=None, y=None):
        self.record_, self.policy_, self.value_ = train(self.env, self.make_config(), self.make_schedule(), self.seed)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "policy_")
        return softmax(self.policy_(np.atleast_2d(X)))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


__all__ = [
    "EARLPPO",
    "PPO_COLUMNS",
    "PpoConfig",
    "Rollout",
    "collect_rollout",
    "compute_batch_targets",
    "ppo_update",
    "train",
]
