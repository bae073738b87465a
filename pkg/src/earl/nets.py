"""Small numpy models with hand-written reverse-mode gradients.

Two parameterizations share one interface: ``forward(X)`` returns the output
and a cache, ``backward(cache, grad_out)`` returns parameter gradients with
the same keys as ``params``.

* :class:`TabularSoftmax` is a bias-free linear map; with one-hot features
  its output row is the logit table row of the state.
* :class:`MLP` is input -> hidden(tanh) -> output.

Loss helpers at the bottom return the loss together with its gradient with
respect to the model outputs, so every chain ends in ``model.backward``.
"""

from __future__ import annotations

import numpy as np

from .validation import check_random_state


class Model:
    params: dict

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        offset = 0
        for key, p in self.params.items():
            self.params[key] = vector[offset:offset + p.size].reshape(p.shape).copy()
            offset += p.size
        if offset != vector.size:
            raise ValueError("parameter vector has the wrong length")

    def flat_grad(self, grads):
        return np.concatenate([grads[k].ravel() for k in self.params])

    def copy_from(self, other):
        self.params = {k: v.copy() for k, v in other.params.items()}

    def __call__(self, X):
        return self.forward(X)[0]


class TabularSoftmax(Model):
    """Logit table ``W`` of shape (n_inputs, n_outputs); ``X`` is one-hot (or any features)."""

    def __init__(self, n_inputs, n_outputs, seed=None, scale=0.0):
        rng = check_random_state(seed)
        self.params = {"W": scale * rng.normal(size=(n_inputs, n_outputs))}

    def forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.params["W"], X

    def backward(self, cache, grad_out):
        return {"W": cache.T @ grad_out}


class MLP(Model):
    def __init__(self, n_inputs, n_outputs, hidden=64, seed=None, out_scale=0.01):
        rng = check_random_state(seed)
        self.params = {
            "W1": rng.normal(size=(n_inputs, hidden)) * np.sqrt(1.0 / n_inputs),
            "b1": np.zeros(hidden),
            "W2": rng.normal(size=(hidden, n_outputs)) * out_scale,
            "b2": np.zeros(n_outputs),
        }

    def forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        h = np.tanh(X @ self.params["W1"] + self.params["b1"])
        return h @ self.params["W2"] + self.params["b2"], (X, h)

    def backward(self, cache, grad_out):
        X, h = cache
        dh = (grad_out @ self.params["W2"].T) * (1.0 - h * h)
        return {
            "W1": X.T @ dh,
            "b1": dh.sum(axis=0),
            "W2": h.T @ grad_out,
            "b2": grad_out.sum(axis=0),
        }


def make_model(kind, n_inputs, n_outputs, seed=None, hidden=64, **kwargs) -> Model:
    if kind == "mlp":
        return MLP(n_inputs, n_outputs, hidden=hidden, seed=seed, **kwargs)
    if kind == "tabular":
        return TabularSoftmax(n_inputs, n_outputs, seed=seed, **kwargs)
    raise ValueError(f"unknown model kind {kind!r}; choose 'mlp' or 'tabular'")


class SGD:
    def __init__(self, lr=0.1, max_grad_norm=None):
        self.lr = lr
        self.max_grad_norm = max_grad_norm

    def step(self, model, grads):
        """Descend on ``grads``; returns the pre-clipping gradient norm."""
        norm = _clip(grads, self.max_grad_norm)
        for key in model.params:
            model.params[key] = model.params[key] - self.lr * grads[key]
        return norm


class Adam:
    def __init__(self, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8, max_grad_norm=None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, model, grads):
        norm = _clip(grads, self.max_grad_norm)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            m = self.m.get(key, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(key, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[key], self.v[key] = m, v
            model.params[key] = model.params[key] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


def _clip(grads, max_norm):
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        for key in grads:
            grads[key] = grads[key] * (max_norm / norm)
    return norm


def make_optimizer(kind, lr, max_grad_norm=None):
    if kind == "adam":
        return Adam(lr, max_grad_norm=max_grad_norm)
    if kind == "sgd":
        return SGD(lr, max_grad_norm=max_grad_norm)
    raise ValueError(f"unknown optimizer {kind!r}")


# distributions over discrete actions

def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def entropy_from_logits(logits):
    logp = log_softmax(logits)
    return -np.sum(np.exp(logp) * logp, axis=-1)


def entropy_grad(logits):
    """dH/dz_j = -p_j (log p_j + H) for every row."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    H = -np.sum(p * logp, axis=-1, keepdims=True)
    return -p * (logp + H)


def ppo_clip_loss(logits, logits_next, actions, old_logp, adv, next_mask, gamma, alpha, clip_ratio):
    """Negative clipped surrogate with the differentiated successor-entropy term.

    ``A_aug = adv + gamma alpha next_mask H_theta(s')``. Returns
    ``(loss, d loss/d logits, d loss/d logits_next, info)``.
    """
    B = len(actions)
    rows = np.arange(B)
    logp_all = log_softmax(logits)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_logp)
    H_next = entropy_from_logits(logits_next) * next_mask
    adv_aug = adv + gamma * alpha * H_next
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    unclipped_term = ratio * adv_aug
    clipped_term = clipped * adv_aug
    use_unclipped = unclipped_term <= clipped_term
    surrogate = np.where(use_unclipped, unclipped_term, clipped_term)
    loss = -float(np.mean(surrogate))

    d_logp = np.where(use_unclipped, ratio * adv_aug, 0.0)
    d_adv = np.where(use_unclipped, ratio, clipped)
    g_logits = -np.exp(logp_all) * d_logp[:, None]
    g_logits[rows, actions] += d_logp
    g_logits *= -1.0 / B
    g_next = -(d_adv * gamma * alpha * next_mask / B)[:, None] * entropy_grad(logits_next)
    info = {
        "approx_kl": float(np.mean(old_logp - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_ratio)),
    }
    return loss, g_logits, g_next, info


def squared_loss(pred, target):
    """0.5 mean (pred - target)^2 over a column of predictions; returns (loss, gradient)."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    diff = pred - np.asarray(target, dtype=np.float64).reshape(-1)
    return 0.5 * float(np.mean(diff * diff)), (diff / diff.size)[:, None]


def kl_projection_loss(logits, q_values, alpha):
    """mean_s KL(softmax(logits) || softmax(Q / alpha)) and its gradient in the logits."""
    logp = log_softmax(logits)
    logt = log_softmax(np.asarray(q_values, dtype=np.float64) / alpha)
    p = np.exp(logp)
    kl = np.sum(p * (logp - logt), axis=-1)
    # dKL/dz_j = p_j (log p_j - log t_j - KL)
    grad = p * (logp - logt - kl[:, None]) / len(kl)
    return float(np.mean(kl)), grad


def finite_difference_check(loss_fn, model, grads, rng=None, n_coords=None, eps=1e-6):
    """Relative error between analytic ``grads`` and central differences of ``loss_fn()``.

    Measured on the whole vector, ``||g - fd|| / max(||g|| + ||fd||, 1e-12)``,
    so coordinates with a vanishing gradient do not blow up the ratio.
    ``n_coords`` restricts the check to a random subset of coordinates.
    """
    theta = model.flat()
    analytic = model.flat_grad(grads)
    idx = np.arange(theta.size)
    if n_coords is not None and n_coords < theta.size:
        idx = check_random_state(rng).choice(theta.size, n_coords, replace=False)
    numeric = np.zeros(idx.size)
    for j, i in enumerate(idx):
        bumped = theta.copy()
        bumped[i] = theta[i] + eps
        model.set_flat(bumped)
        up = loss_fn()
        bumped[i] = theta[i] - eps
        model.set_flat(bumped)
        numeric[j] = (up - loss_fn()) / (2 * eps)
    model.set_flat(theta)
    g = analytic[idx]
    return float(np.linalg.norm(g - numeric) / max(np.linalg.norm(g) + np.linalg.norm(numeric), 1e-12))
