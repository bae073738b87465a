"""Loss closures for every model-gradient path, shared by the unit and acceptance suites.

Each builder takes a seed and returns ``(model, loss_fn, grads)`` evaluated
at a random parameter point.
"""

import numpy as np

from earl.nets import MLP, TabularSoftmax, kl_projection_loss, log_softmax, ppo_clip_loss, squared_loss


def _batch(rng, n=16, d=6, A=4):
    X = rng.normal(size=(n, d))
    Xn = rng.normal(size=(n, d))
    acts = rng.integers(0, A, size=n)
    return X, Xn, acts


def _random_model(kind, rng, d, out):
    if kind == "tabular":
        return TabularSoftmax(d, out, seed=rng, scale=1.0)
    m = MLP(d, out, hidden=8, seed=rng, out_scale=1.0)
    m.params["b1"] = rng.normal(size=8) * 0.5
    m.params["b2"] = rng.normal(size=out) * 0.5
    return m


def ppo_clip_path(seed, kind="mlp", alpha=0.3, adv_scale=1.0):
    rng = np.random.default_rng(seed)
    X, Xn, acts = _batch(rng)
    model = _random_model(kind, rng, X.shape[1], 4)
    logits = model(X)
    # old log-probs near the current ones so both clipped and unclipped samples occur
    old_logp = log_softmax(logits)[np.arange(len(acts)), acts] + rng.normal(scale=0.3, size=len(acts))
    adv = rng.normal(size=len(acts)) * adv_scale
    mask = (rng.random(len(acts)) < 0.8).astype(float)
    k = len(acts)

    def loss_fn():
        out = model(np.concatenate([X, Xn]))
        return ppo_clip_loss(out[:k], out[k:], acts, old_logp, adv, mask, 0.99, alpha, 0.2)[0]

    out, cache = model.forward(np.concatenate([X, Xn]))
    _, g, g_next, _ = ppo_clip_loss(out[:k], out[k:], acts, old_logp, adv, mask, 0.99, alpha, 0.2)
    return model, loss_fn, model.backward(cache, np.concatenate([g, g_next]))


def entropy_term_path(seed, kind="mlp"):
    """Only the differentiated successor-entropy term: zero advantages, ratio 1."""
    rng = np.random.default_rng(seed)
    X, Xn, acts = _batch(rng)
    model = _random_model(kind, rng, X.shape[1], 4)
    k = len(acts)
    old_logp = log_softmax(model(X))[np.arange(k), acts]
    mask = np.ones(k)

    def loss_fn():
        out = model(np.concatenate([X, Xn]))
        return ppo_clip_loss(out[:k], out[k:], acts, old_logp, np.zeros(k), mask, 0.99, 0.5, 0.2)[0]

    out, cache = model.forward(np.concatenate([X, Xn]))
    _, g, g_next, _ = ppo_clip_loss(out[:k], out[k:], acts, old_logp, np.zeros(k), mask, 0.99, 0.5, 0.2)
    return model, loss_fn, model.backward(cache, np.concatenate([g, g_next]))


def kl_projection_path(seed, kind="mlp"):
    rng = np.random.default_rng(seed)
    X, _, _ = _batch(rng)
    model = _random_model(kind, rng, X.shape[1], 4)
    q = rng.normal(size=(len(X), 4))
    alpha = float(rng.uniform(0.1, 2.0))

    def loss_fn():
        return kl_projection_loss(model(X), q, alpha)[0]

    out, cache = model.forward(X)
    return model, loss_fn, model.backward(cache, kl_projection_loss(out, q, alpha)[1])


def value_regression_path(seed, kind="mlp"):
    rng = np.random.default_rng(seed)
    X, _, _ = _batch(rng)
    model = _random_model(kind, rng, X.shape[1], 1)
    target = rng.normal(size=len(X))

    def loss_fn():
        return squared_loss(model(X), target)[0]

    out, cache = model.forward(X)
    return model, loss_fn, model.backward(cache, squared_loss(out, target)[1])


def q_regression_path(seed, kind="mlp"):
    """Q(s, a) regression that only touches the taken action's output."""
    rng = np.random.default_rng(seed)
    X, _, acts = _batch(rng)
    model = _random_model(kind, rng, X.shape[1], 4)
    target = rng.normal(size=len(X))
    rows = np.arange(len(X))

    def loss_fn():
        return squared_loss(model(X)[rows, acts], target)[0]

    out, cache = model.forward(X)
    g = squared_loss(out[rows, acts], target)[1]
    grad = np.zeros_like(out)
    grad[rows, acts] = g[:, 0]
    return model, loss_fn, model.backward(cache, grad)


PATHS = {
    "ppo_clip": ppo_clip_path,
    "entropy_augmentation": entropy_term_path,
    "kl_projection": kl_projection_path,
    "value_regression": value_regression_path,
    "q_regression": q_regression_path,
}
