"""Warning-level categories and a small MLP classifier for them."""

import warnings
from dataclasses import dataclass, field

import numpy as np

PMF_FLOOR = 1e-6


@dataclass(frozen=True)
class CategoryScheme:
    kind: str
    thresholds: tuple

    def __post_init__(self):
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")

    @property
    def n_categories(self):
        return len(self.thresholds) + 1


DI_SCHEME = CategoryScheme("DI", (21.0, 24.0, 27.0, 29.0, 32.0))
WBGT_SCHEME = CategoryScheme("WBGTID", (27.8, 29.5, 31.1, 32.2))
SCHEMES = {"DI": DI_SCHEME, "WBGTID": WBGT_SCHEME}


def categorize(value, scheme):
    """1-based category; lower bounds are inclusive."""
    c = 1 + np.searchsorted(np.asarray(scheme.thresholds), np.asarray(value, dtype=float), side="right")
    return int(c) if np.ndim(c) == 0 else c


def law_to_pmf(law, scheme):
    """Category probabilities of a predictive law or of a sample.

    Objects with a ``cdf`` method are differenced at the thresholds; arrays
    are treated as samples along the last axis.
    """
    thr = np.asarray(scheme.thresholds)
    if hasattr(law, "cdf"):
        mu = np.asarray(law.mu)
        f = np.stack([law.cdf(np.full(mu.shape, t)) for t in thr], axis=-1)
        zeros = np.zeros(mu.shape + (1,))
        f = np.concatenate([zeros, f, zeros + 1.0], axis=-1)
        return np.clip(np.diff(f, axis=-1), 0.0, 1.0)
    sample = np.asarray(law, dtype=float)
    cats = categorize(sample, scheme)
    onehot = np.asarray(cats)[..., None] == np.arange(1, scheme.n_categories + 1)
    return onehot.mean(axis=-2)


def categorical_crps(pmf, observed):
    """Ranked probability score over ordered categories (1-based ``observed``)."""
    pmf = np.asarray(pmf, dtype=float)
    cdf = np.cumsum(pmf, axis=-1)
    c = np.arange(1, pmf.shape[-1] + 1)
    ind = c >= np.asarray(observed)[..., None]
    return np.sum((cdf - ind) ** 2, axis=-1)


def dual_net_combine(p1, q):
    """``(p1, (1-p1) q_1, ..., (1-p1) q_kappa)``."""
    p1 = np.asarray(p1, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.concatenate([p1[..., None], (1.0 - p1)[..., None] * q], axis=-1)


# -- multilayer perceptron -----------------------------------------------------------


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (15,)
    net: str = "single"
    error_days: int = 0
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-2
    momentum: float = 0.9
    decay: float = 0.01

    def __post_init__(self):
        if self.net not in ("single", "dual"):
            raise ValueError("net must be 'single' or 'dual'")
        if min(self.hidden) < 1:
            raise ValueError("hidden layer needs at least one neuron")
        if not 0 <= self.error_days <= 5:
            raise ValueError("error_days must lie in 0..5")


class InsufficientTrainingData(ValueError):
    pass


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def init_params(n_in, n_hidden, n_out, rng):
    lim1 = np.sqrt(6.0 / (n_in + n_hidden))
    lim2 = np.sqrt(6.0 / (n_hidden + n_out))
    return {
        "W1": rng.uniform(-lim1, lim1, (n_in, n_hidden)),
        "b1": np.zeros(n_hidden),
        "W2": rng.uniform(-lim2, lim2, (n_hidden, n_out)),
        "b2": np.zeros(n_out),
    }


def forward(params, x):
    h = np.tanh(x @ params["W1"] + params["b1"])
    return h, softmax(h @ params["W2"] + params["b2"])


def loss_and_grads(params, x, y):
    """Mean cross-entropy and its gradients; ``y`` holds 0-based class ids."""
    n = x.shape[0]
    h, p = forward(params, x)
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300)))
    dz = p.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    grads = {"W2": h.T @ dz, "b2": dz.sum(axis=0)}
    dh = (dz @ params["W2"].T) * (1.0 - h * h)
    grads["W1"] = x.T @ dh
    grads["b1"] = dh.sum(axis=0)
    return loss, grads


@dataclass
class MlpModel:
    params: dict
    mean: np.ndarray
    scale: np.ndarray
    n_classes: int
    missing: tuple = ()
    loss_history: list = field(default_factory=list)

    def predict(self, features):
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.mean.size:
            raise ValueError(f"expected {self.mean.size} features, got {x.shape[1]}")
        _, p = forward(self.params, (x - self.mean) / self.scale)
        if self.missing:
            p = (p + PMF_FLOOR) / (1.0 + self.n_classes * PMF_FLOOR)
        return p


def mlp_train(features, labels, n_classes, config=MlpConfig(), rng=None, min_cases=100):
    """Single-hidden-layer tanh network trained by SGD with momentum.

    ``labels`` are 1-based categories. The weights of the epoch with the
    lowest full-batch cross-entropy are kept, so the final loss never
    exceeds the initial one.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int) - 1
    if x.shape[0] < min_cases:
        raise InsufficientTrainingData(f"{x.shape[0]} labelled cases, need {min_cases}")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError("labels outside the category range")
    missing = tuple(int(c) + 1 for c in np.setdiff1d(np.arange(n_classes), y))
    if missing:
        warnings.warn(f"categories {missing} absent from the training data", stacklevel=2)

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    xs = (x - mean) / scale
    params = init_params(x.shape[1], config.hidden[0], n_classes, rng)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}

    best_loss, _ = loss_and_grads(params, xs, y)
    best = {k: v.copy() for k, v in params.items()}
    history = [best_loss]
    n = xs.shape[0]
    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + config.decay * epoch)
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = loss_and_grads(params, xs[idx], y[idx])
            for key in params:
                velocity[key] = config.momentum * velocity[key] - lr * grads[key]
                params[key] += velocity[key]
        loss, _ = loss_and_grads(params, xs, y)
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best = {k: v.copy() for k, v in params.items()}
    return MlpModel(best, mean, scale, n_classes, missing, history)


@dataclass
class DualNet:
    first: MlpModel
    second: MlpModel = None
    n_classes: int = 6

    def predict(self, features):
        p1 = self.first.predict(features)[:, 0]
        kappa = self.n_classes - 1
        if self.second is None:
            q = np.full((p1.size, kappa), 1.0 / kappa)
        else:
            q = self.second.predict(features)
        return dual_net_combine(p1, q)


def train_classifier(features, labels, n_classes, config, rng, min_cases=100):
    """Train a single net or a dual net according to ``config.net``."""
    if config.net == "single":
        return mlp_train(features, labels, n_classes, config, rng, min_cases)
    labels = np.asarray(labels, dtype=int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        first = mlp_train(features, np.where(labels == 1, 1, 2), 2, config, rng, min_cases)
    rest = labels > 1
    second = None
    if rest.sum() >= 2:
        cfg2 = MlpConfig(hidden=config.hidden[-1:], net="single", error_days=config.error_days,
                         epochs=config.epochs, batch_size=config.batch_size,
                         learning_rate=config.learning_rate, momentum=config.momentum, decay=config.decay)
        second = mlp_train(np.asarray(features)[rest], labels[rest] - 1, n_classes - 1, cfg2, rng, min_cases=2)
    return DualNet(first, second, n_classes)


def mlp_predict(model, features):
    return model.predict(features)
