"""Univariate EMOS: normal law for T/TD, GEV law for the heat indices.

Laws are vectorised: ``mu``/``sigma`` may be arrays describing a batch of
forecast cases, which is how the fitting code evaluates the mean CRPS.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .optim import minimize_score

SIGMA_FLOOR = 1e-3
XI_BOUND = 0.5
# below this |xi| the Gumbel form of the closed-form CRPS is used
_XI_GUMBEL = 1e-7
_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


class InsufficientDataError(ValueError):
    pass


# -- laws -------------------------------------------------------------------


@dataclass(frozen=True)
class NormalLaw:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.sigma) > 0)):
            raise ValueError("sigma must be positive")

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def ppf(self, p):
        return self.mu + self.sigma * special.ndtri(p)


@dataclass(frozen=True)
class GevLaw:
    mu: np.ndarray
    sigma: np.ndarray
    xi: float

    def __post_init__(self):
        if np.any(~(np.asarray(self.sigma) > 0)):
            raise ValueError("sigma must be positive")
        if not self.xi < 1:
            raise ValueError("GEV shape must be < 1 for a finite mean")

    def cdf(self, x):
        return gev_cdf(self, x)

    def ppf(self, p):
        return gev_ppf(self, p)


def gev_cdf(law, x):
    """GEV distribution function, zero/one outside the support."""
    z = (np.asarray(x, dtype=float) - law.mu) / law.sigma
    xi = float(law.xi)
    if xi == 0.0:
        with np.errstate(over="ignore"):
            return np.exp(-np.exp(-z))
    base = 1.0 + xi * z
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inner = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), -1.0 / xi), 0.0)
        out = np.exp(-inner)
    if xi > 0:
        return np.where(base > 0, out, 0.0)
    return np.where(base > 0, out, 1.0)


def gev_ppf(law, p):
    p = np.asarray(p, dtype=float)
    xi = float(law.xi)
    if xi == 0.0:
        return law.mu - law.sigma * np.log(-np.log(p))
    return law.mu + law.sigma / xi * (np.power(-np.log(p), -xi) - 1.0)


# -- scores -----------------------------------------------------------------


def crps_normal(law, x):
    """Closed-form CRPS of a normal law."""
    sigma = np.asarray(law.sigma, dtype=float)
    z = (np.asarray(x, dtype=float) - law.mu) / sigma
    pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return sigma * (z * (2.0 * special.ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI)


def crps_gev(law, x):
    """Closed-form CRPS of a GEV law (Friederichs and Thorarinsdottir, 2012)."""
    xi = float(law.xi)
    if xi >= 1:
        raise ValueError("CRPS of a GEV law requires xi < 1")
    mu = np.asarray(law.mu, dtype=float)
    sigma = np.asarray(law.sigma, dtype=float)
    x = np.asarray(x, dtype=float)
    z = (x - mu) / sigma
    if abs(xi) < _XI_GUMBEL:
        log_f = -np.exp(-z)
        f = np.exp(log_f)
        ei = np.where(np.isfinite(log_f), special.expi(log_f), 0.0)
        return mu - x + sigma * (np.euler_gamma - np.log(2.0)) - 2.0 * sigma * ei
    base = 1.0 + xi * z
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # -log F(x)
        neg_log_f = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), -1.0 / xi),
                             np.inf if xi > 0 else 0.0)
    f = np.exp(-neg_log_f)
    g = special.gamma(1.0 - xi)
    lower_inc = np.where(np.isinf(neg_log_f), g, special.gammainc(1.0 - xi, np.where(np.isinf(neg_log_f), 0.0, neg_log_f)) * g)
    return (mu - x - sigma / xi) * (1.0 - 2.0 * f) - sigma / xi * (2.0**xi * g - 2.0 * lower_inc)


def crps_ensemble(members, x):
    """Empirical CRPS of an ensemble; ``members`` on the last axis."""
    m = np.sort(np.asarray(members, dtype=float), axis=-1)
    x = np.asarray(x, dtype=float)
    k = m.shape[-1]
    term1 = np.mean(np.abs(m - x[..., None]), axis=-1)
    # sum_{i,j}|f_i - f_j| = 2 * sum_i (2i - k - 1) f_(i)  (1-based i)
    w = 2.0 * np.arange(1, k + 1) - k - 1
    pair = 2.0 * np.sum(w * m, axis=-1)
    return term1 - pair / (2.0 * k * k)


def mean_abs_difference(members):
    """Ensemble mean absolute difference (1/K^2) sum |f_k - f_l|."""
    m = np.sort(np.asarray(members, dtype=float), axis=-1)
    k = m.shape[-1]
    w = 2.0 * np.arange(1, k + 1) - k - 1
    return 2.0 * np.sum(w * m, axis=-1) / (k * k)


# -- ensemble summaries and links --------------------------------------------


@dataclass(frozen=True)
class GroupedEnsemble:
    """Ensemble statistics for a batch of cases.

    ``means`` has shape (n, K) for K exchangeable groups; ``s2`` is the
    unbiased ensemble variance, ``md`` the mean absolute difference.
    """

    means: np.ndarray
    sizes: tuple
    s2: np.ndarray
    md: np.ndarray
    mean: np.ndarray

    @classmethod
    def from_members(cls, members, groups=None):
        m = np.atleast_2d(np.asarray(members, dtype=float))
        size = m.shape[-1]
        if groups is None:
            groups = (size,)
        if sum(groups) != size or min(groups) < 1:
            raise ValueError("group sizes must be positive and sum to the member count")
        edges = np.cumsum((0,) + tuple(groups))
        means = np.stack([m[:, a:b].mean(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1)
        s2 = m.var(axis=1, ddof=1) if size > 1 else np.zeros(m.shape[0])
        return cls(means, tuple(groups), s2, mean_abs_difference(m), m.mean(axis=1))

    def __len__(self):
        return self.means.shape[0]

    def subset(self, idx):
        return GroupedEnsemble(self.means[idx], self.sizes, self.s2[idx], self.md[idx], self.mean[idx])


@dataclass(frozen=True)
class NormalEmosCoefficients:
    a: float
    b: tuple
    c: float
    d: float

    def to_vector(self):
        return np.array([self.a, *self.b, self.c, self.d])

    @classmethod
    def from_vector(cls, v):
        v = [float(u) for u in v]
        return cls(v[0], tuple(v[1:-2]), v[-2], v[-1])

    @classmethod
    def default(cls, k=1):
        return cls(0.0, (1.0,) * k, 1.0, 1.0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["a"]), tuple(float(u) for u in d["b"]), float(d["c"]), float(d["d"]))


SCALE_VARIANTS = ("md", "mean", "var", "sd")


@dataclass(frozen=True)
class GevEmosCoefficients:
    alpha: float
    beta: tuple
    gamma: float
    delta: float
    xi: float
    scale: str = field(default="md")

    def to_vector(self):
        return np.array([self.alpha, *self.beta, self.gamma, self.delta, self.xi])

    @classmethod
    def from_vector(cls, v, scale="md"):
        v = [float(u) for u in v]
        return cls(v[0], tuple(v[1:-3]), v[-3], v[-2], v[-1], scale)

    @classmethod
    def default(cls, k=1, scale="md"):
        return cls(0.0, (1.0,) * k, 1.0, 1.0, -0.1, scale)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["alpha"]), tuple(float(u) for u in d["beta"]), float(d["gamma"]),
                   float(d["delta"]), float(d["xi"]), d.get("scale", "md"))


def _normal_params(v, g):
    k = g.means.shape[1]
    mu = v[0] + g.means @ v[1 : 1 + k]
    sigma = np.sqrt(v[1 + k] ** 2 + v[2 + k] ** 2 * g.s2)
    return mu, np.maximum(sigma, SIGMA_FLOOR)


def _gev_params(v, g, scale):
    k = g.means.shape[1]
    mu = v[0] + g.means @ v[1 : 1 + k]
    gam2, del2 = v[1 + k] ** 2, v[2 + k] ** 2
    if scale == "md":
        sigma = gam2 + del2 * g.md
    elif scale == "mean":
        sigma = gam2 + del2 * g.mean
    elif scale == "var":
        sigma = np.sqrt(gam2 + del2 * g.s2)
    elif scale == "sd":
        sigma = gam2 + del2 * np.sqrt(g.s2)
    else:
        raise ValueError(f"unknown GEV scale variant {scale!r}")
    xi = float(np.clip(v[3 + k], -XI_BOUND, XI_BOUND))
    return mu, np.maximum(sigma, SIGMA_FLOOR), xi


def link_normal(coef, g):
    if len(coef.b) != g.means.shape[1]:
        raise ValueError("coefficient count does not match group count")
    mu, sigma = _normal_params(coef.to_vector(), g)
    return NormalLaw(mu, sigma)


def link_gev(coef, g):
    if len(coef.beta) != g.means.shape[1]:
        raise ValueError("coefficient count does not match group count")
    mu, sigma, xi = _gev_params(coef.to_vector(), g, coef.scale)
    return GevLaw(mu, sigma, xi)


# -- fitting ------------------------------------------------------------------


@dataclass(frozen=True)
class EmosFit:
    coef: object
    objective: float
    initial_objective: float
    degenerate: bool = False


def _check_training(g, obs, min_cases):
    obs = np.asarray(obs, dtype=float)
    if len(g) != obs.shape[0]:
        raise ValueError("ensemble and observation counts differ")
    if obs.shape[0] < min_cases:
        raise InsufficientDataError(f"{obs.shape[0]} training cases, need at least {min_cases}")
    return obs


def _centred(g):
    """Copy of ``g`` with centred group means, so intercept and slopes decouple.

    The "mean" scale variant keeps the uncentred ensemble mean.
    """
    centre = g.means.mean(axis=0)
    return GroupedEnsemble(g.means - centre, g.sizes, g.s2, g.md, g.mean), centre


def fit_normal_emos(g, obs, init=None, min_cases=10, **opt):
    """Minimum-CRPS estimate of the normal EMOS coefficients."""
    obs = _check_training(g, obs, min_cases)
    k = g.means.shape[1]
    gc, centre = _centred(g)
    x0 = (init or NormalEmosCoefficients.default(k)).to_vector()
    x0[0] += x0[1 : 1 + k] @ centre

    def objective(v):
        mu, sigma = _normal_params(v, gc)
        return float(np.mean(crps_normal(NormalLaw(mu, sigma), obs)))

    res = minimize_score(objective, x0, **opt)
    v = res.x.copy()
    v[0] -= v[1 : 1 + k] @ centre
    degenerate = bool(np.ptp(obs) < 1e-12)
    return EmosFit(NormalEmosCoefficients.from_vector(v), res.fun, res.initial_fun, degenerate)


def fit_gev_emos(g, obs, init=None, min_cases=10, scale="md", **opt):
    """Minimum-CRPS estimate of the GEV EMOS coefficients, xi in [-0.5, 0.5]."""
    obs = _check_training(g, obs, min_cases)
    k = g.means.shape[1]
    gc, centre = _centred(g)
    x0 = (init or GevEmosCoefficients.default(k, scale)).to_vector()
    x0[-1] = np.clip(x0[-1], -XI_BOUND, XI_BOUND)
    x0[0] += x0[1 : 1 + k] @ centre

    def objective(v):
        mu, sigma, xi = _gev_params(v, gc, scale)
        # the clip makes the score flat beyond the bound; the penalty keeps the simplex inside
        excess = max(abs(v[-1]) - XI_BOUND, 0.0)
        return float(np.mean(crps_gev(GevLaw(mu, sigma, xi), obs))) + excess * excess

    res = minimize_score(objective, x0, **opt)
    v = res.x.copy()
    v[0] -= v[1 : 1 + k] @ centre
    v[-1] = np.clip(v[-1], -XI_BOUND, XI_BOUND)
    degenerate = bool(np.ptp(obs) < 1e-12)
    return EmosFit(GevEmosCoefficients.from_vector(v, scale), res.fun, res.initial_fun, degenerate)


# -- sampling -------------------------------------------------------------------


def sample_law(law, n, rng):
    """Draw ``n`` values per case; output shape ``np.shape(mu) + (n,)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mu = np.asarray(law.mu, dtype=float)[..., None]
    sigma = np.asarray(law.sigma, dtype=float)[..., None]
    shape = np.broadcast(mu, sigma).shape[:-1] + (n,)
    if isinstance(law, NormalLaw):
        return mu + sigma * rng.standard_normal(shape)
    if isinstance(law, GevLaw):
        u = rng.random(shape)
        # guard the open interval (0, 1)
        u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
        return gev_ppf(GevLaw(mu, sigma, law.xi), u)
    raise TypeError(f"cannot sample from {type(law).__name__}")
