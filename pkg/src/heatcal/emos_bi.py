"""Bivariate normal EMOS for (temperature, dew point).

Covariances are handled in closed 2x2 form so a batch of cases is scored
without per-case linear algebra calls.
"""

from dataclasses import dataclass

import numpy as np

from .emos_uni import EmosFit, InsufficientDataError
from .optim import minimize_smooth

JITTER = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class BivariateNormalLaw:
    mu: np.ndarray  # (..., 2)
    sigma: np.ndarray  # (..., 2, 2)

    def cholesky(self):
        return np.linalg.cholesky(self.sigma)


@dataclass(frozen=True)
class GroupedEnsemble2D:
    """Group mean vectors ``means`` (n, K, 2) and covariances ``s2`` (n, 2, 2)."""

    means: np.ndarray
    sizes: tuple
    s2: np.ndarray

    @classmethod
    def from_members(cls, members, groups=None):
        """``members`` has shape (n, M, 2) or (M, 2)."""
        m = np.asarray(members, dtype=float)
        if m.ndim == 2:
            m = m[None]
        size = m.shape[1]
        if groups is None:
            groups = (size,)
        if sum(groups) != size or min(groups) < 1:
            raise ValueError("group sizes must be positive and sum to the member count")
        edges = np.cumsum((0,) + tuple(groups))
        means = np.stack([m[:, a:b].mean(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1)
        dev = m - m.mean(axis=1, keepdims=True)
        s2 = np.einsum("nki,nkj->nij", dev, dev) / max(size - 1, 1)
        return cls(means, tuple(groups), s2)

    def __len__(self):
        return self.means.shape[0]

    def subset(self, idx):
        return GroupedEnsemble2D(self.means[idx], self.sizes, self.s2[idx])


@dataclass(frozen=True)
class BiEmosCoefficients:
    A: np.ndarray  # (2,)
    B: np.ndarray  # (K, 2, 2)
    C: np.ndarray  # (2, 2) lower triangular
    D: np.ndarray  # (2, 2)

    @property
    def n_params(self):
        return 2 + 4 * self.B.shape[0] + 3 + 4

    def to_vector(self):
        c = self.C
        return np.concatenate([self.A, self.B.ravel(), [c[0, 0], c[1, 0], c[1, 1]], self.D.ravel()])

    @classmethod
    def from_vector(cls, v, k=1):
        v = np.asarray(v, dtype=float)
        a = v[:2].copy()
        b = v[2 : 2 + 4 * k].reshape(k, 2, 2).copy()
        c11, c21, c22 = v[2 + 4 * k : 5 + 4 * k]
        c = np.array([[c11, 0.0], [c21, c22]])
        d = v[5 + 4 * k : 9 + 4 * k].reshape(2, 2).copy()
        return cls(a, b, c, d)

    @classmethod
    def identity(cls, k=1):
        b = np.repeat(np.eye(2)[None], k, axis=0)
        return cls(np.zeros(2), b, np.eye(2), np.eye(2))

    def to_dict(self):
        return {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(), "D": self.D.tolist()}

    @classmethod
    def from_dict(cls, d):
        c = np.asarray(d["C"], dtype=float)
        if c[0, 1] != 0.0:
            raise ValueError("C must be lower triangular")
        return cls(np.asarray(d["A"], float), np.asarray(d["B"], float), c, np.asarray(d["D"], float))


def _moments(v, g):
    """Mean (n, 2) and covariance entries (s11, s12, s22) for vector ``v``."""
    k = g.means.shape[1]
    a = v[:2]
    b = v[2 : 2 + 4 * k].reshape(k, 2, 2)
    c11, c21, c22 = v[2 + 4 * k : 5 + 4 * k]
    d11, d12, d21, d22 = v[5 + 4 * k : 9 + 4 * k]
    mu = a + np.einsum("kij,nkj->ni", b, g.means)
    s11, s12, s22 = g.s2[:, 0, 0], g.s2[:, 0, 1], g.s2[:, 1, 1]
    r1a, r1b = d11 * s11 + d12 * s12, d11 * s12 + d12 * s22
    r2a, r2b = d21 * s11 + d22 * s12, d21 * s12 + d22 * s22
    m11 = c11 * c11 + r1a * d11 + r1b * d12 + JITTER
    m12 = c11 * c21 + r1a * d21 + r1b * d22
    m22 = c21 * c21 + c22 * c22 + r2a * d21 + r2b * d22 + JITTER
    return mu, m11, m12, m22


def link_bivariate(coef, g):
    if coef.B.shape[0] != g.means.shape[1]:
        raise ValueError("coefficient count does not match group count")
    mu, m11, m12, m22 = _moments(coef.to_vector(), g)
    sigma = np.stack([np.stack([m11, m12], -1), np.stack([m12, m22], -1)], -2)
    return BivariateNormalLaw(mu, sigma)


def _nll(mu, m11, m12, m22, y):
    det = m11 * m22 - m12 * m12
    e1, e2 = y[..., 0] - mu[..., 0], y[..., 1] - mu[..., 1]
    quad = (m22 * e1 * e1 - 2.0 * m12 * e1 * e2 + m11 * e2 * e2) / det
    return _LOG_2PI + 0.5 * (np.log(det) + quad)


def nll_bivariate(law, obs):
    """Negative log density of a bivariate normal law at ``obs``."""
    s = np.asarray(law.sigma, dtype=float)
    np.linalg.cholesky(s)  # raises LinAlgError for a non-PD matrix
    return _nll(np.asarray(law.mu, float), s[..., 0, 0], s[..., 0, 1], s[..., 1, 1], np.asarray(obs, float))


def nll_and_gradient(v, g, obs):
    """Mean NLL over the batch and its gradient w.r.t. the parameter vector."""
    k = g.means.shape[1]
    mu, m11, m12, m22 = _moments(v, g)
    det = m11 * m22 - m12 * m12
    if np.any(det <= 0):
        return np.inf, np.zeros_like(v)
    n = obs.shape[0]
    e1, e2 = obs[:, 0] - mu[:, 0], obs[:, 1] - mu[:, 1]
    i11, i12, i22 = m22 / det, -m12 / det, m11 / det
    w1, w2 = i11 * e1 + i12 * e2, i12 * e1 + i22 * e2
    value = float(np.mean(_LOG_2PI + 0.5 * (np.log(det) + e1 * w1 + e2 * w2)))

    # dNLL/dSigma, symmetric
    g11, g12, g22 = 0.5 * (i11 - w1 * w1), 0.5 * (i12 - w1 * w2), 0.5 * (i22 - w2 * w2)
    grad = np.empty_like(v)
    grad[0], grad[1] = -w1.mean(), -w2.mean()
    w = np.stack([w1, w2], axis=1)
    grad[2 : 2 + 4 * k] = -np.einsum("ni,nkj->kij", w, g.means).ravel() / n
    c11, c21, c22 = v[2 + 4 * k : 5 + 4 * k]
    grad[2 + 4 * k] = 2.0 * np.mean(g11 * c11 + g12 * c21)
    grad[3 + 4 * k] = 2.0 * np.mean(g12 * c11 + g22 * c21)
    grad[4 + 4 * k] = 2.0 * np.mean(g22 * c22)
    d11, d12, d21, d22 = v[5 + 4 * k : 9 + 4 * k]
    s11, s12, s22 = g.s2[:, 0, 0], g.s2[:, 0, 1], g.s2[:, 1, 1]
    r1a, r1b = d11 * s11 + d12 * s12, d11 * s12 + d12 * s22
    r2a, r2b = d21 * s11 + d22 * s12, d21 * s12 + d22 * s22
    grad[5 + 4 * k] = 2.0 * np.mean(g11 * r1a + g12 * r2a)
    grad[6 + 4 * k] = 2.0 * np.mean(g11 * r1b + g12 * r2b)
    grad[7 + 4 * k] = 2.0 * np.mean(g12 * r1a + g22 * r2a)
    grad[8 + 4 * k] = 2.0 * np.mean(g12 * r1b + g22 * r2b)
    return value, grad


def fit_bivariate_emos(g, obs, init=None, min_cases=30, **opt):
    """Maximum-likelihood estimate of the bivariate EMOS coefficients."""
    obs = np.asarray(obs, dtype=float)
    if len(g) != obs.shape[0]:
        raise ValueError("ensemble and observation counts differ")
    if obs.shape[0] < min_cases:
        raise InsufficientDataError(f"{obs.shape[0]} training cases, need at least {min_cases}")
    k = g.means.shape[1]
    # centred group means decouple A from B; A is mapped back afterwards
    centre = g.means.mean(axis=0)
    gc = GroupedEnsemble2D(g.means - centre, g.sizes, g.s2)
    start = init or BiEmosCoefficients.identity(k)
    x0 = start.to_vector()
    x0[:2] = start.A + np.einsum("kij,kj->i", start.B, centre)

    def objective(v):
        return nll_and_gradient(v, gc, obs)

    res = minimize_smooth(objective, x0, **opt)
    coef = BiEmosCoefficients.from_vector(res.x, k)
    coef = BiEmosCoefficients(coef.A - np.einsum("kij,kj->i", coef.B, centre), coef.B, coef.C, coef.D)
    degenerate = bool(np.all(np.ptp(obs, axis=0) < 1e-12))
    return EmosFit(coef, res.fun, res.initial_fun, degenerate)


def sample_bivariate(law, n, rng):
    """``n`` draws per case via the Cholesky factor; shape (..., n, 2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lchol = law.cholesky()
    mu = np.asarray(law.mu, dtype=float)
    z = rng.standard_normal(mu.shape[:-1] + (n, 2))
    return mu[..., None, :] + np.einsum("...ij,...nj->...ni", lchol, z)
