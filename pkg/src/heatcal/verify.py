"""Verification scores, calibration histograms and economic value."""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .emos_uni import crps_ensemble

CL_GRID = np.round(np.arange(1, 100) / 100.0, 2)


# -- proper scores -------------------------------------------------------------


def energy_score(sample, obs):
    """Energy score of a sample (..., m, d) against observations (..., d)."""
    x = np.asarray(sample, dtype=float)
    y = np.asarray(obs, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError("sample and observation dimensions differ")
    m = x.shape[-2]
    term1 = np.linalg.norm(x - y[..., None, :], axis=-1).mean(axis=-1)
    pair = np.zeros(x.shape[:-2])
    # row blocks keep the pairwise distance array small for large samples
    step = max(1, 250_000 // max(m, 1))
    for a in range(0, m, step):
        blk = x[..., a : a + step, None, :] - x[..., None, :, :]
        pair = pair + np.sqrt((blk * blk).sum(axis=-1)).sum(axis=(-1, -2))
    return term1 - pair / (2.0 * m * m)


def brier_score(f_at_y, obs, y):
    """``(F(y) - 1{y >= obs})^2`` for a non-exceedance probability F(y)."""
    f = np.asarray(f_at_y, dtype=float)
    if np.any((f < 0) | (f > 1)):
        raise ValueError("probability outside [0, 1]")
    return (f - (np.asarray(y) >= np.asarray(obs))) ** 2


_SPLIT_PROBS = np.array([1e-11, 1e-9, 1e-7, 1e-5, 1e-3, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999,
                         1 - 1e-5, 1 - 1e-7, 1 - 1e-9, 1 - 1e-11])


def _quad_split(fn, a, b, law):
    """Integrate over [a, b] in pieces cut at quantiles of ``law``."""
    if b <= a:
        return 0.0
    cuts = np.asarray(law.ppf(_SPLIT_PROBS), dtype=float)
    cuts = cuts[(cuts > a) & (cuts < b)]
    edges = np.concatenate([[a], cuts, [b]])
    return sum(integrate.quad(fn, lo, hi, limit=200, epsabs=1e-12, epsrel=1e-11)[0]
               for lo, hi in zip(edges[:-1], edges[1:]))


def _tw_crps_law(law, x, r, eps=1e-13):
    lo, hi = float(law.ppf(eps)), float(law.ppf(1.0 - eps))
    x_eff = max(x, r)
    # below x_eff the integrand is F^2, above it (1 - F)^2
    total = _quad_split(lambda y: float(law.cdf(y)) ** 2, max(r, lo), x_eff, law)
    start = max(x_eff, lo)
    total += start - x_eff  # F vanishes below the lower support bound
    total += _quad_split(lambda y: (1.0 - float(law.cdf(y))) ** 2, start, hi, law)
    return total


def tw_crps(forecast, obs, r):
    """Threshold-weighted CRPS with weight ``1{y >= r}``.

    ``forecast`` is a law (scalar parameters; adaptive quadrature) or a
    sample array with members on the last axis (exact: the CRPS of the
    sample and observation both censored below at ``r``).
    """
    if hasattr(forecast, "cdf"):
        return _tw_crps_law(forecast, float(obs), float(r))
    f = np.asarray(forecast, dtype=float)
    return crps_ensemble(np.maximum(f, r), np.maximum(np.asarray(obs, dtype=float), r))


def skill_score(mean_f, mean_ref):
    """``1 - mean_f / mean_ref`` (a perfect forecast scores zero)."""
    if mean_ref == 0:
        raise ZeroDivisionError("reference score is zero")
    return 1.0 - mean_f / mean_ref


# -- ranks and PIT -------------------------------------------------------------------


def _randomized_rank(n_below, n_tied, rng):
    """``1 + n_below + U`` with U uniform on {0, ..., n_tied}."""
    n_below = np.asarray(n_below)
    u = np.floor(rng.random(n_below.shape) * (np.asarray(n_tied) + 1)).astype(int)
    return 1 + n_below + u


def rank_of_obs(members, obs, rng):
    """Rank in 1..K+1 of the observation among the members, ties randomised."""
    m = np.asarray(members, dtype=float)
    x = np.asarray(obs, dtype=float)[..., None]
    r = _randomized_rank(np.sum(m < x, axis=-1), np.sum(m == x, axis=-1), rng)
    return int(r) if np.ndim(r) == 0 else r


def multivariate_ranks(members, obs, method, rng):
    """Multivariate rank of ``obs`` (..., d) among ``members`` (..., m, d).

    ``method="average"`` averages per-margin ranks within the pooled set;
    ``method="multivariate"`` uses pre-ranks counting componentwise
    domination.
    """
    m = np.asarray(members, dtype=float)
    y = np.asarray(obs, dtype=float)
    pooled = np.concatenate([y[..., None, :], m], axis=-2)  # obs first
    if pooled.shape[-1] < 2:
        raise ValueError("multivariate ranks need d >= 2")
    le = pooled[..., :, None, :] <= pooled[..., None, :, :]  # [i, j, c]: x_i <= x_j in margin c
    if method == "average":
        score = le.sum(axis=-3).mean(axis=-1)  # mean over margins of #{i: x_i <= x_j}
    elif method == "multivariate":
        score = le.all(axis=-1).sum(axis=-2)
    else:
        raise ValueError(f"unknown ranking method {method!r}")
    s0 = score[..., :1]
    rest = score[..., 1:]
    r = _randomized_rank(np.sum(rest < s0, axis=-1), np.sum(rest == s0, axis=-1), rng)
    return int(r) if np.ndim(r) == 0 else r


def pit_value(forecast, obs, rng):
    """PIT of a law or sample, randomised across jumps of a step CDF."""
    x = np.asarray(obs, dtype=float)
    if hasattr(forecast, "cdf"):
        return forecast.cdf(x)
    f = np.asarray(forecast, dtype=float)
    lo = np.mean(f < x[..., None], axis=-1)
    hi = np.mean(f <= x[..., None], axis=-1)
    return lo + rng.random(lo.shape) * (hi - lo)


def ensemble_pit(members, obs, rng):
    """Randomised-rank PIT ``(rank - 1 + U) / (m + 1)`` of an m-member sample.

    Uniform on (0, 1) when the observation is exchangeable with the members,
    unlike the step CDF at the observation, which only takes values k/m.
    """
    m = np.asarray(members).shape[-1]
    r = rank_of_obs(members, obs, rng)
    return (np.asarray(r) - 1 + rng.random(np.shape(r))) / (m + 1)


@dataclass(frozen=True)
class HistogramSummary:
    counts: np.ndarray
    reliability: float

    @property
    def n(self):
        return int(self.counts.sum())


def reliability_index(counts):
    """Sum of absolute deviations of bin frequencies from uniformity."""
    c = np.asarray(counts, dtype=float)
    n = c.sum()
    if n <= 0:
        raise ValueError("empty histogram")
    # |c_r B - n| is exact for integer counts, leaving a single rounding
    return float(np.abs(c * c.size - n).sum() / (n * c.size))


def rank_histogram(ranks, n_members):
    counts = np.bincount(np.asarray(ranks).ravel() - 1, minlength=n_members + 1)
    return HistogramSummary(counts, reliability_index(counts))


def pit_histogram(pits, bins=20):
    p = np.asarray(pits, dtype=float).ravel()
    idx = np.minimum((p * bins).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return HistogramSummary(counts, reliability_index(counts))


def uniformity_pvalue(counts):
    """Chi-square goodness-of-fit p-value against equal bin probabilities."""
    return float(stats.chisquare(np.asarray(counts, dtype=float)).pvalue)


# -- economic value ------------------------------------------------------------------


@dataclass(frozen=True)
class ContingencyTable:
    hits: int
    misses: int
    false_alarms: int
    correct_rejections: int

    def __post_init__(self):
        if min(self.hits, self.misses, self.false_alarms, self.correct_rejections) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def n(self):
        return self.hits + self.misses + self.false_alarms + self.correct_rejections

    @property
    def base_rate(self):
        return (self.hits + self.misses) / self.n


def contingency_table(probabilities, events, cl_ratio):
    """Table of Bayes decisions (act iff probability > C/L) against events."""
    act = np.asarray(probabilities, dtype=float) > cl_ratio
    ev = np.asarray(events, dtype=bool)
    return ContingencyTable(int(np.sum(act & ev)), int(np.sum(~act & ev)),
                            int(np.sum(act & ~ev)), int(np.sum(~act & ~ev)))


def mean_expenses(table, cl_ratio, base_rate=None):
    """(forecast, climatology, perfect) mean expenses with the loss set to one."""
    s = table.base_rate if base_rate is None else base_rate
    e_f = ((table.hits + table.false_alarms) * cl_ratio + table.misses) / table.n
    return e_f, min(cl_ratio, s), s * cl_ratio


def forecast_value(tables, cl_ratio, base_rates=None):
    """Value of forecasts for one cost-loss ratio.

    Expenses are computed per station and averaged before forming the
    ratio. Returns NaN when climatology is already perfect (no events or
    only events).
    """
    if not 0 < cl_ratio < 1:
        raise ValueError("cost-loss ratio must lie in (0, 1)")
    if isinstance(tables, ContingencyTable):
        tables = [tables]
        base_rates = None if base_rates is None else [base_rates]
    if base_rates is None:
        base_rates = [None] * len(tables)
    # expenses in count units (times n); forecast minus perfect expenses then only
    # involves the errors, so an error-free table gives exactly V = 1
    excess, room, n = [], [], []
    for t, s in zip(tables, base_rates):
        if s is None:
            events = t.hits + t.misses
            excess.append(t.false_alarms * cl_ratio + t.misses * (1.0 - cl_ratio))
            room.append(t.n * min(cl_ratio, events / t.n) - events * cl_ratio)
        else:
            e_f = (t.hits + t.false_alarms) * cl_ratio + t.misses
            excess.append(e_f - t.n * s * cl_ratio)
            room.append(t.n * (min(cl_ratio, s) - s * cl_ratio))
        n.append(t.n)
    excess, room, n = np.array(excess), np.array(room), np.array(n, dtype=float)
    w = np.ones_like(n) if np.all(n == n[0]) else n[0] / n
    denom = float(np.sum(w * room))
    if abs(denom) < 1e-12 * float(np.sum(w * n)):
        return float("nan")
    return float(np.sum(w * (room - excess)) / denom)


@dataclass(frozen=True)
class ValueCurve:
    cl_ratios: np.ndarray
    values: np.ndarray


def value_curve(probabilities, events, grid=CL_GRID):
    """Aggregated value over a C/L grid.

    ``probabilities`` and ``events`` are sequences with one array per
    station; each station uses its own sample base rate.
    """
    values = []
    for cl in grid:
        tables = [contingency_table(p, e, cl) for p, e in zip(probabilities, events) if len(e)]
        values.append(forecast_value(tables, cl))
    return ValueCurve(np.asarray(grid), np.asarray(values))


# -- significance and uncertainty ----------------------------------------------------


@dataclass(frozen=True)
class SignificanceSummary:
    fraction: float
    n_tested: int
    n_excluded: int


def station_significance(series_a, series_b, alpha=0.05, min_cases=5):
    """Fraction of stations where a paired t-test rejects equal mean scores.

    Inputs map station id to per-case score arrays aligned between the two
    methods. Stations with fewer than ``min_cases`` pairs are excluded.
    """
    rejected = tested = excluded = 0
    for sid in sorted(series_a):
        a = np.asarray(series_a[sid], dtype=float)
        b = np.asarray(series_b[sid], dtype=float)
        if a.size < min_cases:
            excluded += 1
            continue
        tested += 1
        d = a - b
        if np.ptp(d) == 0:
            rejected += int(d[0] != 0)
            continue
        if stats.ttest_rel(a, b).pvalue < alpha:
            rejected += 1
    return SignificanceSummary(rejected / tested if tested else float("nan"), tested, excluded)


def bootstrap_ci(series, statistic=np.mean, n_boot=1000, rng=None, level=0.95):
    """Percentile bootstrap resampling whole stations with replacement.

    ``series`` maps station id to an array of per-case values.
    """
    if n_boot < 200:
        raise ValueError("use at least 200 bootstrap replicates")
    rng = rng if rng is not None else np.random.default_rng(0)
    blocks = [np.asarray(series[k], dtype=float) for k in sorted(series)]
    n = len(blocks)
    if statistic is np.mean:
        # the mean of a resample only needs per-station sums and counts
        sums = np.array([b.sum() for b in blocks])
        counts = np.array([b.size for b in blocks], dtype=float)
        pick = rng.integers(0, n, (n_boot, n))
        stats_ = sums[pick].sum(axis=1) / counts[pick].sum(axis=1)
    else:
        stats_ = np.empty(n_boot)
        for b in range(n_boot):
            pick = rng.integers(0, n, n)
            stats_[b] = statistic(np.concatenate([blocks[i] for i in pick]))
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(stats_, [tail, 100.0 - tail])
    return float(lo), float(hi)
