"""Training-set selection: rolling windows, station clustering, schedules."""

import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .classify import MlpConfig

MAX_LEAD = 15
QUANTILE_LEVELS = np.arange(0.05, 1.0, 0.1)


class ScheduleError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


# -- groupings and schedules -------------------------------------------------


@dataclass(frozen=True)
class Grouping:
    kind: str  # "local", "clusters" or "global"
    n_clusters: int = 0

    def __post_init__(self):
        if self.kind not in ("local", "clusters", "global"):
            raise ValueError(f"unknown grouping {self.kind!r}")
        if self.kind == "clusters" and self.n_clusters < 1:
            raise ValueError("clusters grouping needs n_clusters >= 1")

    def __str__(self):
        return f"clusters {self.n_clusters}" if self.kind == "clusters" else self.kind


LOCAL = Grouping("local")
GLOBAL = Grouping("global")


def _parse_config(tokens):
    if tokens == ["local"]:
        return LOCAL
    if tokens == ["global"]:
        return GLOBAL
    if len(tokens) == 2 and tokens[0] == "clusters" and tokens[1].isdigit():
        return Grouping("clusters", int(tokens[1]))
    if len(tokens) == 4 and tokens[0] in ("single", "dual") and tokens[2] == "errors":
        hidden = tuple(int(h) for h in tokens[1].split("-"))
        if (tokens[0] == "dual") != (len(hidden) == 2) or not tokens[3].isdigit():
            raise ValueError("malformed MLP configuration")
        return MlpConfig(hidden=hidden, net=tokens[0], error_days=int(tokens[3]))
    raise ValueError(f"cannot parse configuration {' '.join(tokens)!r}")


def parse_schedule(text, require_all_leads=True):
    """Parse ``model leads configuration`` lines into ``{model: {lead: cfg}}``.

    Problems are collected with their line numbers and raised together.
    """
    schedule, problems = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            problems.append(f"line {lineno}: expected 'model leads configuration'")
            continue
        model, leads = parts[0], parts[1]
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", leads)
        if not m:
            problems.append(f"line {lineno}: bad lead range {leads!r}")
            continue
        lo, hi = int(m.group(1)), int(m.group(2) or m.group(1))
        if lo < 1 or hi > MAX_LEAD or lo > hi:
            problems.append(f"line {lineno}: lead range {leads} outside 1-{MAX_LEAD}")
            continue
        try:
            cfg = _parse_config(parts[2:])
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
            continue
        table = schedule.setdefault(model, {})
        for lead in range(lo, hi + 1):
            if lead in table:
                problems.append(f"line {lineno}: lead {lead} of {model} mapped twice")
            table[lead] = cfg
    if require_all_leads:
        for model, table in schedule.items():
            missing = sorted(set(range(1, MAX_LEAD + 1)) - set(table))
            if missing:
                problems.append(f"{model}: leads {missing} not mapped")
    if problems:
        raise ScheduleError(problems)
    return schedule


def default_schedule():
    text = resources.files("heatcal").joinpath("default_schedules.txt").read_text(encoding="utf-8")
    return parse_schedule(text)


def schedule_lookup(schedule, lead, model):
    if not 1 <= lead <= MAX_LEAD:
        raise KeyError(f"lead {lead} outside 1-{MAX_LEAD}")
    try:
        return schedule[model][lead]
    except KeyError:
        raise KeyError(f"no configuration for {model} at lead {lead}") from None


# -- rolling windows -----------------------------------------------------------


@dataclass(frozen=True)
class TrainingWindow:
    target_day: int
    length_days: int = 60

    @property
    def days(self):
        """Day indices strictly preceding the target day."""
        return np.arange(self.target_day - self.length_days, self.target_day)


# -- station features --------------------------------------------------------------


def station_features(obs_t, obs_td, err_t, err_td):
    """Unstandardised 40-vector: 10 quantiles each of T/TD observations and errors."""
    blocks = []
    for x in (obs_t, err_t, obs_td, err_td):
        x = np.asarray(x, dtype=float)
        x = x[np.isfinite(x)]
        if x.size == 0:
            raise ValueError("insufficient data for station features")
        blocks.append(np.quantile(x, QUANTILE_LEVELS))
    return np.concatenate(blocks)


def standardize(features):
    """Zero-mean, unit-variance columns; constant columns become zero."""
    f = np.asarray(features, dtype=float)
    sd = f.std(axis=0)
    out = np.zeros_like(f)
    ok = sd > 0
    out[:, ok] = (f[:, ok] - f[:, ok].mean(axis=0)) / sd[ok]
    return out


def build_features(obs_t, obs_td, mean_t, mean_td):
    """Standardised feature matrix from (station, case) arrays with NaN gaps.

    Errors are ensemble mean minus observation.
    """
    rows = [station_features(obs_t[i], obs_td[i], mean_t[i] - obs_t[i], mean_td[i] - obs_td[i])
            for i in range(obs_t.shape[0])]
    return standardize(np.vstack(rows))


# -- k-means -------------------------------------------------------------------------


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int
    history: tuple


def _sq_dist(x, c):
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)


def _plus_plus(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iter):
    k = centers.shape[0]
    history = []
    labels = None
    for it in range(1, max_iter + 1):
        d2 = _sq_dist(x, centers)
        new_labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(x.shape[0]), new_labels].sum())
        history.append(inertia)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                # re-seed from the point farthest from its own centre
                far = int(np.argmax(((x - centers[labels]) ** 2).sum(axis=1)))
                centers[j] = x[far]
                labels = labels.copy()
                labels[far] = j
        if len(history) > 1:
            assert history[-1] <= history[-2] * (1 + 1e-12) + 1e-12, "k-means inertia increased"
    return labels, centers, history[-1], it, tuple(history)


def kmeans(x, k, rng, n_init=5, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` restarts."""
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= x.shape[0]:
        raise ValueError("k must lie between 1 and the number of points")
    best = None
    for _ in range(n_init):
        labels, centers, inertia, n_iter, hist = _lloyd(x, _plus_plus(x, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, centers, inertia, n_iter, hist)
    return best


# -- training sets ---------------------------------------------------------------------


def training_stations(grouping, station, labels=None, n_stations=None):
    """Indices of the stations whose cases train the model for ``station``."""
    if grouping.kind == "local":
        return np.array([station])
    if grouping.kind == "global":
        n = n_stations if n_stations is not None else len(labels)
        return np.arange(n)
    if labels is None:
        raise ValueError("clusters grouping needs cluster labels")
    labels = np.asarray(labels)
    return np.flatnonzero(labels == labels[station])


def assemble_training(grouping, station, window, available, labels=None):
    """(station, day) pairs of the training cases for ``station``.

    ``available`` is a boolean (station, day) mask of complete cases.
    """
    stations = training_stations(grouping, station, labels, available.shape[0])
    days = window.days
    days = days[(days >= 0) & (days < available.shape[1])]
    sub = available[np.ix_(stations, days)]
    si, di = np.nonzero(sub)
    return np.stack([stations[si], days[di]], axis=1)
