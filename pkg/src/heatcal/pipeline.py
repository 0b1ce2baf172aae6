"""End-to-end runs: adjust, calibrate by three routes, derive indices, verify."""

import json
import warnings
import zlib
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import verify as vf
from .classify import SCHEMES, InsufficientTrainingData, categorical_crps, categorize, law_to_pmf, train_classifier
from .config import METHODS
from .data import Dataset, DataError, adjust_ensemble, consistency_clamp, orographic_correction, synth_generate
from .ecc import ecc_r_samples
from .emos_bi import GroupedEnsemble2D, fit_bivariate_emos, link_bivariate, sample_bivariate
from .emos_uni import (GevLaw, GroupedEnsemble, InsufficientDataError, NormalLaw, crps_ensemble, crps_gev,
                       crps_normal, fit_gev_emos, fit_normal_emos, link_gev, link_normal)
from .indices import heat_indices
from .optim import OptimizationError
from .training import GLOBAL, TrainingWindow, assemble_training, build_features, kmeans, schedule_lookup

INDEX_VARS = ("DI", "WBGTID")
ALL_VARS = ("T", "TD", "DI", "WBGTID")
SCORE_COLUMNS = ["method", "metric", "lead_days", "station_id", "valid_date", "value"]
PMF_COLUMNS = ["method", "lead_days", "station_id", "valid_date"] + [f"p{i}" for i in range(1, 7)]
PREDICTION_COLUMNS = ["method", "variable", "lead_days", "station_id", "valid_date", "law", "mu", "sigma", "xi", "rho"]

# cold fits get one restart; warm starts from the previous window stop earlier
COLD_OPT = dict(restarts=1, xatol=1e-4, fatol=1e-7, refine=False)
WARM_OPT = dict(restarts=0, xatol=1e-3, fatol=1e-6, refine=False)
BI_OPT = dict(gtol=1e-5, maxiter=300)
MLP_MIN_CASES = 100

# fitted coefficient set -> (schedule row, family, variable)
MODELS = {
    "normal_t": ("normal_t", "normal", "T"),
    "normal_td": ("normal_td", "normal", "TD"),
    "emos2d": ("emos2d", "bivariate", None),
    "gev_di": ("gev", "gev", "DI"),
    "gev_wbgtid": ("gev", "gev", "WBGTID"),
}
METHOD_MODELS = {"ecc": ("normal_t", "normal_td"), "emos2d": ("emos2d",), "gev": ("gev_di", "gev_wbgtid")}


def derived_rng(seed, *parts):
    """Independent stream for ``parts`` (purpose, method, date, ...)."""
    return np.random.default_rng([int(seed)] + [zlib.crc32(str(p).encode("utf-8")) for p in parts])


@dataclass
class LeadCube:
    """Orographically corrected raw ensembles at one lead, indexed by valid day."""

    lead: int
    members: dict
    mean: dict
    case_ok: np.ndarray
    clamped: float


def lead_cube(ds, lead, obs, orographic=True):
    li = ds.lead_index(lead)
    ns, nd = len(ds.stations), ds.days.size
    delta_e = np.broadcast_to(np.array([s.delta_e for s in ds.stations])[:, None], (ns, nd))
    members = {}
    for var in ("T", "TD"):
        arr = np.full(ds.fc[var].shape[:2] + ds.fc[var].shape[3:], np.nan)
        arr[:, lead:] = ds.fc[var][:, :-lead, li]
        members[var] = orographic_correction(arr, delta_e) if orographic else arr
    ok = np.all(np.isfinite(members["T"]) & np.isfinite(members["TD"]), axis=-1)
    clamped = float(np.mean(members["TD"][ok] > members["T"][ok])) if ok.any() else 0.0
    members["TD"] = consistency_clamp(members["T"], members["TD"])
    for var in INDEX_VARS:
        members[var] = np.full_like(members["T"], np.nan)
    if ok.any():
        di, wb = heat_indices(members["T"][ok], members["TD"][ok])
        members["DI"][ok], members["WBGTID"][ok] = di, wb
    mean = {var: members[var].mean(axis=-1) for var in ALL_VARS}
    case_ok = ok & np.isfinite(obs["T"]) & np.isfinite(obs["TD"])
    return LeadCube(lead, members, mean, case_ok, clamped)


@dataclass
class Forecast:
    """One method's forecasts for the scored stations of a single day."""

    rows: np.ndarray  # positions into the day's station list
    samples: dict = field(default_factory=dict)  # var -> (n, m)
    members: dict = field(default_factory=dict)  # var -> (n, K), for rank histograms
    laws: dict = field(default_factory=dict)  # var -> list of scalar laws
    pmf: dict = field(default_factory=dict)  # var -> (n, categories)
    joint: np.ndarray = None  # (n, m, 2)
    joint_members: np.ndarray = None  # (n, K, 2)


@dataclass
class RunResult:
    status: int
    summary: dict
    errors: list
    outputs: dict


@dataclass
class _LeadState:
    coef: dict
    mlp: dict


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in (x.tolist() if isinstance(x, np.ndarray) else x)]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    return x


class Pipeline:
    """Rolling calibration and scoring over the verification days.

    ``verify_only`` scores the supplied ensemble as-is under the name
    ``label``: no orographic shift, no training windows, every day with
    forecasts is verified.
    """

    def __init__(self, config, dataset, verify_only=False, label="raw"):
        self.cfg = config
        self.verify_only = verify_only
        self.label = label
        self.ds = dataset
        self.schedule = config.schedule()
        self.sid = [s.id for s in dataset.stations]
        self.ns = len(self.sid)
        self.k = dataset.n_members
        self.delta_e = np.array([s.delta_e for s in dataset.stations])
        self.static = np.array([[s.lat, s.lon, s.elev_station, s.elev_model] for s in dataset.stations])
        self.obs = {var: dataset.obs[var] for var in ALL_VARS}
        leads = config.leads if config.leads is not None else tuple(int(x) for x in dataset.leads)
        missing = sorted(set(leads) - set(int(x) for x in dataset.leads))
        if missing:
            raise DataError(f"leads {missing} not present in the forecasts")
        self.leads = leads
        self.methods = ("raw",) if verify_only else tuple(m for m in METHODS if m in config.methods)
        self.models = [m for meth in self.methods for m in METHOD_MODELS.get(meth, ())]

        self.rows, self.pmf_rows, self.pred_rows = [], [], []
        self.errors = []
        self.coefs = defaultdict(dict)
        self.hist = defaultdict(list)
        self.value = defaultdict(lambda: defaultdict(lambda: ([], [])))
        self.clamp = defaultdict(list)
        self._label_cache = {}
        self.vdays = self._verification_days()

    # -- bookkeeping -----------------------------------------------------------

    def date(self, v):
        return str(self.ds.days[v])

    def _error(self, stage, name, lead, v, where, kind, message):
        self.errors.append({"stage": stage, "name": name, "lead_days": int(lead),
                            "valid_date": self.date(v), "where": where, "kind": kind, "message": message})

    def _verification_days(self):
        cfg, nd = self.cfg, self.ds.days.size
        if self.verify_only:
            self.t0 = 0
            return np.arange(nd)
        t0 = 0 if cfg.training_start is None else self.ds.day_index(cfg.training_start)
        if not 0 <= t0 < nd:
            raise DataError("training_start lies outside the data")
        self.t0 = t0
        if cfg.verification_start is None:
            v0 = t0 + cfg.training_days + 2 * max(self.leads) - 1
        else:
            v0 = self.ds.day_index(cfg.verification_start)
        v1 = nd - 1 if cfg.verification_end is None else min(self.ds.day_index(cfg.verification_end), nd - 1)
        if v0 < t0 + cfg.training_days:
            raise DataError("verification starts inside the first training window")
        if v0 > v1:
            raise DataError("no verification days left after the first training window")
        return np.arange(v0, v1 + 1)

    def window(self, lead, v):
        days = TrainingWindow(v - lead + 1, self.cfg.training_days).days
        return days[days >= self.t0]

    # -- fitting -----------------------------------------------------------------

    def _labels(self, cube, v, n_clusters, window):
        key = (cube.lead, v, n_clusters)
        if key not in self._label_cache:
            w = window[window >= 0]
            ok = cube.case_ok[:, w]
            mt = np.where(ok, cube.mean["T"][:, w], np.nan)
            mtd = np.where(ok, cube.mean["TD"][:, w], np.nan)
            try:
                feats = build_features(self.obs["T"][:, w], self.obs["TD"][:, w], mt, mtd)
            except ValueError as exc:
                self._error("cluster", f"clusters {n_clusters}", cube.lead, v, "all", "data", str(exc))
                self._label_cache[key] = None
                return None
            k = min(n_clusters, self.ns)
            rng = derived_rng(self.cfg.seed, "kmeans", cube.lead, self.date(v), n_clusters)
            self._label_cache[key] = kmeans(feats, k, rng).labels
        return self._label_cache[key]

    def _groups(self, grouping, cube, v, window):
        if grouping.kind == "local":
            return [(self.sid[s], np.array([s]), grouping, None) for s in range(self.ns)]
        if grouping.kind == "clusters":
            labels = self._labels(cube, v, grouping.n_clusters, window)
            if labels is not None:
                tag = f"k{grouping.n_clusters}"
                return [(f"{tag}-{c}", np.flatnonzero(labels == c), grouping, labels) for c in np.unique(labels)]
        return [("global", np.arange(self.ns), GLOBAL, None)]

    def _fit(self, family, var, cube, cases, init):
        s, d = cases[:, 0], cases[:, 1]
        opt = WARM_OPT if init is not None else COLD_OPT
        if family == "normal":
            g = GroupedEnsemble.from_members(cube.members[var][s, d])
            return fit_normal_emos(g, self.obs[var][s, d], init=init, **opt)
        if family == "gev":
            g = GroupedEnsemble.from_members(cube.members[var][s, d])
            return fit_gev_emos(g, self.obs[var][s, d], init=init, scale=self.cfg.gev_scale, **opt)
        g = GroupedEnsemble2D.from_members(np.stack([cube.members["T"][s, d], cube.members["TD"][s, d]], -1))
        y = np.stack([self.obs["T"][s, d], self.obs["TD"][s, d]], -1)
        return fit_bivariate_emos(g, y, init=init, **BI_OPT)

    def refit(self, cube, v, state):
        self._label_cache.clear()
        window = self.window(cube.lead, v)
        for name in self.models:
            row, family, var = MODELS[name]
            if name == "emos2d":
                row = self.cfg.emos2d_schedule
            grouping = schedule_lookup(self.schedule, cube.lead, row)
            for gid, stations, grp, labels in self._groups(grouping, cube, v, window):
                cases = assemble_training(grp, int(stations[0]), TrainingWindow(v - cube.lead + 1, self.cfg.training_days),
                                          cube.case_ok, labels)
                cases = cases[cases[:, 1] >= self.t0]
                init = state.coef[name][stations[0]]
                try:
                    fit = self._fit(family, var, cube, cases, init)
                except InsufficientDataError as exc:
                    self._error("fit", name, cube.lead, v, gid, "data", str(exc))
                    continue
                except (OptimizationError, np.linalg.LinAlgError) as exc:
                    self._error("fit", name, cube.lead, v, gid, "numerical", str(exc))
                    continue
                for s in stations:
                    state.coef[name][s] = fit.coef
                entry = fit.coef.to_dict()
                entry.update(objective=fit.objective, n_cases=int(len(cases)), grouping=str(grouping))
                self.coefs[f"{name}|{gid}|{cube.lead}"][self.date(v)] = entry

    def mlp_features(self, cube, s, d, error_days):
        t, td = cube.members["T"][s, d], cube.members["TD"][s, d]
        k = t.shape[-1]
        mt, mtd = t.mean(-1), td.mean(-1)
        cov = ((t - mt[:, None]) * (td - mtd[:, None])).sum(-1) / (k - 1)
        cols = [mt, mtd, t.var(-1, ddof=1), td.var(-1, ddof=1), cov] + list(self.static[s].T)
        for q in range(error_days):
            dd = d - cube.lead - q  # most recent verified valid days at this lead
            inside = dd >= 0
            ddc = np.where(inside, dd, 0)
            for var in ("T", "TD"):
                err = cube.mean[var][s, ddc] - self.obs[var][s, ddc]
                cols.append(np.where(inside, err, np.nan))
        return np.stack(cols, axis=-1)

    def retrain_mlp(self, cube, v, state):
        window = self.window(cube.lead, v)
        window = window[window >= 0]
        si, di = np.nonzero(cube.case_ok[:, window])
        s, d = si, window[di]
        for var in INDEX_VARS:
            scheme = SCHEMES[var]
            mcfg = schedule_lookup(self.schedule, cube.lead, f"mlp_{var.lower()}")
            mcfg = replace(mcfg, epochs=self.cfg.mlp_epochs)
            x = self.mlp_features(cube, s, d, mcfg.error_days)
            keep = np.all(np.isfinite(x), axis=1) & np.isfinite(self.obs[var][s, d])
            labels = categorize(self.obs[var][s, d][keep], scheme)
            rng = derived_rng(self.cfg.seed, "mlp", var, cube.lead, self.date(v))
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    model = train_classifier(x[keep], labels, scheme.n_categories, mcfg, rng, MLP_MIN_CASES)
            except InsufficientTrainingData as exc:
                self._error("mlp", f"mlp_{var.lower()}", cube.lead, v, "global", "data", str(exc))
                continue
            for w in caught:
                self._error("mlp", f"mlp_{var.lower()}", cube.lead, v, "global", "warning", str(w.message))
            state.mlp[var] = (model, mcfg.error_days)

    # -- forecasts ---------------------------------------------------------------

    def _with_indices(self, fc, t, td):
        di, wb = heat_indices(t, td)
        fc.samples.update(T=t, TD=td, DI=di, WBGTID=wb)
        k = self.k
        for var in ALL_VARS:
            fc.members[var] = fc.samples[var][:, :k]
        fc.joint = np.stack([t, td], -1)
        fc.joint_members = fc.joint[:, :k]
        return fc

    def fc_raw(self, cube, v, st, state):
        fc = Forecast(np.arange(st.size))
        return self._with_indices(fc, cube.members["T"][st, v], cube.members["TD"][st, v])

    def fc_adjusted(self, cube, v, st, state):
        t, td = [], []
        for s in st:
            rng = derived_rng(self.cfg.seed, "adjust", self.date(v), cube.lead, self.sid[s])
            at = adjust_ensemble(cube.members["T"][s, v], self.delta_e[s], rng)
            atd = adjust_ensemble(cube.members["TD"][s, v], self.delta_e[s], rng)
            self.clamp["adjusted"].append(float(np.mean(atd > at)))
            t.append(at)
            td.append(consistency_clamp(at, atd))
        return self._with_indices(Forecast(np.arange(st.size)), np.array(t), np.array(td))

    def _has(self, state, names, s):
        return all(state.coef[n][s] is not None for n in names)

    def fc_ecc(self, cube, v, st, state):
        rows, t, td, lt, ltd = [], [], [], [], []
        for i, s in enumerate(st):
            if not self._has(state, ("normal_t", "normal_td"), s):
                continue
            raw_t, raw_td = cube.members["T"][s, v], cube.members["TD"][s, v]
            laws = []
            for name, raw in (("normal_t", raw_t), ("normal_td", raw_td)):
                law = link_normal(state.coef[name][s], GroupedEnsemble.from_members(raw[None]))
                laws.append(NormalLaw(float(law.mu[0]), float(law.sigma[0])))
            rng = derived_rng(self.cfg.seed, "ecc", self.date(v), cube.lead, self.sid[s])
            st_, sd_ = ecc_r_samples(laws[0], laws[1], raw_t, raw_td, self.cfg.ecc_replicates, rng, clamp=False)
            self.clamp["ecc"].append(float(np.mean(sd_ > st_)))
            rows.append(i)
            t.append(st_.ravel())
            td.append(consistency_clamp(st_, sd_).ravel())
            lt.append(laws[0])
            ltd.append(laws[1])
        if not rows:
            return None
        fc = self._with_indices(Forecast(np.array(rows)), np.array(t), np.array(td))
        fc.laws.update(T=lt, TD=ltd)
        return fc

    def fc_emos2d(self, cube, v, st, state):
        rows, t, td, lt, ltd, rho = [], [], [], [], [], []
        for i, s in enumerate(st):
            if not self._has(state, ("emos2d",), s):
                continue
            pair = np.stack([cube.members["T"][s, v], cube.members["TD"][s, v]], -1)
            law = link_bivariate(state.coef["emos2d"][s], GroupedEnsemble2D.from_members(pair))
            rng = derived_rng(self.cfg.seed, "emos2d", self.date(v), cube.lead, self.sid[s])
            draw = sample_bivariate(law, self.cfg.es_samples, rng)[0]
            self.clamp["emos2d"].append(float(np.mean(draw[:, 1] > draw[:, 0])))
            rows.append(i)
            t.append(draw[:, 0])
            td.append(np.minimum(draw[:, 1], draw[:, 0]))
            mu, sig = law.mu[0], law.sigma[0]
            lt.append(NormalLaw(float(mu[0]), float(np.sqrt(sig[0, 0]))))
            ltd.append(NormalLaw(float(mu[1]), float(np.sqrt(sig[1, 1]))))
            rho.append(float(sig[0, 1] / np.sqrt(sig[0, 0] * sig[1, 1])))
        if not rows:
            return None
        fc = self._with_indices(Forecast(np.array(rows)), np.array(t), np.array(td))
        fc.laws.update(T=lt, TD=ltd)
        fc.rho = rho
        return fc

    def fc_gev(self, cube, v, st, state):
        rows = [i for i, s in enumerate(st) if self._has(state, ("gev_di", "gev_wbgtid"), s)]
        if not rows:
            return None
        fc = Forecast(np.array(rows))
        for var, name in (("DI", "gev_di"), ("WBGTID", "gev_wbgtid")):
            laws = []
            for i in rows:
                s = st[i]
                law = link_gev(state.coef[name][s], GroupedEnsemble.from_members(cube.members[var][s, v][None]))
                laws.append(GevLaw(float(law.mu[0]), float(law.sigma[0]), law.xi))
            fc.laws[var] = laws
        return fc

    def fc_mlp(self, cube, v, st, state):
        if any(state.mlp.get(var) is None for var in INDEX_VARS):
            return None
        fc = Forecast(np.arange(st.size))
        d = np.full(st.size, v)
        for var in INDEX_VARS:
            model, error_days = state.mlp[var]
            x = self.mlp_features(cube, st, d, error_days)
            good = np.all(np.isfinite(x), axis=1)
            if not good.all():
                fc.rows = fc.rows[good[fc.rows]]
            p = np.full((st.size, SCHEMES[var].n_categories), np.nan)
            p[good] = model.predict(x[good])
            fc.pmf[var] = p
        for var in INDEX_VARS:
            fc.pmf[var] = fc.pmf[var][fc.rows]
        return fc if fc.rows.size else None

    # -- scoring -----------------------------------------------------------------

    def _emit(self, method, metric, lead, ids, date, values):
        method = self.label if method == "raw" else method
        for sid, val in zip(ids, np.asarray(values, dtype=float)):
            self.rows.append((method, metric, lead, sid, date, float(val)))

    def score(self, method, fc, cube, v, st):
        lead, date = cube.lead, self.date(v)
        stations = st[fc.rows]
        ids = [self.sid[s] for s in stations]
        obs = {var: self.obs[var][stations, v] for var in ALL_VARS}
        rng = derived_rng(self.cfg.seed, "ranks", method, date, lead)

        for var in ALL_VARS:
            thr = self.cfg.thresholds.get(var)
            laws = fc.laws.get(var)
            samples = fc.samples.get(var)
            pmf = fc.pmf.get(var)
            if laws is None and samples is None and pmf is None:
                continue
            if laws is not None:
                crps_fn = crps_normal if isinstance(laws[0], NormalLaw) else crps_gev
                self._emit(method, f"crps_{var}", lead, ids, date, [crps_fn(l, y) for l, y in zip(laws, obs[var])])
                self.hist[(method, var, lead, "pit")].append([float(l.cdf(y)) for l, y in zip(laws, obs[var])])
                for l, sid in zip(laws, ids):
                    p = (float(l.mu), float(l.sigma), float(getattr(l, "xi", np.nan)))
                    self.pred_rows.append((method, var, lead, sid, date, type(l).__name__[:-3].lower()) + p
                                          + (np.nan,))
            elif samples is not None:
                self._emit(method, f"crps_{var}", lead, ids, date, crps_ensemble(samples, obs[var]))
                self.hist[(method, var, lead, "pit")].append(vf.ensemble_pit(samples, obs[var], rng))
            if samples is not None:
                self.hist[(method, var, lead, "rank")].append(vf.rank_of_obs(fc.members[var], obs[var], rng))
            if var not in INDEX_VARS:
                continue

            scheme = SCHEMES[var]
            observed = categorize(obs[var], scheme)
            if pmf is None:
                if laws is not None:
                    pmf = np.array([law_to_pmf(l, scheme) for l in laws])
                else:
                    pmf = law_to_pmf(samples, scheme)
            self._emit(method, f"ccrps_{var}", lead, ids, date, categorical_crps(pmf, observed))
            for sid, p in zip(ids, pmf):
                self.pmf_rows.append((var, method, lead, sid, date) + tuple(float(x) for x in p))

            if laws is not None:
                f_thr = np.array([float(l.cdf(thr)) for l in laws])
                p_event = 1.0 - f_thr
                tw = [vf.tw_crps(l, y, thr) for l, y in zip(laws, obs[var])]
            elif samples is not None:
                f_thr = np.mean(samples <= thr, axis=-1)
                p_event = np.mean(samples >= thr, axis=-1)
                tw = vf.tw_crps(samples, obs[var], thr)
            else:
                tw = None
                if thr not in scheme.thresholds:
                    continue
                cut = categorize(thr, scheme) - 1  # first category at or above the threshold
                p_event = pmf[:, cut:].sum(axis=1)
                f_thr = np.clip(1.0 - p_event, 0.0, 1.0)
            self._emit(method, f"bs_{var}", lead, ids, date, vf.brier_score(np.clip(f_thr, 0.0, 1.0), obs[var], thr))
            if tw is not None:
                self._emit(method, f"twcrps_{var}", lead, ids, date, tw)
            events = obs[var] >= thr
            for sid, p, e in zip(ids, p_event, events):
                probs, evs = self.value[(method, var, lead)][sid]
                probs.append(float(p))
                evs.append(bool(e))

        if fc.joint is not None:
            y = np.stack([obs["T"], obs["TD"]], -1)
            self._emit(method, "es_TTD", lead, ids, date, vf.energy_score(fc.joint, y))
            for how in ("average", "multivariate"):
                self.hist[(method, "TTD", lead, f"mv_{how}")].append(
                    vf.multivariate_ranks(fc.joint_members, y, how, rng))
        if method == "emos2d":
            # margins are listed under T and TD; this row carries the correlation
            for sid, r in zip(ids, fc.rho):
                self.pred_rows.append((method, "TTD", lead, sid, date, "bivariate_normal",
                                       np.nan, np.nan, np.nan, r))

    # -- driver ------------------------------------------------------------------

    def run(self):
        for lead in self.leads:
            cube = lead_cube(self.ds, lead, self.obs, orographic=not self.verify_only)
            self.clamp["raw"].append(cube.clamped)
            state = _LeadState({name: [None] * self.ns for name in self.models}, {})
            for j, v in enumerate(self.vdays):
                if j % self.cfg.refit_every == 0 and self.models:
                    self.refit(cube, v, state)
                if "mlp" in self.methods and j % self.cfg.mlp_retrain_every == 0:
                    self.retrain_mlp(cube, v, state)
                st = np.flatnonzero(cube.case_ok[:, v])
                if st.size == 0:
                    continue
                for method in self.methods:
                    fc = getattr(self, f"fc_{method}")(cube, v, st, state)
                    if fc is not None:
                        self.score(method, fc, cube, v, st)
        return self

    # -- outputs -------------------------------------------------------------------

    def score_frame(self):
        df = pd.DataFrame(self.rows, columns=SCORE_COLUMNS)
        order = {m: i for i, m in enumerate(METHODS)}
        df["_m"] = df["method"].map(order).fillna(len(order))
        df = df.sort_values(["_m", "metric", "lead_days", "station_id", "valid_date"], kind="stable")
        return df.drop(columns="_m").reset_index(drop=True)

    def summary(self, scores):
        cfg = self.cfg
        out = {"config": cfg.to_dict(), "notices": list(cfg.notices),
               "dataset": {"n_stations": self.ns, "n_members": self.k,
                           "verification_start": self.date(self.vdays[0]),
                           "verification_end": self.date(self.vdays[-1]), "leads": list(self.leads)}}
        table = {}
        ref = cfg.reference
        for (metric, lead), grp in scores.groupby(["metric", "lead_days"], sort=True):
            wide = grp.pivot_table(index=["station_id", "valid_date"], columns="method", values="value",
                                   aggfunc="first")
            for method in wide.columns:
                col = wide[method].dropna()
                series = {sid: g.to_numpy() for sid, g in col.groupby(level=0)}
                rng = derived_rng(cfg.seed, "bootstrap", method, metric, lead)
                lo, hi = vf.bootstrap_ci(series, np.mean, cfg.n_boot, rng)
                entry = {"mean": float(col.mean()), "n": int(col.size), "ci95": [lo, hi]}
                if ref in wide.columns and method != ref:
                    both = wide[[method, ref]].dropna()
                    if len(both) and both[ref].mean() != 0:
                        entry["skill"] = vf.skill_score(both[method].mean(), both[ref].mean())
                        a = {sid: g[method].to_numpy() for sid, g in both.groupby(level=0)}
                        b = {sid: g[ref].to_numpy() for sid, g in both.groupby(level=0)}
                        entry["significant_fraction"] = vf.station_significance(a, b).fraction
                table.setdefault(method, {}).setdefault(metric, {})[str(lead)] = entry
        out["scores"] = table
        out["skill_reference"] = ref

        hists = {}
        for (method, var, lead, kind), parts in sorted(self.hist.items()):
            vals = np.concatenate([np.atleast_1d(np.asarray(p)) for p in parts])
            if kind == "pit":
                h = vf.pit_histogram(vals, cfg.pit_bins)
            else:
                h = vf.rank_histogram(vals, self.k)
            hists.setdefault(method, {}).setdefault(var, {}).setdefault(kind, {})[str(lead)] = {
                "counts": h.counts.tolist(), "reliability": h.reliability,
                "chi2_pvalue": vf.uniformity_pvalue(h.counts)}
        out["histograms"] = hists

        curves = {"cl_ratios": vf.CL_GRID.tolist()}
        for (method, var, lead), per_station in sorted(self.value.items()):
            sids = sorted(per_station)
            curve = vf.value_curve([np.array(per_station[s][0]) for s in sids],
                                   [np.array(per_station[s][1]) for s in sids])
            curves.setdefault(method, {}).setdefault(var, {})[str(lead)] = curve.values.tolist()
        out["value_curves"] = curves
        out["clamp_fraction"] = {m: float(np.mean(v)) for m, v in sorted(self.clamp.items()) if v}
        kinds = defaultdict(int)
        for e in self.errors:
            kinds[e["kind"]] += 1
        out["errors"] = dict(kinds)
        out["partial"] = bool(kinds.get("data") or kinds.get("numerical"))
        return _clean(out)

    def write(self, directory, artifacts=None):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        want = set(artifacts or ("scores", "summary", "pmf", "coefficients", "predictions", "errors"))
        paths = {}
        scores = self.score_frame()
        summary = self.summary(scores)
        if "scores" in want:
            paths["scores"] = d / "scores.csv"
            scores.to_csv(paths["scores"], index=False)
        if "summary" in want:
            paths["summary"] = d / "summary.json"
            paths["summary"].write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        if "pmf" in want:
            pmf = pd.DataFrame(self.pmf_rows)
            for var in INDEX_VARS:
                path = d / f"category_pmf_{var}.csv"
                sub = pmf[pmf[0] == var].iloc[:, 1:] if len(pmf) else pd.DataFrame()
                sub = sub.reindex(columns=range(1, 11))
                sub.columns = PMF_COLUMNS
                sub = sub.sort_values(PMF_COLUMNS[:4], kind="stable")
                sub.to_csv(path, index=False)
                paths[f"pmf_{var}"] = path
        if "coefficients" in want:
            paths["coefficients"] = d / "coefficients.json"
            paths["coefficients"].write_text(json.dumps(_clean(self.coefs), sort_keys=True, indent=1) + "\n",
                                             encoding="utf-8")
        if "predictions" in want:
            paths["predictions"] = d / "predictions.csv"
            pred = pd.DataFrame(self.pred_rows, columns=PREDICTION_COLUMNS)
            pred.sort_values(PREDICTION_COLUMNS[:5], kind="stable").to_csv(paths["predictions"], index=False)
        if "errors" in want:
            paths["errors"] = d / "errors.json"
            paths["errors"].write_text(json.dumps(self.errors, indent=1) + "\n", encoding="utf-8")
        return summary, paths


def adjusted_dataset(ds, seed):
    """Orographically corrected, perturbed and clamped copy of ``ds``.

    Uses the same random streams as the ``adjusted`` method, so verifying the
    result reproduces that method's scores.
    """
    fc = {var: np.full_like(ds.fc["T"], np.nan) for var in ALL_VARS}
    delta_e = np.array([s.delta_e for s in ds.stations])
    for li, lead in enumerate(ds.leads):
        for s, st in enumerate(ds.stations):
            for d in range(ds.days.size - int(lead)):
                t = orographic_correction(ds.fc["T"][s, d, li], delta_e[s])
                td = orographic_correction(ds.fc["TD"][s, d, li], delta_e[s])
                if not (np.all(np.isfinite(t)) and np.all(np.isfinite(td))):
                    continue
                rng = derived_rng(seed, "adjust", str(ds.days[d + int(lead)]), int(lead), st.id)
                at = adjust_ensemble(t, delta_e[s], rng)
                atd = consistency_clamp(at, adjust_ensemble(td, delta_e[s], rng))
                fc["T"][s, d, li], fc["TD"][s, d, li] = at, atd
                fc["DI"][s, d, li], fc["WBGTID"][s, d, li] = heat_indices(at, atd)
    obs = {var: ds.obs[var] for var in ("T", "TD") if var in ds.obs}
    out = Dataset(list(ds.stations), ds.days.copy(), ds.leads.copy(), fc, obs)
    out.complete_observations()
    return out


def load_dataset(config):
    if config.data_dir is not None:
        return Dataset.load(config.data_dir)
    return synth_generate(config.synth_config())


def run_pipeline(config, dataset=None, artifacts=None):
    """Run every enabled method and write the artifacts to ``config.output_dir``.

    Status is 3 when a numerical failure occurred, else 0; data problems
    (e.g. too few training cases) are reported and flagged as partial.
    """
    ds = dataset if dataset is not None else load_dataset(config)
    pipe = Pipeline(config, ds).run()
    summary, paths = pipe.write(config.output_dir, artifacts)
    status = 3 if any(e["kind"] == "numerical" for e in pipe.errors) else 0
    return RunResult(status, summary, pipe.errors, paths)
