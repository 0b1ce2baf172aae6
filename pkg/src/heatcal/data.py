"""Station/forecast data model, CSV I/O, ensemble adjustment and synthetic data.

Ensembles are held as arrays with members on the last axis. A
:class:`Dataset` stores everything as dense cubes indexed by
(station, init day, lead, member) with NaN for missing values.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import indices

LAPSE_RATE = 0.0065  # degC per metre
VARIABLES = ("T", "TD", "DI", "WBGTID")

STATION_COLUMNS = ["station_id", "lat", "lon", "elev_station", "elev_model"]
FORECAST_COLUMNS = ["station_id", "init_date", "lead_days", "variable", "member_index", "value"]
OBSERVATION_COLUMNS = ["station_id", "valid_date", "variable", "value"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class StationRecord:
    id: str
    lat: float
    lon: float
    elev_station: float
    elev_model: float

    @property
    def delta_e(self):
        """Model-grid minus station elevation (m)."""
        return self.elev_model - self.elev_station

    def check_bounds(self, lat_range=(35.0, 65.0), lon_range=(-12.5, 42.5)):
        if not (lat_range[0] <= self.lat <= lat_range[1] and lon_range[0] <= self.lon <= lon_range[1]):
            raise DataError(f"station {self.id} outside the configured domain")


@dataclass(frozen=True)
class EnsembleForecast:
    station_id: str
    init_date: np.datetime64
    lead_days: int
    variable: str
    members: np.ndarray

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise DataError(f"unknown variable {self.variable!r}")
        if not 1 <= self.lead_days <= 15:
            raise DataError("lead_days must lie in [1, 15]")
        m = np.asarray(self.members, dtype=float)
        if m.ndim != 1 or m.size < 2 or not np.all(np.isfinite(m)):
            raise DataError("an ensemble needs at least two finite members")

    def replace_members(self, members, variable=None):
        return EnsembleForecast(self.station_id, self.init_date, self.lead_days,
                                variable or self.variable, np.asarray(members, dtype=float))


@dataclass(frozen=True)
class Observation:
    station_id: str
    valid_date: np.datetime64
    variable: str
    value: float


@dataclass(frozen=True)
class ClimatologyStats:
    mean: float
    variance: float
    skewness: float
    n: int

    @property
    def skewness_defined(self):
        return bool(np.isfinite(self.skewness))


# -- ensemble transforms -----------------------------------------------------


def orographic_correction(members, delta_e):
    """Shift members by ``LAPSE_RATE * delta_e`` (delta_e = model - station)."""
    return np.asarray(members, dtype=float) + LAPSE_RATE * np.asarray(delta_e, dtype=float)[..., None]


def spread_sigma(delta_e):
    """Standard deviation (degC) of the representativeness perturbation."""
    return 0.75 + 0.18 * np.abs(delta_e) ** 0.25


def adjust_ensemble(members, delta_e, rng, sigma=None):
    """Add Gaussian noise to each member and restore the raw rank order.

    ``sigma`` overrides :func:`spread_sigma` (e.g. zero for a no-op).
    """
    from .ecc import ecc_reorder

    raw = np.asarray(members, dtype=float)
    if sigma is None:
        sigma = spread_sigma(delta_e)
    sigma = np.asarray(sigma, dtype=float)[..., None]
    perturbed = raw + sigma * rng.standard_normal(raw.shape)
    return ecc_reorder(perturbed, raw)


def consistency_clamp(t_members, td_members):
    """Cap dew points at the paired temperature, member by member."""
    t = np.asarray(t_members, dtype=float)
    td = np.asarray(td_members, dtype=float)
    if t.shape != td.shape:
        raise DataError("temperature and dew point ensembles differ in shape")
    return np.minimum(td, t)


def clamp_fraction(t_members, td_members):
    return float(np.mean(np.asarray(td_members) > np.asarray(t_members)))


def derive_index_forecasts(t_members, td_members):
    """Member-wise DI and WBGTid after the consistency clamp."""
    t = np.asarray(t_members, dtype=float)
    td = np.asarray(td_members, dtype=float)
    if t.shape != td.shape:
        raise DataError("temperature and dew point ensembles differ in size")
    td = consistency_clamp(t, td)
    return indices.heat_indices(t, td)


def climatology_stats(values):
    """Mean, unbiased variance and moment skewness of an observation series."""
    if values and isinstance(values[0], Observation):
        values = [o.value for o in values]
    x = np.asarray(values, dtype=float)
    if x.size < 3:
        raise DataError("at least three observations are needed")
    d = x - x.mean()
    m2 = np.mean(d**2)
    skew = np.mean(d**3) / m2**1.5 if m2 > 0 else np.nan
    return ClimatologyStats(float(x.mean()), float(x.var(ddof=1)), float(skew), int(x.size))


# -- CSV I/O -------------------------------------------------------------------


def _require_columns(df, columns, name):
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"{name}: missing columns {missing}")


def read_stations(path):
    df = pd.read_csv(path, dtype={"station_id": str}, encoding="utf-8")
    _require_columns(df, STATION_COLUMNS, str(path))
    if df["station_id"].duplicated().any():
        raise DataError(f"{path}: duplicate station ids")
    return [StationRecord(r.station_id, float(r.lat), float(r.lon), float(r.elev_station), float(r.elev_model))
            for r in df.sort_values("station_id").itertuples()]


def read_forecasts(path):
    df = pd.read_csv(path, dtype={"station_id": str, "variable": str}, encoding="utf-8")
    _require_columns(df, FORECAST_COLUMNS, str(path))
    df["init_date"] = pd.to_datetime(df["init_date"], format="ISO8601")
    return df


def read_observations(path):
    df = pd.read_csv(path, dtype={"station_id": str, "variable": str}, encoding="utf-8")
    _require_columns(df, OBSERVATION_COLUMNS, str(path))
    df["valid_date"] = pd.to_datetime(df["valid_date"], format="ISO8601")
    return df


def write_stations(path, stations):
    df = pd.DataFrame([(s.id, s.lat, s.lon, s.elev_station, s.elev_model) for s in stations], columns=STATION_COLUMNS)
    df.sort_values("station_id").to_csv(path, index=False)


def _var_order(v):
    return v.map({name: i for i, name in enumerate(VARIABLES)})


def write_forecasts(path, df):
    df = df.copy()
    df["init_date"] = pd.to_datetime(df["init_date"]).dt.strftime("%Y-%m-%d")
    df = df.sort_values(["station_id", "init_date", "lead_days", "variable", "member_index"],
                        key=lambda c: _var_order(c) if c.name == "variable" else c)
    df[FORECAST_COLUMNS].to_csv(path, index=False)


def write_observations(path, df):
    df = df.copy()
    df["valid_date"] = pd.to_datetime(df["valid_date"]).dt.strftime("%Y-%m-%d")
    df = df.sort_values(["station_id", "valid_date", "variable"],
                        key=lambda c: _var_order(c) if c.name == "variable" else c)
    df[OBSERVATION_COLUMNS].to_csv(path, index=False)


# -- dense dataset ---------------------------------------------------------------


@dataclass
class Dataset:
    """Forecast and observation cubes on a common daily axis.

    ``fc[var]`` has shape (station, init day, lead, member) and ``obs[var]``
    has shape (station, day); a forecast initialised on day ``i`` at lead
    ``L`` verifies on day ``i + L``.
    """

    stations: list
    days: np.ndarray
    leads: np.ndarray
    fc: dict
    obs: dict = field(default_factory=dict)

    @property
    def n_members(self):
        return next(iter(self.fc.values())).shape[-1]

    def lead_index(self, lead):
        hits = np.flatnonzero(self.leads == lead)
        if hits.size == 0:
            raise DataError(f"lead {lead} not in the dataset")
        return int(hits[0])

    def day_index(self, date):
        return int((np.datetime64(date, "D") - self.days[0]).astype(int))

    @classmethod
    def from_frames(cls, stations, forecasts, observations):
        stations = sorted(stations, key=lambda s: s.id)
        sid = {s.id: i for i, s in enumerate(stations)}
        unknown = set(forecasts["station_id"]) - set(sid)
        if unknown:
            raise DataError(f"forecasts reference unknown stations {sorted(unknown)[:5]}")
        init = forecasts["init_date"].values.astype("datetime64[D]")
        valid_obs = observations["valid_date"].values.astype("datetime64[D]")
        leads = np.array(sorted(forecasts["lead_days"].unique()), dtype=int)
        if leads.min() < 1 or leads.max() > 15:
            raise DataError("lead_days must lie in [1, 15]")
        k = int(forecasts["member_index"].max())
        if forecasts["member_index"].min() < 1 or k < 2:
            raise DataError("member_index must run over 1..K with K >= 2")
        first = min(init.min(), valid_obs.min() if valid_obs.size else init.min())
        last = max(init.max() + int(leads.max()), valid_obs.max() if valid_obs.size else init.max())
        days = np.arange(first, last + 1, dtype="datetime64[D]")
        lead_pos = {int(l): i for i, l in enumerate(leads)}

        fc = {}
        for var, grp in forecasts.groupby("variable", sort=True):
            cube = np.full((len(stations), days.size, leads.size, k), np.nan)
            gi = grp.index
            s_idx = grp["station_id"].map(sid).to_numpy()
            d_idx = (init[forecasts.index.get_indexer(gi)] - first).astype(int)
            l_idx = grp["lead_days"].map(lead_pos).to_numpy()
            m_idx = grp["member_index"].to_numpy() - 1
            cube[s_idx, d_idx, l_idx, m_idx] = grp["value"].to_numpy(dtype=float)
            fc[var] = cube
        obs = {}
        for var, grp in observations.groupby("variable", sort=True):
            grp = grp[grp["station_id"].isin(sid)]
            arr = np.full((len(stations), days.size), np.nan)
            s_idx = grp["station_id"].map(sid).to_numpy()
            d_idx = (grp["valid_date"].values.astype("datetime64[D]") - first).astype(int)
            arr[s_idx, d_idx] = grp["value"].to_numpy(dtype=float)
            obs[var] = arr
        if "T" not in fc or "TD" not in fc:
            raise DataError("forecasts must contain T and TD")
        ds = cls(stations, days, leads, fc, obs)
        ds.complete_observations()
        return ds

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        return cls.from_frames(read_stations(d / "stations.csv"), read_forecasts(d / "forecasts.csv"),
                               read_observations(d / "observations.csv"))

    def complete_observations(self):
        """Derive DI/WBGTID observations from T/TD where they are absent."""
        if "T" not in self.obs or "TD" not in self.obs:
            return
        t, td = self.obs["T"], self.obs["TD"]
        ok = np.isfinite(t) & np.isfinite(td)
        tdc = np.minimum(td[ok], t[ok])
        if "DI" not in self.obs or "WBGTID" not in self.obs:
            di, wb = np.full(t.shape, np.nan), np.full(t.shape, np.nan)
            di[ok], wb[ok] = indices.heat_indices(t[ok], tdc)
            self.obs.setdefault("DI", di)
            self.obs.setdefault("WBGTID", wb)

    def forecast_frame(self, variables=None):
        """Long-format forecast table in deterministic order."""
        rows = []
        k = self.n_members
        for var in VARIABLES:
            if var not in self.fc or (variables and var not in variables):
                continue
            cube = self.fc[var]
            s, d, l = np.nonzero(np.all(np.isfinite(cube), axis=-1))
            n = s.size
            rows.append(pd.DataFrame({
                "station_id": np.repeat([self.stations[i].id for i in s], k),
                "init_date": np.repeat(self.days[d], k),
                "lead_days": np.repeat(self.leads[l], k),
                "variable": var,
                "member_index": np.tile(np.arange(1, k + 1), n),
                "value": cube[s, d, l].ravel(),
            }))
        return pd.concat(rows, ignore_index=True)

    def observation_frame(self, variables=("T", "TD")):
        rows = []
        for var in variables:
            arr = self.obs.get(var)
            if arr is None:
                continue
            s, d = np.nonzero(np.isfinite(arr))
            rows.append(pd.DataFrame({"station_id": [self.stations[i].id for i in s],
                                      "valid_date": self.days[d], "variable": var, "value": arr[s, d]}))
        return pd.concat(rows, ignore_index=True)

    def save(self, directory, forecast_variables=("T", "TD"), observation_variables=("T", "TD")):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_stations(d / "stations.csv", self.stations)
        write_forecasts(d / "forecasts.csv", self.forecast_frame(forecast_variables))
        write_observations(d / "observations.csv", self.observation_frame(observation_variables))


# -- synthetic data ----------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic station/forecast generator.

    The truth is a seasonal cycle plus a bivariate AR(1) anomaly. For each
    lead a latent forecast centre is drawn so that the truth given the centre
    is normal with covariance ``error_cov(lead)``; members are the centre plus
    ``bias`` plus ``dispersion`` times draws from the same covariance. With
    ``bias=0`` and ``dispersion=1`` truth and members are exchangeable.
    """

    n_stations: int = 20
    n_days: int = 120
    start_date: str = "2017-05-01"
    n_members: int = 10
    leads: tuple = (1, 2, 3, 4, 5)
    bias: float = 0.0
    dispersion: float = 1.0
    corr: float = 0.6  # T-TD anomaly correlation of the truth
    error_corr: float = 0.5
    anomaly_sd: float = 3.0
    ar_coef: float = 0.7
    error_sd: float = 1.0
    error_growth: float = 0.5
    dewpoint_depression: float = 8.0
    station_bias_sd: float = 0.0
    obs_noise: float = 0.0
    elev_diff_sd: float = 150.0
    lat_range: tuple = (35.0, 65.0)
    lon_range: tuple = (-12.5, 42.5)
    seed: int = 0

    def validate(self):
        errors = []
        if self.n_stations < 1:
            errors.append("n_stations must be >= 1")
        if self.n_days < 2:
            errors.append("n_days must be >= 2")
        if self.n_members < 2:
            errors.append("n_members must be >= 2")
        if not self.leads or min(self.leads) < 1 or max(self.leads) > 15:
            errors.append("leads must lie in [1, 15]")
        if self.dispersion < 0:
            errors.append("dispersion must be >= 0")
        for name in ("corr", "error_corr"):
            if not -1 < getattr(self, name) < 1:
                errors.append(f"{name} must lie in (-1, 1)")
        if not 0 <= self.ar_coef < 1:
            errors.append("ar_coef must lie in [0, 1)")
        if self.leads and min(self.leads) >= 1 and max(self.leads) <= 15:
            if self.lead_error_sd(max(self.leads)) >= self.anomaly_sd:
                errors.append("forecast error sd must stay below anomaly_sd at every lead")
        if errors:
            raise ValueError("; ".join(errors))

    def lead_error_sd(self, lead):
        return self.error_sd * np.sqrt(1.0 + self.error_growth * (lead - 1))


def _cov2(sd, corr):
    return sd * sd * np.array([[1.0, corr], [corr, 1.0]])


def synth_generate(config=SynthConfig()):
    """Reproducible synthetic :class:`Dataset` (T and TD only)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    ns, nd, k = config.n_stations, config.n_days, config.n_members
    leads = np.array(sorted(config.leads), dtype=int)
    max_lead = int(leads.max())

    lat = rng.uniform(*config.lat_range, ns)
    lon = rng.uniform(*config.lon_range, ns)
    elev = rng.gamma(2.0, 150.0, ns)
    elev_model = np.maximum(elev + rng.normal(0.0, config.elev_diff_sd, ns), 0.0)
    stations = [StationRecord(f"S{i + 1:04d}", round(float(lat[i]), 4), round(float(lon[i]), 4),
                              round(float(elev[i]), 1), round(float(elev_model[i]), 1)) for i in range(ns)]
    delta_e = np.array([s.delta_e for s in stations])

    # the day axis covers initialisations plus the longest lead
    start = np.datetime64(config.start_date, "D")
    days = np.arange(start, start + nd + max_lead, dtype="datetime64[D]")
    ndays = days.size
    doy = (days - days.astype("datetime64[Y]")).astype(int) + 1
    season = 5.0 * np.sin(2.0 * np.pi * (doy - 105) / 365.0)
    clim_t = 22.0 - 0.4 * (lat[:, None] - 45.0) - LAPSE_RATE * elev[:, None] + season[None, :]
    clim = np.stack([clim_t, clim_t - config.dewpoint_depression], axis=-1)  # (ns, ndays, 2)

    v = _cov2(config.anomaly_sd, config.corr)
    lv = np.linalg.cholesky(v)
    phi = config.ar_coef
    anom = np.empty((ns, ndays, 2))
    anom[:, 0] = rng.standard_normal((ns, 2)) @ lv.T
    innov = np.sqrt(1.0 - phi * phi)
    for d in range(1, ndays):
        anom[:, d] = phi * anom[:, d - 1] + innov * rng.standard_normal((ns, 2)) @ lv.T
    truth = clim + anom
    truth[..., 1] = np.minimum(truth[..., 1], truth[..., 0])

    noise = config.obs_noise * rng.standard_normal(truth.shape)
    observed = truth + noise
    observed[..., 1] = np.minimum(observed[..., 1], observed[..., 0])

    station_bias = config.station_bias_sd * rng.standard_normal((ns, 1, 2))
    fc_t = np.full((ns, ndays, leads.size, k), np.nan)
    fc_td = np.full_like(fc_t, np.nan)
    vinv = np.linalg.inv(v)
    for li, lead in enumerate(leads):
        sig = _cov2(config.lead_error_sd(lead), config.error_corr)
        gain = np.eye(2) - sig @ vinv
        resid = np.linalg.cholesky(sig - sig @ vinv @ sig)
        lsig = np.linalg.cholesky(sig)
        vd = np.arange(lead, lead + nd)  # valid days of the nd initialisations
        x = anom[:, vd]
        centre = clim[:, vd] + x @ gain.T + rng.standard_normal(x.shape) @ resid.T
        members = (centre[:, :, None, :] + config.bias + station_bias[:, :, None, :]
                   + config.dispersion * rng.standard_normal((ns, nd, k, 2)) @ lsig.T)
        # forecasts live at model-grid elevation
        members -= LAPSE_RATE * delta_e[:, None, None, None]
        fc_t[:, :nd, li] = members[..., 0]
        fc_td[:, :nd, li] = np.minimum(members[..., 1], members[..., 0])

    obs = {"T": observed[..., 0].copy(), "TD": observed[..., 1].copy()}
    ds = Dataset(stations, days, leads, {"T": fc_t, "TD": fc_td}, obs)
    ds.complete_observations()
    return ds
