"""Run configuration: YAML loading and validation with line-anchored messages."""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .data import SynthConfig
from .training import MAX_LEAD, ScheduleError, default_schedule, parse_schedule

METHODS = ("raw", "adjusted", "ecc", "emos2d", "gev", "mlp")
DEFAULT_TRAINING_DAYS = 60
DEFAULT_THRESHOLDS = {"DI": 27.0, "WBGTID": 27.8}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass
class RunConfig:
    data_dir: str = None
    synth: dict = None
    output_dir: str = "heatcal-out"
    training_days: int = DEFAULT_TRAINING_DAYS
    training_start: str = None
    verification_start: str = None
    verification_end: str = None
    leads: tuple = None
    methods: tuple = METHODS
    schedule_file: str = None
    emos2d_schedule: str = "emos2d"
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    seed: int = 0
    ecc_replicates: int = 20
    es_samples: int = 1000
    gev_scale: str = "md"
    refit_every: int = 1
    mlp_retrain_every: int = 1
    mlp_epochs: int = 200
    pit_bins: int = 20
    n_boot: int = 1000
    reference: str = "adjusted"
    notices: list = field(default_factory=list, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("notices")
        d["methods"] = list(self.methods)
        d["leads"] = None if self.leads is None else list(self.leads)
        return d

    def schedule(self):
        if self.schedule_file is None:
            return default_schedule()
        return parse_schedule(Path(self.schedule_file).read_text(encoding="utf-8"))

    def synth_config(self):
        kw = dict(self.synth or {})
        if "leads" in kw:
            kw["leads"] = tuple(kw["leads"])
        for key in ("lat_range", "lon_range"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return SynthConfig(**kw)


_FIELDS = {f.name for f in fields(RunConfig)} - {"notices"}
_INT_MIN = {"training_days": 2, "seed": 0, "ecc_replicates": 1, "es_samples": 2, "refit_every": 1,
            "mlp_retrain_every": 1, "mlp_epochs": 1, "pit_bins": 2, "n_boot": 200}


def _key_lines(text):
    """Top-level key -> 1-based line number, from the YAML node tree."""
    node = yaml.compose(text, Loader=yaml.SafeLoader)
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            lines[k.value] = k.start_mark.line + 1
            if isinstance(v, yaml.MappingNode):
                for k2, _ in v.value:
                    lines[f"{k.value}.{k2.value}"] = k2.start_mark.line + 1
    return lines


def _date(value):
    try:
        return np.datetime64(str(value), "D")
    except ValueError:
        return None


def config_from_mapping(raw, lines=None, base_dir=None):
    """Build a :class:`RunConfig` from a mapping, collecting every problem."""
    lines = lines or {}
    problems, notices = [], []

    def where(key):
        return f"line {lines[key]}: " if key in lines else ""

    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a mapping"])
    for key in sorted(set(raw) - _FIELDS):
        problems.append(f"{where(key)}unknown field {key!r}")
    kw = {k: raw[k] for k in raw if k in _FIELDS}

    if "training_days" not in kw:
        notices.append(f"training_days not given; using the default of {DEFAULT_TRAINING_DAYS} days")
    for key, lo in _INT_MIN.items():
        if key in kw and (not isinstance(kw[key], int) or isinstance(kw[key], bool) or kw[key] < lo):
            problems.append(f"{where(key)}{key} must be an integer >= {lo}")

    if kw.get("data_dir") is None and kw.get("synth") is None:
        problems.append("one of data_dir or synth is required")
    if kw.get("data_dir") is not None and kw.get("synth") is not None:
        problems.append(f"{where('synth')}data_dir and synth are mutually exclusive")
    if base_dir is not None:
        for key in ("data_dir", "output_dir", "schedule_file"):
            if isinstance(kw.get(key), str) and not Path(kw[key]).is_absolute():
                kw[key] = str(Path(base_dir) / kw[key])
    if kw.get("synth") is not None:
        if not isinstance(kw["synth"], dict):
            problems.append(f"{where('synth')}synth must be a mapping")
        else:
            known = {f.name for f in fields(SynthConfig)}
            for key in sorted(set(kw["synth"]) - known):
                problems.append(f"{where('synth.' + key)}unknown synth field {key!r}")

    if "methods" in kw:
        m = kw["methods"]
        if not isinstance(m, list) or not m:
            problems.append(f"{where('methods')}methods must be a non-empty list")
        else:
            bad = [x for x in m if x not in METHODS]
            if bad:
                problems.append(f"{where('methods')}unknown methods {bad}; choose from {list(METHODS)}")
            kw["methods"] = tuple(x for x in METHODS if x in m)

    if "leads" in kw and kw["leads"] is not None:
        leads = kw["leads"]
        if not isinstance(leads, list) or not leads:
            problems.append(f"{where('leads')}leads must be a non-empty list")
        else:
            bad = [x for x in leads if not isinstance(x, int) or not 1 <= x <= MAX_LEAD]
            if bad:
                problems.append(f"{where('leads')}lead {bad[0]} outside 1-{MAX_LEAD}")
            kw["leads"] = tuple(sorted(set(leads)))

    if "thresholds" in kw:
        thr = kw["thresholds"]
        if not isinstance(thr, dict):
            problems.append(f"{where('thresholds')}thresholds must map DI/WBGTID to values")
        else:
            merged = dict(DEFAULT_THRESHOLDS)
            for name, value in thr.items():
                key = f"thresholds.{name}"
                if name not in DEFAULT_THRESHOLDS:
                    problems.append(f"{where(key)}unknown threshold {name!r}")
                elif not isinstance(value, (int, float)) or value <= 0:
                    problems.append(f"{where(key)}threshold {name} must be positive")
                else:
                    merged[name] = float(value)
            kw["thresholds"] = merged

    if kw.get("emos2d_schedule", "emos2d") not in ("emos2d", "emos2d_optimal"):
        problems.append(f"{where('emos2d_schedule')}emos2d_schedule must be emos2d or emos2d_optimal")
    if kw.get("gev_scale", "md") not in ("md", "mean", "var", "sd"):
        problems.append(f"{where('gev_scale')}gev_scale must be one of md, mean, var, sd")
    if kw.get("reference", "adjusted") not in METHODS:
        problems.append(f"{where('reference')}reference must be one of {list(METHODS)}")

    dates = {}
    for key in ("training_start", "verification_start", "verification_end"):
        if kw.get(key) is not None:
            d = _date(kw[key])
            if d is None:
                problems.append(f"{where(key)}{key} is not an ISO date")
            else:
                dates[key] = d
                kw[key] = str(d)
    n_train = kw.get("training_days", DEFAULT_TRAINING_DAYS)
    if "verification_start" in dates and "verification_end" in dates:
        if dates["verification_end"] < dates["verification_start"]:
            problems.append(f"{where('verification_end')}verification_end precedes verification_start")
    if "training_start" in dates and "verification_start" in dates and isinstance(n_train, int):
        if dates["verification_start"] < dates["training_start"] + n_train:
            problems.append(f"{where('verification_start')}verification range overlaps the first "
                            f"training window ({dates['training_start']} + {n_train} days)")

    if kw.get("schedule_file") is not None:
        try:
            parse_schedule(Path(kw["schedule_file"]).read_text(encoding="utf-8"))
        except OSError as exc:
            problems.append(f"{where('schedule_file')}cannot read schedule: {exc}")
        except ScheduleError as exc:
            problems.extend(f"{kw['schedule_file']}: {p}" for p in exc.problems)

    if problems:
        raise ConfigError(problems)
    cfg = RunConfig(**kw)
    cfg.notices = notices
    if cfg.synth is not None:
        try:
            cfg.synth_config().validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError([f"{where('synth')}{exc}"]) from None
    return cfg


def load_config(path=None, flags=None):
    """Merge command-line ``flags`` with an optional YAML file; file keys win."""
    raw, lines, base = dict(flags or {}), {}, None
    if path is not None:
        file_raw, lines = _read_yaml(Path(path))
        if not isinstance(file_raw, dict):
            raise ConfigError(["configuration must be a mapping"])
        if "data_dir" in file_raw or "synth" in file_raw:
            raw.pop("data_dir", None)
            raw.pop("synth", None)
        raw.update(file_raw)
        base = Path(path).parent
        # flag paths stay relative to the working directory
        for key in ("data_dir", "output_dir", "schedule_file"):
            if key in raw and key not in file_raw and raw[key] is not None:
                raw[key] = str(Path(raw[key]).resolve())
    return config_from_mapping(raw, lines, base_dir=base)


def _read_yaml(path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    try:
        raw = yaml.safe_load(text)
        lines = _key_lines(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError([f"{loc}invalid YAML ({getattr(exc, 'problem', exc)})"]) from None
    return (raw if raw is not None else {}), lines


def validate_config(path):
    """Load and validate a YAML run configuration."""
    path = Path(path)
    raw, lines = _read_yaml(path)
    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a mapping"])
    return config_from_mapping(raw, lines, base_dir=path.parent)
