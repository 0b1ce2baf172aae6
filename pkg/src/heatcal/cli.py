"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import pandas as pd

from .config import METHODS, ConfigError, load_config
from .data import Dataset, DataError, SynthConfig, synth_generate
from .optim import OptimizationError
from .pipeline import Pipeline, adjusted_dataset, load_dataset, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

# command -> (methods it restricts to, artifacts it writes)
STAGES = {
    "fit": (("ecc", "emos2d", "gev"), ("coefficients", "errors", "summary")),
    "predict": (("ecc", "emos2d", "gev", "mlp"), ("predictions", "pmf", "errors", "summary")),
    "classify": (("gev", "mlp"), ("pmf", "scores", "errors", "summary")),
    "run": (METHODS, None),
}


def _csv_ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _csv_strs(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_run_flags(p):
    s = argparse.SUPPRESS
    p.add_argument("config", nargs="?", help="YAML run configuration (overrides flags)")
    p.add_argument("--data-dir", default=s)
    p.add_argument("--output-dir", default=s)
    p.add_argument("--training-days", type=int, default=s)
    p.add_argument("--training-start", default=s)
    p.add_argument("--verification-start", default=s)
    p.add_argument("--verification-end", default=s)
    p.add_argument("--leads", type=_csv_ints, default=s, help="comma-separated, e.g. 1,2,3")
    p.add_argument("--methods", type=_csv_strs, default=s, help=f"subset of {','.join(METHODS)}")
    p.add_argument("--schedule-file", default=s)
    p.add_argument("--emos2d-schedule", choices=("emos2d", "emos2d_optimal"), default=s)
    p.add_argument("--threshold-di", type=float, default=s)
    p.add_argument("--threshold-wbgtid", type=float, default=s)
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("--ecc-replicates", type=int, default=s)
    p.add_argument("--es-samples", type=int, default=s)
    p.add_argument("--gev-scale", choices=("md", "mean", "var", "sd"), default=s)
    p.add_argument("--refit-every", type=int, default=s)
    p.add_argument("--mlp-retrain-every", type=int, default=s)
    p.add_argument("--mlp-epochs", type=int, default=s)
    p.add_argument("--pit-bins", type=int, default=s)
    p.add_argument("--n-boot", type=int, default=s)
    p.add_argument("--reference", choices=METHODS, default=s)


def _synth_flag_type(f):
    if f.name in ("leads",):
        return _csv_ints
    if f.name in ("lat_range", "lon_range"):
        return lambda t: [float(x) for x in t.split(",")]
    return type(f.default)


def build_parser():
    parser = argparse.ArgumentParser(prog="heatcal", description="Heat-index ensemble calibration and verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="YAML mapping of generator fields")
    for f in fields(SynthConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f"synth_{f.name}", type=_synth_flag_type(f),
                       default=argparse.SUPPRESS)

    p = sub.add_parser("adjust", help="orographic correction, perturbation and clamp; writes a dataset")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="score the ensemble in a dataset directory as-is")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="raw", help="method name used in the score files")
    p.add_argument("--leads", type=_csv_ints)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--es-samples", type=int)
    p.add_argument("--n-boot", type=int)

    for name, help_text in (("fit", "fit EMOS coefficients over the verification period"),
                            ("predict", "write predictive laws and category PMFs"),
                            ("classify", "category PMFs from GEV EMOS and the MLP classifier"),
                            ("run", "full pipeline")):
        _add_run_flags(sub.add_parser(name, help=help_text))
    return parser


def _flags_mapping(ns):
    out = {}
    for key, value in vars(ns).items():
        if key in ("command", "config") or key.startswith("threshold_"):
            continue
        out[key] = value
    thr = {}
    if hasattr(ns, "threshold_di"):
        thr["DI"] = ns.threshold_di
    if hasattr(ns, "threshold_wbgtid"):
        thr["WBGTID"] = ns.threshold_wbgtid
    if thr:
        out["thresholds"] = thr
    return out


def _cmd_synth(ns):
    import yaml

    kw = {}
    if ns.config:
        try:
            kw = yaml.safe_load(Path(ns.config).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([f"cannot load {ns.config}: {exc}"]) from None
        if not isinstance(kw, dict):
            raise ConfigError(["synth configuration must be a mapping"])
    for key, value in vars(ns).items():
        if key.startswith("synth_"):
            kw.setdefault(key[len("synth_"):], value)
    for key in ("leads", "lat_range", "lon_range"):
        if key in kw:
            kw[key] = tuple(kw[key])
    try:
        cfg = SynthConfig(**kw)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError([str(exc)]) from None
    synth_generate(cfg).save(ns.out)
    print(f"wrote {ns.out}")
    return EXIT_OK


def _cmd_adjust(ns):
    adjusted_dataset(Dataset.load(ns.data_dir), ns.seed).save(
        ns.out, forecast_variables=("T", "TD", "DI", "WBGTID"))
    print(f"wrote {ns.out}")
    return EXIT_OK


def _cmd_verify(ns):
    flags = {"data_dir": ns.data_dir, "output_dir": ns.out, "seed": ns.seed, "methods": ["raw"],
             "training_days": 2}
    for key in ("leads", "es_samples", "n_boot"):
        if getattr(ns, key) is not None:
            flags[key] = getattr(ns, key)
    cfg = load_config(None, flags)
    pipe = Pipeline(cfg, Dataset.load(ns.data_dir), verify_only=True, label=ns.label).run()
    pipe.write(ns.out, ("scores", "summary", "errors"))
    print(f"wrote {ns.out}")
    return EXIT_OK


def _cmd_stage(ns):
    cfg = load_config(ns.config, _flags_mapping(ns))
    allowed, artifacts = STAGES[ns.command]
    methods = tuple(m for m in cfg.methods if m in allowed)
    if not methods:
        raise ConfigError([f"{ns.command} needs one of {list(allowed)} among the methods"])
    if methods != cfg.methods:
        cfg = replace(cfg, methods=methods, notices=cfg.notices)
    for note in cfg.notices:
        print(f"notice: {note}", file=sys.stderr)
    result = run_pipeline(cfg, load_dataset(cfg), artifacts)
    counts = result.summary.get("errors", {})
    print(json.dumps({"status": result.status, "partial": result.summary.get("partial"), "errors": counts,
                      "outputs": {k: str(v) for k, v in result.outputs.items()}}, sort_keys=True))
    return result.status


def main(argv=None):
    ns = build_parser().parse_args(argv)
    handler = {"synth": _cmd_synth, "adjust": _cmd_adjust, "verify": _cmd_verify}.get(ns.command, _cmd_stage)
    try:
        return handler(ns)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError, KeyError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OptimizationError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
