"""Biased, underdispersed synthetic network: raw vs post-processed DI at lead 1.

    python scripts/run_calibration.py [--seeds 0 1 2] [--schedule local|pooled]

Prints mean CRPS, the reduction against the raw ensemble, and chi-square
uniformity p-values of the PIT and rank histograms for every method.
"""

import argparse
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from heatcal.config import validate_config
from heatcal.pipeline import run_pipeline

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--schedule", choices=("pooled", "local"), default="pooled",
                    help="pooled: every EMOS model fitted on all stations; local: the shipped lead-time schedule")
    ap.add_argument("--variable", default="DI")
    args = ap.parse_args()

    base = validate_config(HERE / "configs" / "calibration.yaml")
    if args.schedule == "local":
        base = replace(base, schedule_file=None)
    print(f"{'seed':>4} {'method':>8} {'crps':>7} {'vs raw':>7} {'pit p':>7} {'rank p':>7}")
    for seed in args.seeds:
        synth = dict(base.synth, seed=seed)
        with tempfile.TemporaryDirectory() as out:
            start = time.perf_counter()
            summary = run_pipeline(replace(base, synth=synth, seed=seed, output_dir=out)).summary
            elapsed = time.perf_counter() - start
        scores, hists = summary["scores"], summary["histograms"]
        metric = f"crps_{args.variable}"
        raw = scores["raw"][metric]["1"]["mean"]
        for method in base.methods:
            mean = scores[method][metric]["1"]["mean"]
            h = hists.get(method, {}).get(args.variable, {})
            pit = h.get("pit", {}).get("1", {}).get("chi2_pvalue", float("nan"))
            rank = h.get("rank", {}).get("1", {}).get("chi2_pvalue", float("nan"))
            print(f"{seed:>4} {method:>8} {mean:7.4f} {1 - mean / raw:7.1%} {pit:7.3f} {rank:7.3f}")
        print(f"     ({elapsed:.0f} s)")


if __name__ == "__main__":
    main()
