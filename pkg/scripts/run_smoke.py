"""Full pipeline on the smoke fixture, twice, checking byte-identical summaries.

    python scripts/run_smoke.py [--out runs/smoke]
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from heatcal.config import validate_config
from heatcal.pipeline import run_pipeline

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=HERE.parent / "runs" / "smoke")
    ap.add_argument("--once", action="store_true", help="skip the repeat run")
    args = ap.parse_args()

    cfg = replace(validate_config(HERE / "configs" / "smoke.yaml"), output_dir=str(args.out))
    blobs = []
    for _ in range(1 if args.once else 2):
        start = time.perf_counter()
        result = run_pipeline(cfg)
        blobs.append((args.out / "summary.json").read_bytes())
        print(f"status {result.status}, {sum(result.summary['errors'].values())} logged issues, "
              f"partial={result.summary['partial']}, {time.perf_counter() - start:.0f} s")

    scores = result.summary["scores"]
    leads = sorted({lead for m in scores.values() for met in m.values() for lead in met}, key=int)
    print(f"\nmean CRPS (DI) by lead: {' '.join(f'{lead:>7}' for lead in leads)}")
    for method, metrics in scores.items():
        if "crps_DI" in metrics:
            row = " ".join(f"{metrics['crps_DI'].get(lead, {}).get('mean', float('nan')):7.3f}" for lead in leads)
            print(f"{method:>22}: {row}")
    if len(blobs) == 2:
        print(f"\nsummary.json byte-identical across runs: {blobs[0] == blobs[1]}")


if __name__ == "__main__":
    main()
