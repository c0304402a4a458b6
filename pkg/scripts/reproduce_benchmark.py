"""Run the diagonal AR benchmark sweep and print mean estimates per SNR.

    python3 scripts/reproduce_benchmark.py [--config configs/diag_ar.json] [--jobs N]
"""
import argparse
import time
from pathlib import Path

from fbident.experiment import ExperimentConfig, format_table, snr_label, sweep

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "diag_ar.json")
    ap.add_argument("--jobs", type=int)
    args = ap.parse_args()

    cfg = ExperimentConfig.load(args.config)
    start = time.perf_counter()
    rows = sweep(cfg, workers=args.jobs)
    print(format_table(rows, cfg.structure))
    for snr in cfg.snrs:
        worst = max(r.abs_error for r in rows if r.snr == snr)
        print(f"snr={snr_label(snr):>6}  max |mean - true| = {worst:.4f}")
    print(f"{len(cfg.snrs) * len(cfg.seeds)} jobs in {time.perf_counter() - start:.2f}s")


if __name__ == "__main__":
    main()
