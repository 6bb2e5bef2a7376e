#!/usr/bin/env python3
"""False-positive rate vs. report-window size on the leaky benign generator.

Writes out/fpr_leaky.csv and prints the curve. Larger windows average away
the benign excursions, so the estimates fall as more reports accumulate.
"""
import argparse
from pathlib import Path

from ztcell import fpr_sweep, load_scenario

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--windows", default="1,2,5,10")
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    sc = load_scenario(ROOT / "scenarios" / "fpr_leaky.scn")
    windows = [int(w) for w in args.windows.split(",")]
    out = ROOT / "out" / "fpr_leaky.csv"
    estimates = fpr_sweep(sc, windows, trials=args.trials, seed=args.seed, out_csv=out)
    print(f"wrote {out}")
    for est in estimates:
        bar = "#" * round(est.fpr * 200)
        print(f"  window {est.window_n:>2}: fpr {est.fpr:.4f} "
              f"[{est.ci_low:.4f}, {est.ci_high:.4f}] {bar}")


if __name__ == "__main__":
    main()
