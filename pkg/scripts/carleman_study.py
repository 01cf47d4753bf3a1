"""Calibrate s0 and tabulate the Carleman ratio over a decade above it."""

import argparse
import csv
from pathlib import Path

import numpy as np

from waveguide_stability.carleman import (calibrate_s0, carleman_ratio_study, check_assumption,
                                          quadratic_candidate, random_samples, weight_spec)
from waveguide_stability.geometry import CrossSection


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--x0", type=float, default=-1.0)
    ap.add_argument("--r", type=float, default=2.0)
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/carleman")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cs = CrossSection(0.0, 1.0)
    cand = quadratic_candidate(args.x0, cs)
    print("\n".join(check_assumption(cand.beta, cs, cand.gamma_star).lines()))

    ws = weight_spec(args.x0, cs, r=args.r, lam=args.lam)
    samples = random_samples(np.random.default_rng(args.seed), args.samples, ws.T)
    s0, coarse = calibrate_s0(ws, samples)
    study = carleman_ratio_study(ws, samples, np.logspace(np.log10(s0), np.log10(s0) + 1, args.points))
    for name, st in (("calibration", coarse), ("ratio", study)):
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["s", "max_ratio", "mean_ratio"])
            w.writeheader()
            w.writerows(st.rows())
    print(f"K = {ws.K:g}, s0 = {s0:.4g}")
    for r in study.rows():
        print(f"s = {r['s']:10.4g}  max = {r['max_ratio']:.6f}  mean = {r['mean_ratio']:.6f}")
    print(f"upper half non-increasing within 5%: {study.upper_half_nonincreasing(0.05)}")


if __name__ == "__main__":
    main()
