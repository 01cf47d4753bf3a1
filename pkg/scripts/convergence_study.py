"""Observed orders of the elliptic solver, the Crank-Nicolson solver and the conjugation identity."""

import argparse
import csv
from pathlib import Path

from waveguide_stability import elliptic, schrodinger
from waveguide_stability.carleman import conjugation_refinement, weight_spec


def _write(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[-1]), restval="")
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--out", default="runs/convergence")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    studies = {
        "elliptic": elliptic.manufactured_convergence(levels=args.levels),
        "schrodinger": schrodinger.manufactured_convergence(levels=args.levels),
    }
    ws = weight_spec()
    for s in (1.0, 5.0):
        studies[f"conjugation_s{s:g}"] = conjugation_refinement(ws, s, levels=min(args.levels, 3))
    for name, rows in studies.items():
        _write(out / f"{name}.csv", rows)
        orders = [r.get("order") for r in rows[1:]]
        print(f"{name:18s} orders: " + ", ".join(f"{o:.3f}" for o in orders))


if __name__ == "__main__":
    main()
