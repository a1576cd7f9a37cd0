#!/usr/bin/env python3
"""Write a synthetic 500-row table with the COMPAS column layout.

The real ProPublica file cannot ship with the repository, but the determinism
acceptance run needs a fixed COMPAS-shaped input. Marginals are rough
matches to the public two-year file; labels come from a noisy logistic
score over priors, age and juvenile counts. Not for any substantive analysis.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

RACES = ["African-American", "Caucasian", "Hispanic", "Other", "Asian", "Native American"]
RACE_P = [0.51, 0.34, 0.085, 0.055, 0.006, 0.004]


def generate(n, seed):
    rng = np.random.default_rng(seed)
    age = np.clip(18 + rng.gamma(2.0, 8.5, n).round(), 18, 96).astype(int)
    sex = np.where(rng.random(n) < 0.81, "Male", "Female")
    race = rng.choice(RACES, size=n, p=RACE_P)
    juv_fel = rng.poisson(0.07, n)
    juv_misd = rng.poisson(0.09, n)
    juv_other = rng.poisson(0.11, n)
    priors = rng.negative_binomial(0.8, 0.8 / (0.8 + 3.4), n)
    degree = np.where(rng.random(n) < 0.64, "F", "M")
    score = (-0.6 + 0.16 * priors - 0.045 * (age - 34) + 0.35 * juv_fel + 0.2 * juv_misd
             + 0.15 * juv_other + 0.2 * (degree == "F") + 0.15 * (sex == "Male"))
    recid = (rng.random(n) < 1.0 / (1.0 + np.exp(-score))).astype(int)
    for i in range(n):
        yield {
            "id": i + 1,
            "age": age[i],
            "sex": sex[i],
            "race": race[i],
            "juv_fel_count": juv_fel[i],
            "juv_misd_count": juv_misd[i],
            "juv_other_count": juv_other[i],
            "priors_count": priors[i],
            "c_charge_degree": degree[i],
            "two_year_recid": recid[i],
        }


def main():
    here = Path(__file__).resolve().parent
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=500)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--out", type=Path, default=here.parent / "data" / "samples" / "compas_sample_500.csv")
    args = ap.parse_args()
    rows = list(generate(args.rows, args.seed))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
