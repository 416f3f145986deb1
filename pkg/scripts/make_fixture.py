"""Write the synthetic stand-in for the car-insurance table.

Columns: ``minority`` (binary X), ``price`` (Y) and ``risk`` (Z). Price
depends on risk and, weakly, on the minority indicator, so the raw table
is an alternative while its semi-synthetic null is not.

    python scripts/make_fixture.py [--rows 2000] [--seed 11] [--out configs/data/insurance_fixture.csv]
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from ci_robust.rng import RngStream


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--out", type=Path, default=Path("configs/data/insurance_fixture.csv"))
    args = p.parse_args(argv)

    gen = RngStream(args.seed).generator()
    risk = gen.lognormal(0.0, 0.5, args.rows)
    minority = (gen.random(args.rows) < 1 / (1 + np.exp(-(risk - 1.2)))).astype(int)
    price = 300 + 120 * risk + 25 * minority + gen.normal(0, 30, args.rows)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["minority", "price", "risk"])
        for m, pr, r in zip(minority, price, risk):
            w.writerow([m, f"{pr:.2f}", f"{r:.5f}"])
    print(f"wrote {args.rows} rows to {args.out}")


if __name__ == "__main__":
    main()
