#!/usr/bin/env python3
"""Write data/credit_fixture.csv: 200 synthetic rows in the layout of the
UCI default-of-credit-card-clients file.

The values are drawn from rough marginals of the real columns and the label
from a logistic model driven mostly by the repayment status columns. The
fixture exercises the pipeline only; its statistics say nothing about the
real data.
"""

import csv
import math
import random
from pathlib import Path

ROWS = 200
SEED = 20240611
OUT = Path(__file__).resolve().parent.parent / "data" / "credit_fixture.csv"

PAY = ["PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"]
BILL = [f"BILL_AMT{i}" for i in range(1, 7)]
PAY_AMT = [f"PAY_AMT{i}" for i in range(1, 7)]
HEADER = ["ID", "LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE", *PAY, *BILL, *PAY_AMT,
          "default payment next month"]


def row(rng, ident):
    limit = rng.choice(range(10_000, 500_001, 10_000))
    sex = rng.choice([1, 2])
    education = rng.choices([1, 2, 3, 4, 5, 6], weights=[35, 47, 16, 1, 1, 1])[0]
    marriage = rng.choices([1, 2, 3], weights=[45, 53, 2])[0]
    age = rng.randint(21, 70)
    status = rng.choices([-2, -1, 0, 1, 2, 3], weights=[10, 20, 50, 10, 8, 2])[0]
    pay = []
    for _ in PAY:
        pay.append(max(-2, min(8, status + rng.choice([-1, 0, 0, 0, 1]))))
    bill = [max(0, int(rng.gauss(0.4, 0.3) * limit)) for _ in BILL]
    pay_amt = [max(0, int(rng.expovariate(1 / 5000))) for _ in PAY_AMT]
    logit = -1.6 + 0.9 * pay[0] + 0.3 * pay[1] - 0.000002 * limit - 0.00003 * pay_amt[0]
    label = int(rng.random() < 1 / (1 + math.exp(-logit)))
    return [ident, limit, sex, education, marriage, age, *pay, *bill, *pay_amt, label]


def main():
    rng = random.Random(SEED)
    with OUT.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HEADER)
        for i in range(1, ROWS + 1):
            w.writerow(row(rng, i))
    print(f"wrote {ROWS} rows to {OUT}")


if __name__ == "__main__":
    main()
