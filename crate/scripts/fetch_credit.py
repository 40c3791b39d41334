#!/usr/bin/env python3
"""Download the UCI default-of-credit-card-clients data and write it as
data/credit.csv (30,000 rows, ID + 23 features + label).

The archive's SHA-256 is checked against --sha256 when given, otherwise
against data/credit.sha256 if a previous fetch recorded one; a first fetch
records it there. Converting the .xls sheet needs pandas with xlrd.
"""

import argparse
import hashlib
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

URL = "https://archive.ics.uci.edu/static/public/350/default+of+credit+card+clients.zip"
DATA = Path(__file__).resolve().parent.parent / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--url", default=URL)
    ap.add_argument("--sha256", help="expected SHA-256 of the downloaded archive")
    ap.add_argument("--out", type=Path, default=DATA / "credit.csv")
    args = ap.parse_args()

    with urllib.request.urlopen(args.url) as resp:
        blob = resp.read()
    digest = hashlib.sha256(blob).hexdigest()
    record = DATA / "credit.sha256"
    expected = args.sha256 or (record.read_text().split()[0] if record.exists() else None)
    if expected and expected != digest:
        sys.exit(f"checksum mismatch: expected {expected}, got {digest}")
    if not expected:
        record.write_text(f"{digest}  {Path(args.url).name}\n")
        print(f"recorded archive checksum {digest} in {record}")

    import pandas as pd

    with zipfile.ZipFile(io.BytesIO(blob)) as z:
        name = next(n for n in z.namelist() if n.endswith((".xls", ".xlsx")))
        # The sheet has a second header row (X1..X23, Y); skip the first.
        frame = pd.read_excel(io.BytesIO(z.read(name)), header=1)
    if len(frame) != 30_000 or frame.shape[1] != 25:
        sys.exit(f"unexpected shape {frame.shape}")
    frame.to_csv(args.out, index=False)
    print(f"wrote {len(frame)} rows to {args.out}")


if __name__ == "__main__":
    main()
