"""Materialize MovieLens-100k ``u.data`` without direct internet access.

Tries the GroupLens zip first; falls back to the copy of the ratings table
bundled in the ``pytorch-widedeep`` wheel (same rows, same order), fetched
through pip. Writes ``data/ml-100k/u.data`` in the original tab format.
"""
from __future__ import annotations

import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def from_grouplens() -> bytes:
    with urllib.request.urlopen(GROUPLENS_URL, timeout=20) as resp:
        blob = resp.read()
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        return zf.read("ml-100k/u.data")


def from_widedeep_wheel() -> bytes:
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "-d", tmp, "pytorch-widedeep==1.7.0"],
            check=True,
        )
        wheel = next(Path(tmp).glob("*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            frame = pd.read_parquet(io.BytesIO(zf.read(WHEEL_MEMBER)))
    cols = ["user_id", "movie_id", "rating", "timestamp"]
    rows = frame[cols].astype("int64").itertuples(index=False)
    return "".join(f"{u}\t{i}\t{r}\t{t}\n" for u, i, r, t in rows).encode()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/ml-100k/u.data")
    args = parser.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        data = from_grouplens()
    except Exception as exc:  # noqa: BLE001
        print(f"grouplens download failed ({exc}); using pytorch-widedeep copy", file=sys.stderr)
        data = from_widedeep_wheel()
    out.write_bytes(data)
    nrows = data.count(b"\n")
    print(f"wrote {out} ({nrows} rows)")


if __name__ == "__main__":
    main()
