"""Materialize MovieLens-100K ``u.data`` and ``u.item`` under a target directory.

Tries the GroupLens archive first. When that host is unreachable, falls back
to the copy bundled inside the ``pytorch-widedeep`` wheel (fetched with
``pip download``, never installed) and re-emits the original file layouts.

    python scripts/fetch_ml100k.py [target_dir]   # default: ./data/ml-100k
"""
from __future__ import annotations

import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_DATA = "pytorch_widedeep/datasets/data/MovieLens100k_{}.parquet.brotli"
GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
    "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def from_grouplens(target: Path) -> bool:
    try:
        with urllib.request.urlopen(GROUPLENS_URL, timeout=30) as resp:
            payload = resp.read()
    except OSError:
        return False
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        for name in ("u.data", "u.item"):
            (target / name).write_bytes(zf.read(f"ml-100k/{name}"))
    return True


def from_wheel(target: Path) -> None:
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, "pytorch-widedeep"],
            check=True,
        )
        wheel = next(Path(tmp).glob("pytorch_widedeep-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            ratings = pd.read_parquet(io.BytesIO(zf.read(WHEEL_DATA.format("data"))))
            items = pd.read_parquet(io.BytesIO(zf.read(WHEEL_DATA.format("items"))))

    with open(target / "u.data", "w", newline="\n") as fh:
        for row in ratings[["user_id", "movie_id", "rating", "timestamp"]].itertuples(index=False):
            fh.write("\t".join(str(int(v)) for v in row) + "\n")

    def cell(v):
        return "" if v is None or (isinstance(v, float) and v != v) else str(v)

    with open(target / "u.item", "w", encoding="latin-1", errors="replace", newline="\n") as fh:
        for row in items.itertuples(index=False):
            rec = row._asdict()
            head = [
                str(int(rec["movie_id"])),
                cell(rec["movie_title"]),
                cell(rec["release_date"]),
                cell(rec["video_release_date"]),
                cell(rec["IMDb_URL"]),
            ]
            flags = [str(int(v)) for v in row[5:]]
            assert len(flags) == len(GENRES)
            fh.write("|".join(head + flags) + "\n")


def main(argv: list[str]) -> int:
    target = Path(argv[1]) if len(argv) > 1 else Path("data/ml-100k")
    target.mkdir(parents=True, exist_ok=True)
    if not from_grouplens(target):
        print("GroupLens unreachable; using the pytorch-widedeep bundled copy", file=sys.stderr)
        from_wheel(target)
    print(f"wrote {target / 'u.data'} and {target / 'u.item'}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
