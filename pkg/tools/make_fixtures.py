#!/usr/bin/env python3
"""Regenerate the data/ fixtures.

* data/mnist/mnist5k-{images-idx3,labels-idx1}-ubyte.gz: the 5000-digit MNIST
  subset shipped inside the ``mlxtend`` wheel, re-packed as IDX. The wheel is
  fetched with ``pip download`` (no install needed).
* data/letters/A.pgm .. Z.pgm: 28x28 capital letters rendered with a serif
  TrueType font (DejaVu Serif by default; pass --font to use another).
"""

import argparse
import csv
import glob
import gzip
import io
import subprocess
import tempfile
import zipfile
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from scenefactor.datasets import LETTERS, write_idx

ROOT = Path(__file__).resolve().parents[1]
FONT_CANDIDATES = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSerif.ttf",
    "/usr/share/fonts/truetype/msttcorefonts/Georgia.ttf",
]


def mnist(out: Path, wheel: str | None) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        if wheel is None:
            subprocess.run(
                ["pip", "download", "mlxtend==0.24.0", "--no-deps", "-d", tmp, "-q"], check=True
            )
            wheel = glob.glob(f"{tmp}/mlxtend-*.whl")[0]
        raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = np.array(list(csv.reader(io.StringIO(gzip.decompress(raw).decode()))), dtype=float)
    images = rows[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = rows[:, -1].astype(np.uint8)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "mnist5k-images-idx3-ubyte.gz", images)
    write_idx(out / "mnist5k-labels-idx1-ubyte.gz", labels)
    print(f"wrote {len(images)} digits to {out}")


def letters(out: Path, font_path: str | None, size: int = 28) -> None:
    font_path = font_path or next(p for p in FONT_CANDIDATES if Path(p).exists())
    font = ImageFont.truetype(font_path, 22)
    out.mkdir(parents=True, exist_ok=True)
    for c in LETTERS:
        canvas = Image.new("L", (size, size), 0)
        draw = ImageDraw.Draw(canvas)
        left, top, right, bottom = draw.textbbox((0, 0), c, font=font)
        x = (size - (right - left)) // 2 - left
        y = (size - (bottom - top)) // 2 - top
        draw.text((x, y), c, fill=255, font=font)
        canvas.save(out / f"{c}.pgm")
    print(f"wrote {len(LETTERS)} letters to {out} using {font_path}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--wheel", help="local mlxtend wheel instead of pip download")
    ap.add_argument("--font", help="TrueType font for the letters")
    args = ap.parse_args()
    mnist(ROOT / "data" / "mnist", args.wheel)
    letters(ROOT / "data" / "letters", args.font)


if __name__ == "__main__":
    main()
