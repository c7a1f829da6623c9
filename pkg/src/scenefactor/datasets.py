"""Random Bars shapes, toroidal scene placement, MNIST IDX and letter fixtures."""

from __future__ import annotations

import gzip
import string
import struct
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np
from PIL import Image as PILImage

from .errors import IdxFormatError
from .sparse import reconstruct

BAR_FRAME = 8
VERTICAL, HORIZONTAL = "vertical", "horizontal"
# index of each orientation's filter in bars_dictionary()
BAR_FILTER = {VERTICAL: 0, HORIZONTAL: 1}
# coefficient that makes a unit-norm bar paint pixels of value 1
BAR_COEF = float(np.sqrt(BAR_FRAME))


def bars_dictionary() -> np.ndarray:
    """Two unit-norm 8x8 filters: a full-height vertical bar in column 0 and a
    full-width horizontal bar in row 0."""
    filters = np.zeros((2, BAR_FRAME, BAR_FRAME))
    filters[0, :, 0] = 1.0
    filters[1, 0, :] = 1.0
    return filters / np.sqrt(BAR_FRAME)


@dataclass(frozen=True)
class BarsShape:
    """One Random Bars object in its 8x8 frame.

    ``bars`` holds ``(orientation, x, y)`` triples; a vertical bar spans the
    full frame height so its ``y`` is 0, and a horizontal bar has ``x`` 0.
    ``grid`` is the binary image; crossings saturate at 1 while
    ``ground_truth_maps`` carries one coefficient ``BAR_COEF`` per bar.
    """

    grid: np.ndarray
    bars: tuple[tuple[str, int, int], ...]
    ground_truth_maps: np.ndarray


def bars_shape(bars: Sequence[tuple[str, int, int]]) -> BarsShape:
    maps = np.zeros((2, BAR_FRAME, BAR_FRAME))
    for orient, x, y in bars:
        if orient == VERTICAL and y != 0 or orient == HORIZONTAL and x != 0:
            raise ValueError(f"bar {orient} at ({x}, {y}) does not fit the frame")
        if not (0 <= x < BAR_FRAME and 0 <= y < BAR_FRAME):
            raise ValueError(f"bar position ({x}, {y}) outside the frame")
        maps[BAR_FILTER[orient], y, x] = BAR_COEF
    grid = np.clip(reconstruct(bars_dictionary(), maps), 0.0, 1.0)
    grid = (grid > 0.5).astype(float)
    return BarsShape(grid, tuple(sorted((o, int(x), int(y)) for o, x, y in bars)), maps)


def _all_bars():
    return [(VERTICAL, x, 0) for x in range(BAR_FRAME)] + [
        (HORIZONTAL, 0, y) for y in range(BAR_FRAME)
    ]


def _translation_key(grid: np.ndarray) -> bytes:
    """Grid cropped to its bounding box; equal keys mean one shape is a
    translate of the other."""
    ys, xs = np.nonzero(grid)
    crop = grid[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    return crop.shape[0].to_bytes(1, "little") + crop.astype(np.uint8).tobytes()


def _distinct_shape_count(bars_per_shape: int) -> int:
    pool = _all_bars()
    return len({_translation_key(bars_shape(c).grid) for c in combinations(pool, bars_per_shape)})


def gen_bars_shapes(count: int, rng: np.random.Generator, bars_per_shape: int = 2) -> list[BarsShape]:
    """``count`` shapes with ``bars_per_shape`` distinct bars each.

    No shape is a translate of another, since a translated copy would make
    the ground-truth ``(k, x, y)`` of a scene ambiguous.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not 1 <= bars_per_shape <= 3:
        raise ValueError(f"bars_per_shape must be in 1..3, got {bars_per_shape}")
    available = _distinct_shape_count(bars_per_shape)
    if count > available:
        raise ValueError(f"only {available} shapes distinct up to translation exist")
    pool = _all_bars()
    seen: set[bytes] = set()
    shapes = []
    while len(shapes) < count:
        pick = rng.choice(len(pool), size=bars_per_shape, replace=False)
        shape = bars_shape([pool[i] for i in pick])
        key = _translation_key(shape.grid)
        if key in seen:
            continue
        seen.add(key)
        shapes.append(shape)
    return shapes


@dataclass(frozen=True)
class MultiSceneTruth:
    placements: tuple[tuple[Hashable, int, int], ...]

    @property
    def count(self) -> int:
        return len(self.placements)


@dataclass(frozen=True)
class SceneSpec:
    side: int
    placements: tuple[tuple[Hashable, int, int], ...]
    image: np.ndarray
    truth: MultiSceneTruth


def place_scene(objects, side: int, ids=None, combine: str = "max") -> SceneSpec:
    """Superimpose ``(image, x, y)`` objects on a black ``side`` x ``side`` torus.

    Object rasters are pasted with their top-left pixel at ``(x, y)`` and wrap
    around the edges. ``combine='max'`` keeps white-on-black pixels <= 1;
    ``'sum'`` adds then clips to [0, 1].
    """
    if combine not in ("max", "sum"):
        raise ValueError(f"unknown combine mode {combine!r}")
    canvas = np.zeros((side, side))
    ids = list(range(len(objects))) if ids is None else list(ids)
    if len(ids) != len(objects):
        raise ValueError("one id per object is required")
    placements = []
    for oid, (img, x, y) in zip(ids, objects):
        img = np.asarray(img, dtype=float)
        h, w = img.shape
        if h > side or w > side:
            raise ValueError(f"object of shape {img.shape} larger than the scene")
        x, y = int(x) % side, int(y) % side
        rows = (y + np.arange(h)) % side
        cols = (x + np.arange(w)) % side
        block = canvas[np.ix_(rows, cols)]
        canvas[np.ix_(rows, cols)] = np.maximum(block, img) if combine == "max" else block + img
        placements.append((oid, x, y))
    if combine == "sum":
        np.clip(canvas, 0.0, 1.0, out=canvas)
    placements = tuple(placements)
    return SceneSpec(side, placements, canvas, MultiSceneTruth(placements))


def canonical_frame(img, side: int) -> np.ndarray:
    """Object raster with its top-left corner at the origin of a side x side frame."""
    return place_scene([(img, 0, 0)], side).image


# -- IDX ----------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open_idx(path) -> bytes:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".gz":
        data = gzip.decompress(data)
    return data


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Parse an unsigned-byte IDX file (optionally gzip-compressed)."""
    data = _open_idx(path)
    if len(data) < 4:
        raise IdxFormatError(f"file holds {len(data)} bytes, too short for the magic number", 0)
    (magic,) = struct.unpack_from(">I", data, 0)
    if expected_magic is not None and magic != expected_magic:
        raise IdxFormatError(
            f"bad magic number: expected 0x{expected_magic:08x}, got 0x{magic:08x}", 0
        )
    if magic >> 16 != 0 or (magic >> 8) & 0xFF != 0x08:
        raise IdxFormatError(f"unsupported IDX magic 0x{magic:08x} (only unsigned bytes)", 0)
    ndim = magic & 0xFF
    if ndim == 0:
        raise IdxFormatError("IDX file declares zero dimensions", 3)
    head = 4 + 4 * ndim
    if len(data) < head:
        raise IdxFormatError(
            f"truncated header: need {head} bytes, have {len(data)}", len(data)
        )
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    total = 1
    for i, d in enumerate(dims):
        total *= d
        if total > 2**40:
            raise IdxFormatError(f"dimension product overflows at dim {i}", 4 + 4 * i)
    have = len(data) - head
    if have < total:
        raise IdxFormatError(
            f"truncated payload: expected {total} bytes, missing {total - have}", len(data)
        )
    if have > total:
        raise IdxFormatError(f"{have - total} trailing bytes after payload", head + total)
    return np.frombuffer(data, dtype=np.uint8, count=total, offset=head).reshape(dims)


def load_idx(path) -> list[np.ndarray]:
    """IDX image file -> list of float images scaled to [0, 1]."""
    arr = read_idx(path, IDX_IMAGES_MAGIC)
    return [im.astype(float) / 255.0 for im in arr]


def load_idx_labels(path) -> np.ndarray:
    return read_idx(path, IDX_LABELS_MAGIC).astype(int)


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise ValueError("only uint8 IDX files are supported")
    head = struct.pack(">I", (0x08 << 8) | arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    data = head + arr.tobytes()
    path = Path(path)
    path.write_bytes(gzip.compress(data, mtime=0) if path.suffix == ".gz" else data)


def first_of_each_class(labels, classes=range(10)) -> list[int]:
    """Index of the first occurrence of every class label."""
    labels = np.asarray(labels)
    out = []
    for c in classes:
        hits = np.flatnonzero(labels == c)
        if hits.size == 0:
            raise ValueError(f"class {c} does not occur")
        out.append(int(hits[0]))
    return out


# -- letters ------------------------------------------------------------------

LETTERS = tuple(string.ascii_uppercase)
_RASTER_SUFFIXES = (".pgm", ".png")


def pad_square(img: np.ndarray) -> np.ndarray:
    """Pad with black on the bottom/right until square."""
    h, w = img.shape
    s = max(h, w)
    out = np.zeros((s, s), dtype=img.dtype)
    out[:h, :w] = img
    return out


def load_letter_assets(directory) -> list[tuple[str, np.ndarray]]:
    """Load the 26 letter rasters named ``A.pgm`` ... ``Z.pgm`` (or ``.png``)."""
    directory = Path(directory)
    found = {}
    if directory.is_dir():
        for p in directory.iterdir():
            if p.suffix.lower() in _RASTER_SUFFIXES and p.stem.upper() in LETTERS:
                found[p.stem.upper()] = p
    missing = [c for c in LETTERS if c not in found]
    if missing:
        raise FileNotFoundError(f"missing letter assets in {directory}: {', '.join(missing)}")
    out = []
    for c in LETTERS:
        with PILImage.open(found[c]) as im:
            arr = np.asarray(im.convert("L"), dtype=float) / 255.0
        out.append((c, pad_square(arr)))
    return out
