"""Turn feature maps or pixels into scene vectors and object codebooks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, NamedTuple, Sequence

import numpy as np

from . import hdcore
from .errors import DegenerateTemplate
from .hdcore import Codebook, FpeBase
from .sparse import SparseConfig, infer_maps

SKIP_BELOW = 1e-8
# above this fraction of non-zero coefficients the FFT route is cheaper
_DENSE_FRACTION = 0.05
_CHUNK = 256


@dataclass(frozen=True)
class EncoderContext:
    """Random vectors shared by every encoding in one trial."""

    h_base: FpeBase
    v_base: FpeBase
    basis: Codebook

    def __post_init__(self):
        if self.h_base.period != self.v_base.period:
            raise ValueError("horizontal and vertical bases need the same period")
        if not (self.h_base.dim == self.v_base.dim == self.basis.dim):
            raise ValueError("all context vectors must share one dimension")

    @property
    def dim(self) -> int:
        return self.h_base.dim

    @property
    def side(self) -> int:
        return self.h_base.period


def make_context(dim: int, side: int, n_filters: int, rng: np.random.Generator) -> EncoderContext:
    """Draws, in order: horizontal base, vertical base, basis-function codebook."""
    h = hdcore.fpe_base(dim, side, rng)
    v = hdcore.fpe_base(dim, side, rng)
    b = Codebook(hdcore.random_phasors(n_filters, dim, rng))
    return EncoderContext(h, v, b)


def _position_sums(maps: np.ndarray, ctx: EncoderContext) -> np.ndarray:
    """Row j is sum_{x,y} A_j(y, x) * h(x) * v(y)."""
    n, side, _ = maps.shape
    kh, kv = ctx.h_base.indices, ctx.v_base.indices
    mask = np.abs(maps) >= SKIP_BELOW
    if mask.mean() > _DENSE_FRACTION:
        # ifft2 carries exp(+2 pi i (u y + w x) / L) / L^2
        spec = np.fft.ifft2(np.where(mask, maps, 0.0)) * (side * side)
        return spec[:, kv, kh]
    roots = ctx.h_base.roots()
    out = np.zeros((n, ctx.dim), dtype=complex)
    j, y, x = np.nonzero(mask)
    coef = maps[j, y, x]
    for s in range(0, j.size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        idx = (np.outer(x[sl], kh) + np.outer(y[sl], kv)) % side
        terms = coef[sl, None] * roots[idx]
        for jj in np.unique(j[sl]):
            out[jj] += terms[j[sl] == jj].sum(axis=0)
    return out


def _check_maps(maps, ctx: EncoderContext, n: int | None) -> np.ndarray:
    maps = np.asarray(maps, dtype=float)
    if maps.ndim != 3 or maps.shape[1:] != (ctx.side, ctx.side):
        raise ValueError(f"maps of shape {maps.shape} do not fit a side-{ctx.side} context")
    if n is not None and maps.shape[0] != n:
        raise ValueError(f"{maps.shape[0]} maps for {n} basis vectors")
    return maps


def encode_sparse(maps, ctx: EncoderContext) -> np.ndarray:
    """z(A) = sum_{x,y,j} A_j(x, y) h(x) * v(y) * b(j)."""
    maps = _check_maps(maps, ctx, len(ctx.basis))
    return (_position_sums(maps, ctx) * ctx.basis.vectors).sum(axis=0)


def encode_pixel(image, ctx: EncoderContext) -> np.ndarray:
    """z_pix(I) = sum_{x,y} I(x, y) h(x) * v(y)."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {image.shape}")
    return _position_sums(_check_maps(image[None], ctx, 1), ctx)[0]


def shift_vector(ctx: EncoderContext, dx: int, dy: int) -> np.ndarray:
    return hdcore.fpe_power(ctx.h_base, dx) * hdcore.fpe_power(ctx.v_base, dy)


@dataclass(frozen=True)
class ObjectTemplate:
    """An object in its canonical frame plus its encodings.

    ``raw`` is the bundle (used for explaining-away magnitudes);
    ``template_vector`` is its phase-normalized form stored in the O codebook.
    """

    id: Hashable
    canonical_image: np.ndarray
    raw: np.ndarray
    template_vector: np.ndarray
    maps: np.ndarray | None = None


SPARSE, PIXEL = "sparse", "pixel"


def make_object_template(
    object_image,
    filters,
    ctx: EncoderContext,
    cfg: SparseConfig = SparseConfig(),
    mode: str = SPARSE,
    id: Hashable = None,
    maps=None,
    whitening=None,
) -> ObjectTemplate:
    """Encode an object placed at the top-left of an L x L canonical frame.

    ``maps`` may carry precomputed feature maps for the frame (sparse mode);
    ``whitening`` is applied to the maps or pixels before encoding.
    """
    image = np.asarray(object_image, dtype=float)
    if image.shape != (ctx.side, ctx.side):
        raise ValueError(f"canonical image must be {ctx.side}x{ctx.side}, got {image.shape}")
    if mode == SPARSE:
        if maps is None:
            maps = infer_maps(image, filters, cfg)
        source = maps if whitening is None else whitening.apply(maps)
        raw = encode_sparse(source, ctx)
    elif mode == PIXEL:
        maps = None
        source = image if whitening is None else whitening.apply(image)
        raw = encode_pixel(source, ctx)
    else:
        raise ValueError(f"unknown encoding mode {mode!r}")
    if not np.any(np.abs(raw) > 0):
        raise DegenerateTemplate(f"object {id!r} encodes to the zero vector")
    return ObjectTemplate(id, image, raw, hdcore.normalize(raw), maps)


class Codebooks(NamedTuple):
    H: Codebook
    V: Codebook
    O: Codebook


def build_codebooks(ctx: EncoderContext, templates: Sequence[ObjectTemplate]) -> Codebooks:
    if len(templates) == 0:
        raise ValueError("at least one object template is required")
    for t in templates:
        if t.template_vector.shape != (ctx.dim,):
            raise ValueError(f"template {t.id!r} has the wrong dimension")
    ids = [t.id if t.id is not None else i for i, t in enumerate(templates)]
    o = Codebook(np.stack([t.template_vector for t in templates]), ids)
    return Codebooks(hdcore.fpe_codebook(ctx.h_base), hdcore.fpe_codebook(ctx.v_base), o)


def compose_query(x: int, y: int, k: int, books: Codebooks) -> np.ndarray:
    """q = h(x) * v(y) * o(k) using codebook rows."""
    for name, i, book in (("x", x, books.H), ("y", y, books.V), ("k", k, books.O)):
        if not 0 <= i < len(book):
            raise IndexError(f"{name}={i} outside codebook of size {len(book)}")
    return books.H[x] * books.V[y] * books.O[k]
