"""Convolutional sparse coding on the torus.

Arrays follow ``[row, col] = [y, x]`` indexing. A dictionary is an
``(n, P, P)`` array of filters, feature maps are ``(n, L, L)`` and images
``(L, L)``. Convolution is circular with the filter origin at its top-left
pixel, so a unit coefficient at ``(x0, y0)`` reproduces the filter with its
top-left corner at ``(x0, y0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .errors import NumericFailure

NORM_ATOL = 1e-9


@dataclass(frozen=True)
class SparseConfig:
    """Solver settings for coefficient inference.

    ``momentum=False`` turns FISTA into plain ISTA, whose objective is
    non-increasing at every iteration.
    """

    lam: float = 0.1
    max_iters: int = 200
    step: float | str = "auto"
    tol: float = 1e-6
    momentum: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if self.step != "auto" and not (isinstance(self.step, (int, float)) and self.step > 0):
            raise ValueError(f"step must be > 0 or 'auto', got {self.step!r}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")


def _as_filters(filters) -> np.ndarray:
    filters = np.asarray(filters, dtype=float)
    if filters.ndim == 2:
        filters = filters[None]
    if filters.ndim != 3 or filters.shape[1] != filters.shape[2] or filters.shape[0] < 1:
        raise ValueError(f"dictionary must have shape (n, P, P), got {filters.shape}")
    return filters


def _as_image(image) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"image must be square, got shape {image.shape}")
    return image


def normalize_filters(filters) -> np.ndarray:
    filters = _as_filters(filters)
    norms = np.sqrt((filters**2).sum(axis=(1, 2), keepdims=True))
    if np.any(norms == 0):
        raise ValueError("cannot normalize an all-zero filter")
    return filters / norms


def check_dictionary(filters) -> np.ndarray:
    filters = _as_filters(filters)
    norms = np.sqrt((filters**2).sum(axis=(1, 2)))
    if np.any(np.abs(norms - 1) > NORM_ATOL):
        raise ValueError("dictionary filters must have unit Euclidean norm")
    return filters


def _pad(filters: np.ndarray, side: int) -> np.ndarray:
    p = filters.shape[-1]
    if p > side:
        raise ValueError(f"filter size {p} exceeds image side {side}")
    out = np.zeros(filters.shape[:-2] + (side, side))
    out[..., :p, :p] = filters
    return out


class ConvOperator:
    """Synthesis operator  maps (..., n, L, L) -> images (..., L, L)."""

    def __init__(self, filters, side: int):
        self.filters = _as_filters(filters)
        self.side = side
        self.fhat = sfft.rfft2(_pad(self.filters, side))

    @property
    def count(self) -> int:
        return self.filters.shape[0]

    def forward(self, maps: np.ndarray) -> np.ndarray:
        mhat = sfft.rfft2(maps)
        return sfft.irfft2((mhat * self.fhat).sum(axis=-3), s=(self.side, self.side))

    def adjoint(self, images: np.ndarray) -> np.ndarray:
        ihat = sfft.rfft2(images)[..., None, :, :]
        return sfft.irfft2(ihat * self.fhat.conj(), s=(self.side, self.side))

    def lipschitz(self) -> float:
        """Exact squared spectral norm: per frequency the operator is a 1 x n row."""
        return float((np.abs(self.fhat) ** 2).sum(axis=0).max())


def convolve_circular(map_, filt) -> np.ndarray:
    """2-D circular convolution of an L x L map with a P x P filter (P <= L)."""
    map_ = _as_image(map_)
    filt = np.asarray(filt, dtype=float)
    if filt.ndim != 2 or filt.shape[0] != filt.shape[1]:
        raise ValueError(f"filter must be square, got shape {filt.shape}")
    op = ConvOperator(filt[None], map_.shape[0])
    return op.forward(map_[None])


def reconstruct(filters, maps) -> np.ndarray:
    """sum_j A_j * phi_j (not clipped)."""
    filters = _as_filters(filters)
    maps = np.asarray(maps, dtype=float)
    if maps.ndim != 3 or maps.shape[0] != filters.shape[0]:
        raise ValueError(
            f"{maps.shape[0] if maps.ndim == 3 else '?'} maps for {filters.shape[0]} filters"
        )
    return ConvOperator(filters, maps.shape[-1]).forward(maps)


def objective(filters, maps, image, lam: float) -> float:
    """0.5 * ||I - sum_j phi_j * A_j||^2 + lam * sum_j ||A_j||_1."""
    image = _as_image(image)
    maps = np.asarray(maps, dtype=float)
    if maps.shape[-2:] != image.shape:
        raise ValueError(f"maps {maps.shape} do not match image {image.shape}")
    resid = image - reconstruct(filters, maps)
    return float(0.5 * np.sum(resid**2) + lam * np.abs(maps).sum())


def soft_threshold(x, theta):
    """sign(x) * max(|x| - theta, 0)."""
    if np.any(np.asarray(theta) < 0):
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.maximum(x - theta, 0.0) - np.maximum(-x - theta, 0.0)
    return out if out.ndim else float(out)


def _solve(op: ConvOperator, images, cfg: SparseConfig, init=None, trace=None):
    """Monotone FISTA (restart on increase) over a batch; returns maps."""
    lam = cfg.lam
    step = 1.0 / op.lipschitz() if cfg.step == "auto" else float(cfg.step)
    shape = images.shape[:-2] + (op.count,) + images.shape[-2:]
    x = np.zeros(shape) if init is None else np.array(init, dtype=float)
    if x.shape != shape:
        raise ValueError(f"initial maps have shape {x.shape}, expected {shape}")
    fx = op.forward(x)
    obj = 0.5 * np.sum((fx - images) ** 2) + lam * np.abs(x).sum()
    if trace is not None:
        trace.append(float(obj))
    y, fy, t = x, fx, 1.0
    for _ in range(cfg.max_iters):
        grad = op.adjoint(fy - images)
        x_new = soft_threshold(y - step * grad, lam * step)
        fx_new = op.forward(x_new)
        obj_new = 0.5 * np.sum((fx_new - images) ** 2) + lam * np.abs(x_new).sum()
        if not np.isfinite(obj_new):
            raise NumericFailure("non-finite objective during sparse inference")
        if cfg.momentum and obj_new > obj:
            # restart from the last accepted iterate
            y, fy, t = x, fx, 1.0
            if trace is not None:
                trace.append(float(obj))
            continue
        rel = (obj - obj_new) / max(obj, np.finfo(float).tiny)
        if cfg.momentum:
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            beta = (t - 1) / t_new
            y = x_new + beta * (x_new - x)
            fy = (1 + beta) * fx_new - beta * fx
            t = t_new
        else:
            y, fy = x_new, fx_new
        x, fx, obj = x_new, fx_new, obj_new
        if trace is not None:
            trace.append(float(obj))
        if rel < cfg.tol:
            break
    return x


def infer_maps(image, filters, cfg: SparseConfig = SparseConfig(), init=None, trace=None):
    """Infer sparse feature maps for one image with the dictionary held fixed.

    Parameters
    ----------
    image : (L, L) array
    filters : (n, P, P) array
    cfg : SparseConfig
    init : optional (n, L, L) warm start
    trace : optional list that receives the objective after every iteration

    Returns
    -------
    (n, L, L) array whose objective never exceeds that of the starting point.
    """
    image = _as_image(image)
    filters = _as_filters(filters)
    if not np.all(np.isfinite(filters)):
        raise NumericFailure("dictionary contains non-finite values")
    op = ConvOperator(filters, image.shape[0])
    return _solve(op, image, cfg, init, trace)


def infer_maps_batch(images, filters, cfg: SparseConfig = SparseConfig(), init=None):
    """Batched inference; the stopping rule uses the summed objective."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 3 or images.shape[1] != images.shape[2]:
        raise ValueError(f"images must have shape (N, L, L), got {images.shape}")
    op = ConvOperator(filters, images.shape[-1])
    return _solve(op, images, cfg, init)


def random_dictionary(n: int, patch: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean, unit-norm Gaussian filters."""
    filters = rng.standard_normal((n, patch, patch))
    filters -= filters.mean(axis=(1, 2), keepdims=True)
    return normalize_filters(filters)


def patch_dictionary(images, n: int, patch: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm filters cut from random image locations.

    Patches are not centered, so the black background stays exactly zero and
    the filters start out spatially localized.
    """
    imgs = np.asarray(images, dtype=float)
    side = imgs.shape[-1]
    out = []
    while len(out) < n:
        i = rng.integers(len(imgs))
        y, x = rng.integers(0, side - patch + 1, size=2)
        cut = imgs[i, y : y + patch, x : x + patch]
        if np.sum(cut**2) > 1e-12:
            out.append(cut)
    return normalize_filters(np.stack(out))


def _filter_lipschitz(mhat: np.ndarray) -> float:
    # per frequency, the map -> image operator is an N x n matrix
    gram = np.einsum("iaf,ibf->fab", mhat.reshape(mhat.shape[0], mhat.shape[1], -1).conj(),
                     mhat.reshape(mhat.shape[0], mhat.shape[1], -1), optimize=True)
    return float(np.linalg.eigvalsh(gram)[:, -1].max())


def _filter_step(filters, maps, op, obj, imgs, total):
    side, patch = imgs.shape[-1], filters.shape[-1]
    mhat = sfft.rfft2(maps)
    rhat = sfft.rfft2(op.forward(maps) - imgs)
    grad = sfft.irfft2((mhat.conj() * rhat[:, None]).sum(axis=0), s=(side, side))
    grad = grad[:, :patch, :patch]
    lip = _filter_lipschitz(mhat)
    step = 1.0 / lip if lip > 0 else 0.0
    for _ in range(30):
        if step == 0.0:
            break
        cand = filters - step * grad
        norms = np.sqrt((cand**2).sum(axis=(1, 2)))
        norms = np.where(norms > 0, norms, 1.0)
        cand = cand / norms[:, None, None]
        cand_maps = maps * norms[None, :, None, None]
        cand_op = ConvOperator(cand, side)
        cand_obj = total(cand_op, cand_maps)
        if cand_obj <= obj:
            return cand, cand_maps, cand_op, cand_obj
        step *= 0.5
    return filters, maps, op, obj


def learn_dictionary(
    images: Sequence[np.ndarray],
    n: int,
    patch: int,
    cfg: SparseConfig = SparseConfig(lam=0.2, max_iters=20),
    rounds: int = 50,
    rng: np.random.Generator | None = None,
    init=None,
    return_history: bool = False,
    filter_steps: int = 1,
):
    """Alternating minimization of the sparse coding objective.

    Each round runs warm-started coefficient inference with the filters
    fixed, then one projected gradient step on the filters. After the step
    each filter is rescaled to unit norm and its map is scaled by the
    inverse factor, which leaves the reconstruction unchanged; the step is
    halved until the total objective does not increase.

    Returns the ``(n, patch, patch)`` dictionary, plus the per-round total
    objective when ``return_history`` is set.
    """
    if len(images) == 0:
        raise ValueError("cannot learn a dictionary from an empty dataset")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    imgs = np.stack([_as_image(im) for im in images])
    side = imgs.shape[-1]
    if patch > side:
        raise ValueError(f"patch size {patch} exceeds image side {side}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if init is None or isinstance(init, str) and init == "random":
        filters = random_dictionary(n, patch, rng)
    elif isinstance(init, str) and init == "patches":
        filters = patch_dictionary(imgs, n, patch, rng)
    else:
        filters = normalize_filters(init)
        if filters.shape != (n, patch, patch):
            raise ValueError(f"initial dictionary has shape {filters.shape}")
    lam = cfg.lam

    def total(op, maps):
        return 0.5 * np.sum((op.forward(maps) - imgs) ** 2) + lam * np.abs(maps).sum()

    maps = np.zeros((imgs.shape[0], n, side, side))
    op = ConvOperator(filters, side)
    history = [float(total(op, maps))]
    for _ in range(rounds):
        maps = _solve(op, imgs, cfg, init=maps)
        obj = total(op, maps)
        for _ in range(filter_steps):
            filters, maps, op, obj = _filter_step(filters, maps, op, obj, imgs, total)
        if not np.isfinite(obj):
            raise NumericFailure("non-finite objective during dictionary learning")
        history.append(float(obj))
    filters = normalize_filters(filters)
    if return_history:
        return filters, history
    return filters


def active_fraction(maps, rel: float = 1e-3) -> float:
    """Fraction of coefficients with |a| > rel * max|a|."""
    maps = np.abs(np.asarray(maps))
    peak = maps.max()
    if peak == 0:
        return 0.0
    return float((maps > rel * peak).mean())
