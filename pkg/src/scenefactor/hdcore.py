"""Complex phasor vector algebra (Fourier holographic reduced representations).

Vectors are plain 1-D ``complex128`` numpy arrays. A *phasor* vector has
unit-modulus components; bundles are unconstrained complex vectors. Position
vectors use fractional power encoding whose phases are restricted to the
L-th roots of unity, stored as integer indices so that periodicity and
exponent additivity hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

PHASOR_ATOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_dim(dim) -> int:
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    return int(dim)


def _same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def is_phasor(v: np.ndarray, atol: float = PHASOR_ATOL) -> bool:
    return bool(np.all(np.abs(np.abs(v) - 1.0) <= atol))


def random_phasor(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random phasor vector with phases i.i.d. uniform on [-pi, pi)."""
    dim = _check_dim(dim)
    phases = rng.uniform(-np.pi, np.pi, size=dim)
    return np.exp(1j * phases)


def random_phasors(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent random phasors as rows of a (count, dim) array."""
    dim = _check_dim(dim)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return np.exp(1j * rng.uniform(-np.pi, np.pi, size=(count, dim)))


@dataclass(frozen=True)
class FpeBase:
    """Fractional power encoding base with phases on the L-th roots of unity.

    ``indices[d]`` is the integer k_d so that omega_d = 2*pi*k_d / period.
    """

    indices: np.ndarray
    period: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("indices must be a non-empty 1-D sequence")
        if idx.min() < 0 or idx.max() >= self.period:
            raise ValueError("phase indices must lie in [0, period)")
        object.__setattr__(self, "indices", _frozen(idx.copy()))

    @property
    def dim(self) -> int:
        return self.indices.size

    @property
    def phases(self) -> np.ndarray:
        """Angles omega_d in [-pi, pi)."""
        k = np.where(2 * self.indices >= self.period, self.indices - self.period, self.indices)
        return 2 * np.pi * k / self.period

    def roots(self) -> np.ndarray:
        return np.exp(2j * np.pi * np.arange(self.period) / self.period)


def fpe_base(dim: int, period: int, rng: np.random.Generator) -> FpeBase:
    dim = _check_dim(dim)
    if int(period) != period or period < 1:
        raise ValueError(f"period must be a positive integer, got {period!r}")
    return FpeBase(rng.integers(0, int(period), size=dim), int(period))


def fpe_power(base: FpeBase, x: int) -> np.ndarray:
    """h(x): component d is exp(i * omega_d * x), exact modulo the period."""
    idx = (base.indices * (int(x) % base.period)) % base.period
    return base.roots()[idx]


def fpe_table(base: FpeBase, xs: Iterable[int] | None = None) -> np.ndarray:
    """Rows fpe_power(base, x) for each x (default 0..period-1)."""
    if xs is None:
        xs = np.arange(base.period)
    xs = np.asarray(list(xs) if not isinstance(xs, np.ndarray) else xs, dtype=np.int64)
    idx = (np.outer(xs % base.period, base.indices)) % base.period
    return base.roots()[idx]


def bind(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_dims(a, b)
    return a * b


def conjugate(a: np.ndarray) -> np.ndarray:
    return np.conj(a)


def bundle(terms: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Weighted component-wise sum of ``(weight, vector)`` pairs."""
    if len(terms) == 0:
        raise ValueError("cannot bundle an empty list")
    out = np.zeros_like(np.asarray(terms[0][1], dtype=complex))
    for w, v in terms:
        _same_dims(out, v)
        out = out + w * v
    return out


def similarity(a: np.ndarray, b: np.ndarray) -> complex:
    """Normalized Hermitian inner product (1/D) * sum_d a_d * conj(b_d)."""
    _same_dims(a, b)
    return complex(np.vdot(b, a) / a.shape[-1])


def normalize(a: np.ndarray) -> np.ndarray:
    """Project every component onto the unit circle; zeros map to 1+0j."""
    a = np.asarray(a, dtype=complex)
    mag = np.abs(a)
    zero = mag == 0
    out = np.divide(a, mag, out=np.ones_like(a), where=~zero)
    return out


@dataclass(frozen=True)
class Codebook:
    """M labelled vectors of dimension D, stored as rows of ``vectors``."""

    vectors: np.ndarray
    labels: tuple[Hashable, ...] = field(default=None)

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=complex)
        if vecs.ndim != 2 or vecs.shape[0] < 1:
            raise ValueError("a codebook needs at least one vector")
        labels = tuple(range(vecs.shape[0])) if self.labels is None else tuple(self.labels)
        if len(labels) != vecs.shape[0]:
            raise ValueError(f"{len(labels)} labels for {vecs.shape[0]} vectors")
        if len(set(labels)) != len(labels):
            raise ValueError("codebook labels must be unique")
        object.__setattr__(self, "vectors", _frozen(vecs))
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.vectors[i]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """The D x M matrix whose columns are the codewords."""
        return self.vectors.T

    def similarities(self, v: np.ndarray) -> np.ndarray:
        """Normalized similarity of ``v`` against every entry."""
        if v.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: {v.shape} vs ({self.dim},)")
        return self.vectors.conj() @ v / self.dim

    def project(self, v: np.ndarray) -> np.ndarray:
        """M M^dagger v (un-normalized cleanup through the codebook)."""
        return (self.vectors.conj() @ v) @ self.vectors

    def index(self, label: Hashable) -> int:
        return self.labels.index(label)


def fpe_codebook(base: FpeBase) -> Codebook:
    return Codebook(fpe_table(base))
