"""Little-endian binary containers for codebooks, dictionaries and feature maps.

Layouts (all integers little-endian)::

    VSAC  magic(4) version:u16 dim:u32 count:u32 period:u32 payload
          period == 0 -> count*dim complex entries as f64 (re, im) pairs
          period  > 0 -> FPE base, count == 1, dim u32 phase indices
    CSCD  magic(4) version:u16 n:u32 P:u32  n*P*P f64, row-major
    CSCA  magic(4) version:u16 n:u32 L:u32  n*L*L f64, row-major
    WHTN  magic(4) version:u16 p:u32 r:u32 ndim:u32 shape:u32*ndim
          epsilon:f64 mean:f64*p basis:f64*(p*r) row-major inv_scale:f64*r

A sidecar ``key=value`` text file carries anything that is not numeric
payload (labels, canonical placements).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ContainerFormatError
from .hdcore import Codebook, FpeBase

VERSION = 1
_HEAD = struct.Struct("<4sH")


def _check_head(buf: bytes, magic: bytes) -> int:
    if len(buf) < _HEAD.size:
        raise ContainerFormatError(f"file too short for a {magic.decode()} header")
    got, version = _HEAD.unpack_from(buf, 0)
    if got != magic:
        raise ContainerFormatError(f"bad magic: expected {magic!r}, got {got!r}")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported {magic.decode()} version {version}")
    return _HEAD.size


def _payload(buf: bytes, offset: int, dtype: str, count: int) -> np.ndarray:
    need = np.dtype(dtype).itemsize * count
    if len(buf) - offset != need:
        raise ContainerFormatError(
            f"payload size mismatch: expected {need} bytes, found {len(buf) - offset}"
        )
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset).copy()


def codebook_to_bytes(cb: Codebook) -> bytes:
    m, d = cb.vectors.shape
    head = _HEAD.pack(b"VSAC", VERSION) + struct.pack("<III", d, m, 0)
    return head + cb.vectors.astype("<c16").tobytes()


def fpe_to_bytes(base: FpeBase) -> bytes:
    head = _HEAD.pack(b"VSAC", VERSION) + struct.pack("<III", base.dim, 1, base.period)
    return head + base.indices.astype("<u4").tobytes()


def vsac_from_bytes(buf: bytes) -> Codebook | FpeBase:
    off = _check_head(buf, b"VSAC")
    if len(buf) < off + 12:
        raise ContainerFormatError("truncated VSAC header")
    dim, count, period = struct.unpack_from("<III", buf, off)
    off += 12
    if period:
        if count != 1:
            raise ContainerFormatError(f"FPE base container must hold one entry, got {count}")
        return FpeBase(_payload(buf, off, "<u4", dim).astype(np.int64), period)
    vecs = _payload(buf, off, "<c16", dim * count).reshape(count, dim)
    return Codebook(vecs)


def _grid_to_bytes(magic: bytes, grids: np.ndarray) -> bytes:
    grids = np.asarray(grids, dtype="<f8")
    if grids.ndim != 3 or grids.shape[1] != grids.shape[2]:
        raise ValueError(f"expected (n, S, S) array, got shape {grids.shape}")
    n, s, _ = grids.shape
    return _HEAD.pack(magic, VERSION) + struct.pack("<II", n, s) + grids.tobytes()


def _grid_from_bytes(magic: bytes, buf: bytes) -> np.ndarray:
    off = _check_head(buf, magic)
    if len(buf) < off + 8:
        raise ContainerFormatError(f"truncated {magic.decode()} header")
    n, s = struct.unpack_from("<II", buf, off)
    return _payload(buf, off + 8, "<f8", n * s * s).reshape(n, s, s).astype(float)


def dictionary_to_bytes(filters: np.ndarray) -> bytes:
    return _grid_to_bytes(b"CSCD", filters)


def dictionary_from_bytes(buf: bytes) -> np.ndarray:
    return _grid_from_bytes(b"CSCD", buf)


def maps_to_bytes(maps: np.ndarray) -> bytes:
    return _grid_to_bytes(b"CSCA", maps)


def maps_from_bytes(buf: bytes) -> np.ndarray:
    return _grid_from_bytes(b"CSCA", buf)


def whitening_to_bytes(shape, epsilon, mean, basis, inv_scale) -> bytes:
    basis = np.asarray(basis, dtype="<f8")
    p, r = basis.shape
    out = [
        _HEAD.pack(b"WHTN", VERSION),
        struct.pack("<III", p, r, len(shape)),
        struct.pack(f"<{len(shape)}I", *shape),
        struct.pack("<d", float(epsilon)),
        np.asarray(mean, dtype="<f8").tobytes(),
        basis.tobytes(),
        np.asarray(inv_scale, dtype="<f8").tobytes(),
    ]
    return b"".join(out)


def whitening_from_bytes(buf: bytes):
    off = _check_head(buf, b"WHTN")
    try:
        p, r, ndim = struct.unpack_from("<III", buf, off)
        off += 12
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        (epsilon,) = struct.unpack_from("<d", buf, off)
        off += 8
    except struct.error as exc:
        raise ContainerFormatError(f"truncated WHTN header: {exc}") from None
    rest = _payload(buf, off, "<f8", p + p * r + r)
    mean = rest[:p]
    basis = rest[p : p + p * r].reshape(p, r)
    inv_scale = rest[p + p * r :]
    return tuple(shape), epsilon, mean, basis, inv_scale


def write_bytes(path, data: bytes) -> None:
    Path(path).write_bytes(data)


def read_bytes(path) -> bytes:
    return Path(path).read_bytes()


def write_sidecar(path, values: Mapping[str, object]) -> None:
    lines = []
    for key, val in values.items():
        if "=" in key or "\n" in key or "\n" in str(val):
            raise ValueError(f"unrepresentable sidecar entry {key!r}")
        lines.append(f"{key}={val}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ContainerFormatError(f"sidecar line without '=': {line!r}")
        out[key.strip()] = val.strip()
    return out
