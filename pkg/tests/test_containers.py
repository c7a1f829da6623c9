import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenefactor import containers as c
from scenefactor import hdcore as hd
from scenefactor.errors import ContainerFormatError
from scenefactor.whitening import WhiteningTransform, fit_whitening


def test_vsac_codebook_layout_byte_exact():
    cb = hd.Codebook(np.array([[complex(1, 2), complex(0, -0.5)]]))
    buf = c.codebook_to_bytes(cb)
    expected = (
        b"VSAC" + struct.pack("<H", 1) + struct.pack("<III", 2, 1, 0)
        + struct.pack("<4d", 1.0, 2.0, 0.0, -0.5)
    )
    assert buf == expected


def test_vsac_fpe_layout_byte_exact():
    base = hd.FpeBase(np.array([3, 0, 6]), 7)
    buf = c.fpe_to_bytes(base)
    assert buf == b"VSAC" + struct.pack("<HIII", 1, 3, 1, 7) + struct.pack("<3I", 3, 0, 6)
    back = c.vsac_from_bytes(buf)
    assert isinstance(back, hd.FpeBase)
    assert back.period == 7 and np.array_equal(back.indices, [3, 0, 6])


@settings(max_examples=30)
@given(st.integers(1, 6), st.integers(1, 40), st.integers(0, 2**31))
def test_codebook_roundtrip(m, d, seed):
    cb = hd.Codebook(hd.random_phasors(m, d, np.random.default_rng(seed)))
    back = c.vsac_from_bytes(c.codebook_to_bytes(cb))
    assert np.array_equal(back.vectors, cb.vectors)


def test_grid_roundtrips(tmp_path):
    rng = np.random.default_rng(0)
    filters = rng.normal(size=(3, 5, 5))
    maps = rng.normal(size=(3, 9, 9))
    c.write_bytes(tmp_path / "d.cscd", c.dictionary_to_bytes(filters))
    assert np.array_equal(c.dictionary_from_bytes(c.read_bytes(tmp_path / "d.cscd")), filters)
    assert np.array_equal(c.maps_from_bytes(c.maps_to_bytes(maps)), maps)
    head = c.dictionary_to_bytes(filters)[:14]
    assert head == b"CSCD" + struct.pack("<HII", 1, 3, 5)
    with pytest.raises(ValueError):
        c.dictionary_to_bytes(np.zeros((2, 3, 4)))


def test_whitening_roundtrip():
    rng = np.random.default_rng(1)
    wt = fit_whitening([rng.normal(size=(2, 4, 4)) for _ in range(5)])
    back = WhiteningTransform.from_bytes(wt.to_bytes())
    assert back.source_shape == (2, 4, 4)
    assert back.epsilon == wt.epsilon
    for a, b in ((back.basis, wt.basis), (back.inv_scale, wt.inv_scale), (back.mean, wt.mean)):
        assert np.array_equal(a, b)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda b: b"XXXX" + b[4:], "bad magic"),
        (lambda b: b[:4] + struct.pack("<H", 9) + b[6:], "version"),
        (lambda b: b[:-1], "payload size"),
        (lambda b: b + b"\0", "payload size"),
        (lambda b: b[:3], "too short"),
        (lambda b: b[:10], "truncated"),
    ],
)
def test_vsac_rejects_corruption(mutate, message):
    buf = c.codebook_to_bytes(hd.Codebook(np.ones((2, 3))))
    with pytest.raises(ContainerFormatError, match=message):
        c.vsac_from_bytes(mutate(buf))


def test_magic_mismatch_between_kinds():
    buf = c.maps_to_bytes(np.zeros((1, 2, 2)))
    with pytest.raises(ContainerFormatError):
        c.dictionary_from_bytes(buf)
    with pytest.raises(ContainerFormatError):
        c.whitening_from_bytes(b"WHTN" + struct.pack("<H", 1) + b"\0\0")


def test_fpe_container_single_entry():
    buf = b"VSAC" + struct.pack("<HIII", 1, 2, 2, 5) + struct.pack("<4I", 0, 1, 2, 3)
    with pytest.raises(ContainerFormatError, match="one entry"):
        c.vsac_from_bytes(buf)


def test_sidecar_roundtrip(tmp_path):
    p = tmp_path / "meta.txt"
    c.write_sidecar(p, {"labels": "A,B", "side": 60})
    assert c.read_sidecar(p) == {"labels": "A,B", "side": "60"}
    with pytest.raises(ValueError):
        c.write_sidecar(p, {"a=b": 1})
