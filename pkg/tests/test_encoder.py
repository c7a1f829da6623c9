import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenefactor import datasets as ds
from scenefactor import hdcore as hd
from scenefactor.encoder import (
    PIXEL, SPARSE, Codebooks, EncoderContext, build_codebooks, compose_query, encode_pixel, encode_sparse,
    make_context, make_object_template, shift_vector,
)
from scenefactor.errors import DegenerateTemplate
from scenefactor.resonator import StoppingCriterion, brute_force, run
from scenefactor.sparse import SparseConfig

BARS = ds.bars_dictionary()


def direct_sparse(maps, ctx):
    """Term-by-term bundle over every coefficient, zeros included."""
    z = np.zeros(ctx.dim, dtype=complex)
    for j in range(maps.shape[0]):
        for y in range(ctx.side):
            for x in range(ctx.side):
                h = hd.fpe_power(ctx.h_base, x)
                v = hd.fpe_power(ctx.v_base, y)
                z += maps[j, y, x] * h * v * ctx.basis[j]
    return z


def ctx_for(seed, dim=64, side=6, n=2):
    return make_context(dim, side, n, np.random.default_rng(seed))


def test_context_draw_order():
    r = np.random.default_rng(3)
    ctx = make_context(32, 5, 2, np.random.default_rng(3))
    h = hd.fpe_base(32, 5, r)
    v = hd.fpe_base(32, 5, r)
    b = hd.random_phasors(2, 32, r)
    assert np.array_equal(ctx.h_base.indices, h.indices)
    assert np.array_equal(ctx.v_base.indices, v.indices)
    assert np.array_equal(ctx.basis.vectors, b)
    assert ctx.dim == 32 and ctx.side == 5


def test_context_validation():
    r = np.random.default_rng(0)
    with pytest.raises(ValueError):
        EncoderContext(hd.fpe_base(8, 5, r), hd.fpe_base(8, 6, r), hd.Codebook(np.ones((1, 8))))
    with pytest.raises(ValueError):
        EncoderContext(hd.fpe_base(8, 5, r), hd.fpe_base(8, 5, r), hd.Codebook(np.ones((1, 9))))


@pytest.mark.parametrize("density", [0.02, 0.5])
def test_encode_sparse_matches_direct_sum(density):
    # both the gather route and the FFT route
    r = np.random.default_rng(1)
    ctx = ctx_for(1)
    maps = r.normal(size=(2, 6, 6)) * (r.uniform(size=(2, 6, 6)) < density)
    assert np.allclose(encode_sparse(maps, ctx), direct_sparse(maps, ctx), atol=1e-10)


def test_encode_pixel_matches_direct_sum():
    r = np.random.default_rng(2)
    ctx = ctx_for(2)
    img = r.uniform(size=(6, 6))
    z = sum(img[y, x] * hd.fpe_power(ctx.h_base, x) * hd.fpe_power(ctx.v_base, y)
            for y in range(6) for x in range(6))
    assert np.allclose(encode_pixel(img, ctx), z, atol=1e-10)


def test_single_terms_and_zero():
    ctx = ctx_for(4)
    assert np.array_equal(encode_sparse(np.zeros((2, 6, 6)), ctx), np.zeros(64, complex))
    assert np.array_equal(encode_pixel(np.zeros((6, 6)), ctx), np.zeros(64, complex))
    maps = np.zeros((2, 6, 6))
    maps[1, 4, 2] = 2.5  # A_1 at x=2, y=4
    h2, v4 = hd.fpe_power(ctx.h_base, 2), hd.fpe_power(ctx.v_base, 4)
    assert np.allclose(encode_sparse(maps, ctx), 2.5 * h2 * v4 * ctx.basis[1], atol=1e-12)
    img = np.zeros((6, 6))
    img[4, 2] = 1.0
    assert np.allclose(encode_pixel(img, ctx), h2 * v4, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(-20, 20), st.integers(-20, 20))
def test_shift_equivariance(seed, dx, dy):
    r = np.random.default_rng(seed)
    ctx = ctx_for(seed % 1000)
    maps = r.normal(size=(2, 6, 6)) * (r.uniform(size=(2, 6, 6)) < 0.3)
    moved = np.roll(maps, (dy, dx), axis=(1, 2))
    s = shift_vector(ctx, dx, dy)
    assert np.allclose(encode_sparse(moved, ctx), s * encode_sparse(maps, ctx), atol=1e-10)
    img = r.uniform(size=(6, 6))
    assert np.allclose(encode_pixel(np.roll(img, (dy, dx), axis=(0, 1)), ctx), s * encode_pixel(img, ctx), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    r = np.random.default_rng(seed)
    ctx = ctx_for(5)
    m1, m2 = r.normal(size=(2, 2, 6, 6))
    lhs = encode_sparse(a * m1 + b * m2, ctx)
    rhs = a * encode_sparse(m1, ctx) + b * encode_sparse(m2, ctx)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_shape_errors():
    ctx = ctx_for(6)
    with pytest.raises(ValueError):
        encode_sparse(np.zeros((3, 6, 6)), ctx)
    with pytest.raises(ValueError):
        encode_sparse(np.zeros((2, 5, 5)), ctx)
    with pytest.raises(ValueError):
        encode_pixel(np.zeros((5, 5)), ctx)
    with pytest.raises(ValueError):
        make_object_template(np.zeros((5, 5)), BARS, ctx)
    with pytest.raises(ValueError):
        make_object_template(np.ones((6, 6)), BARS, ctx, mode="other")


def test_empty_template_is_degenerate():
    ctx = make_context(64, 10, 2, np.random.default_rng(0))
    for mode in (SPARSE, PIXEL):
        with pytest.raises(DegenerateTemplate):
            make_object_template(np.zeros((10, 10)), BARS, ctx, mode=mode)


def test_single_bar_template_is_one_term():
    ctx = make_context(2000, 12, 2, np.random.default_rng(1))
    shape = ds.bars_shape([(ds.VERTICAL, 0, 0)])
    t = make_object_template(ds.canonical_frame(shape.grid, 12), BARS, ctx, SparseConfig(lam=0.1))
    expect = ctx.basis[0]  # h(0) v(0) b(0)
    assert abs(hd.similarity(t.template_vector, expect)) > 0.99
    assert t.maps is not None and np.argmax(np.abs(t.maps)) == 0


def test_modes_give_dissimilar_vectors():
    ctx = make_context(10000, 20, 2, np.random.default_rng(2))
    shape = ds.gen_bars_shapes(1, np.random.default_rng(3))[0]
    frame = ds.canonical_frame(shape.grid, 20)
    a = make_object_template(frame, BARS, ctx, SparseConfig(lam=0.1), SPARSE)
    b = make_object_template(frame, BARS, ctx, mode=PIXEL)
    assert abs(hd.similarity(a.template_vector, b.template_vector)) < 0.2
    assert hd.is_phasor(a.template_vector) and b.maps is None


def test_template_accepts_precomputed_maps():
    ctx = make_context(256, 10, 2, np.random.default_rng(4))
    maps = np.zeros((2, 10, 10))
    maps[0, 0, 3] = 1.0
    t = make_object_template(np.ones((10, 10)), BARS, ctx, maps=maps)
    assert np.allclose(t.raw, encode_sparse(maps, ctx))


def test_codebooks_and_query():
    ctx = make_context(500, 7, 2, np.random.default_rng(5))
    r = np.random.default_rng(6)
    frames = [ds.canonical_frame(s.grid, 8)[:7, :7] for s in ds.gen_bars_shapes(3, r)]
    temps = [make_object_template(f, BARS, ctx, mode=PIXEL, id=f"s{i}") for i, f in enumerate(frames)]
    books = build_codebooks(ctx, temps)
    assert (len(books.H), len(books.V), len(books.O)) == (7, 7, 3)
    assert np.array_equal(books.H[0], np.ones(500, complex))
    assert books.O.labels == ("s0", "s1", "s2")
    for x in range(7):
        assert np.allclose(books.H[x] * books.H[x].conj(), 1)
    assert np.allclose(compose_query(0, 0, 2, books), books.O[2])
    q = compose_query(3, 5, 1, books)
    assert np.allclose(q * np.conj(books.H[3] * books.V[5]), books.O[1], atol=1e-12)
    for bad in ((7, 0, 0), (0, -1, 0), (0, 0, 3)):
        with pytest.raises(IndexError):
            compose_query(*bad, books)
    with pytest.raises(ValueError):
        build_codebooks(ctx, [])


def test_compose_then_resonate_matches_brute_force():
    agree = 0
    for trial in range(200):
        r = np.random.default_rng(1000 + trial)
        ctx = make_context(2500, 20, 1, r)
        o = hd.Codebook(hd.random_phasors(10, 2500, r))
        books = Codebooks(hd.fpe_codebook(ctx.h_base), hd.fpe_codebook(ctx.v_base), o)
        x, y, k = (int(v) for v in r.integers(0, [20, 20, 10]))
        q = compose_query(x, y, k, books)
        res = run(q, books, StoppingCriterion(max_iters=100), r)
        assert brute_force(q, books) == (x, y, k)
        agree += res.triple == (x, y, k)
    assert agree / 200 > 0.99
