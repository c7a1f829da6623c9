import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from scenefactor import hdcore as hd

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 64)


def rng(seed=0):
    return np.random.default_rng(seed)


# -- generation -------------------------------------------------------------------


def test_random_phasor_deterministic_and_unit():
    a = hd.random_phasor(4, rng(7))
    b = hd.random_phasor(4, rng(7))
    assert np.array_equal(a, b)
    v = hd.random_phasor(1000, rng(1))
    assert np.all(np.abs(np.abs(v) - 1) <= 1e-12)
    assert hd.is_phasor(v)


@pytest.mark.parametrize("dim", [0, -3, 2.5])
def test_random_phasor_rejects_bad_dim(dim):
    with pytest.raises(ValueError):
        hd.random_phasor(dim, rng())


def test_random_phasors_rows_independent():
    m = hd.random_phasors(5, 2000, rng(2))
    assert m.shape == (5, 2000)
    g = np.abs(m.conj() @ m.T) / 2000
    assert np.allclose(np.diag(g), 1)
    assert np.max(g - np.eye(5)) < 0.1


def test_independent_draws_nearly_orthogonal_large_dim():
    # |s| concentrates at sqrt(pi / 4D) ~ 0.009 for D = 10000
    worst = max(
        abs(hd.similarity(hd.random_phasor(10000, rng(2 * i)), hd.random_phasor(10000, rng(2 * i + 1))))
        for i in range(100)
    )
    assert worst < 0.05


def test_similarity_tail_and_mean_at_2500():
    r = rng(3)
    a = hd.random_phasors(1000, 2500, r)
    b = hd.random_phasors(1000, 2500, r)
    s = np.abs(np.sum(a * b.conj(), axis=1)) / 2500
    assert np.percentile(s, 99) < 0.1
    assert s.mean() < 0.03
    # Rayleigh mean of |s| for independent uniform phases
    assert s.mean() == pytest.approx(np.sqrt(np.pi / (4 * 2500)), rel=0.1)


def test_fpe_base_period_one_forces_zero_phase():
    base = hd.fpe_base(8, 1, rng())
    assert np.all(base.indices == 0)
    assert np.array_equal(hd.fpe_power(base, 5), np.ones(8, dtype=complex))


def test_fpe_base_indices_range_and_uniformity():
    base = hd.fpe_base(2500, 100, rng(4))
    assert base.indices.min() >= 0 and base.indices.max() <= 99
    big = hd.fpe_base(100_000, 100, rng(5))
    counts = np.bincount(big.indices, minlength=100)
    assert stats.chisquare(counts).pvalue > 0.01


@pytest.mark.parametrize("period", [0, -1, 1.5])
def test_fpe_base_rejects_bad_period(period):
    with pytest.raises(ValueError):
        hd.fpe_base(8, period, rng())


def test_fpe_base_validates_indices():
    with pytest.raises(ValueError):
        hd.FpeBase(np.array([0, 5]), 5)
    with pytest.raises(ValueError):
        hd.FpeBase(np.array([], dtype=int), 5)


def test_fpe_phases_are_multiples_of_root():
    base = hd.fpe_base(500, 12, rng(6))
    k = base.phases * 12 / (2 * np.pi)
    assert np.allclose(k, np.round(k), atol=1e-12)
    assert np.all(base.phases >= -np.pi) and np.all(base.phases < np.pi)
    assert np.allclose(hd.fpe_power(base, 1), np.exp(1j * base.phases), atol=1e-12)


# -- fpe algebra (exact) ------------------------------------------------------------


@given(seeds, st.integers(1, 50), st.integers(-500, 500), st.integers(-500, 500))
def test_fpe_exact_periodicity_and_additivity(seed, period, a, b):
    base = hd.fpe_base(32, period, rng(seed))
    assert np.array_equal(hd.fpe_power(base, a + period), hd.fpe_power(base, a))
    assert np.array_equal(hd.fpe_power(base, a), hd.fpe_power(base, a % period))
    # both sides index the same table of roots, so equality is bit-exact up to
    # one complex product rounding on the right
    lhs = hd.fpe_power(base, a + b)
    rhs = hd.bind(hd.fpe_power(base, a), hd.fpe_power(base, b))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_fpe_zero_is_ones_and_table_rows():
    base = hd.fpe_base(64, 10, rng(8))
    assert np.array_equal(hd.fpe_power(base, 0), np.ones(64, dtype=complex))
    table = hd.fpe_table(base)
    assert table.shape == (10, 64)
    for x in range(10):
        assert np.array_equal(table[x], hd.fpe_power(base, x))
    assert np.array_equal(hd.fpe_table(base, [-1, 13]), np.stack([hd.fpe_power(base, 9), hd.fpe_power(base, 3)]))


# -- binding -------------------------------------------------------------------------


@given(seeds, dims)
def test_bind_properties(seed, dim):
    r = rng(seed)
    a, b = hd.random_phasor(dim, r), hd.random_phasor(dim, r)
    ones = np.ones(dim, dtype=complex)
    assert np.allclose(hd.bind(a, hd.conjugate(a)), ones, atol=1e-12)
    assert np.array_equal(hd.bind(ones, a), a)
    # fused multiply-add may differ by one ulp between operand orders
    assert np.max(np.abs(hd.bind(a, b) - hd.bind(b, a))) <= 1e-15
    q = hd.bind(a, b)
    assert np.max(np.abs(hd.bind(q, hd.conjugate(b)) - a)) <= 1e-9


def test_bind_dimension_mismatch():
    with pytest.raises(ValueError):
        hd.bind(np.ones(3, complex), np.ones(4, complex))


@given(seeds, dims)
def test_conjugate_involution(seed, dim):
    v = hd.random_phasor(dim, rng(seed))
    assert np.array_equal(hd.conjugate(hd.conjugate(v)), v)
    ones = np.ones(dim, dtype=complex)
    assert np.array_equal(hd.conjugate(ones), ones)


def test_bundle():
    r = rng(9)
    v, w = hd.random_phasor(16, r), hd.random_phasor(16, r)
    assert np.array_equal(hd.bundle([(1, v)]), v)
    assert np.array_equal(hd.bundle([(1, v), (-1, v)]), np.zeros(16, dtype=complex))
    assert np.allclose(hd.bundle([(2, v), (3, w)]), 2 * v + 3 * w)
    with pytest.raises(ValueError):
        hd.bundle([])
    with pytest.raises(ValueError):
        hd.bundle([(1, v), (1, np.ones(3))])


@given(seeds, dims)
def test_similarity_properties(seed, dim):
    r = rng(seed)
    h, v, w = (hd.random_phasor(dim, r) for _ in range(3))
    assert abs(hd.similarity(v, v) - 1) <= 1e-12
    assert abs(hd.similarity(hd.bind(h, v), hd.bind(h, w)) - hd.similarity(v, w)) <= 1e-12
    # Hermitian: conj-swapped
    assert abs(hd.similarity(v, w) - np.conj(hd.similarity(w, v))) <= 1e-12


def test_similarity_oracle_definition():
    a = np.array([1, 1j, -1])
    b = np.array([1j, 1j, 1])
    expected = (1 * -1j + 1j * -1j + -1 * 1) / 3
    assert hd.similarity(a, b) == pytest.approx(expected)


def test_normalize_examples():
    assert np.array_equal(hd.normalize(np.full(5, 3 + 0j)), np.ones(5, dtype=complex))
    out = hd.normalize(np.array([0, 3 - 4j, -2]))
    assert np.allclose(out, [1, 0.6 - 0.8j, -1])


@given(seeds, dims)
def test_normalize_idempotent(seed, dim):
    r = rng(seed)
    v = hd.random_phasor(dim, r)
    assert np.max(np.abs(hd.normalize(v) - v)) <= 1e-12
    z = r.normal(size=dim) + 1j * r.normal(size=dim)
    n1 = hd.normalize(z)
    assert hd.is_phasor(n1)
    assert np.max(np.abs(hd.normalize(n1) - n1)) <= 1e-12


# -- codebook ------------------------------------------------------------------------


def test_codebook_basics():
    r = rng(10)
    vecs = hd.random_phasors(4, 100, r)
    cb = hd.Codebook(vecs, ["a", "b", "c", "d"])
    assert len(cb) == 4 and cb.dim == 100
    assert cb.matrix.shape == (100, 4)
    assert cb.index("c") == 2
    sims = cb.similarities(vecs[1])
    assert sims[1] == pytest.approx(1)
    m = cb.matrix
    assert np.allclose(cb.project(vecs[0]), m @ (m.conj().T @ vecs[0]))
    with pytest.raises(ValueError):
        cb.vectors[0, 0] = 0


def test_codebook_validation():
    with pytest.raises(ValueError):
        hd.Codebook(np.ones((2, 3)), ["x", "x"])
    with pytest.raises(ValueError):
        hd.Codebook(np.ones((2, 3)), ["x"])
    with pytest.raises(ValueError):
        hd.Codebook(np.ones((0, 3)))
    cb = hd.Codebook(np.ones((2, 3)))
    assert cb.labels == (0, 1)
    with pytest.raises(ValueError):
        cb.similarities(np.ones(4))


def test_fpe_codebook_rows():
    base = hd.fpe_base(50, 7, rng(11))
    cb = hd.fpe_codebook(base)
    assert len(cb) == 7
    assert np.array_equal(cb[0], np.ones(50, dtype=complex))
    for x in range(7):
        assert np.allclose(hd.bind(cb[x], hd.conjugate(cb[x])), 1)


@settings(max_examples=25)
@given(seeds, st.integers(1, 20))
def test_unbinding_recovers_factor(seed, period):
    r = rng(seed)
    h = hd.fpe_base(40, period, r)
    v = hd.random_phasor(40, r)
    for x in range(period):
        q = hd.bind(hd.fpe_power(h, x), v)
        assert np.max(np.abs(hd.bind(q, hd.conjugate(hd.fpe_power(h, x))) - v)) <= 1e-9
