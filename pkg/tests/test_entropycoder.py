import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faircodec import entropycoder as ec
from faircodec.entropycoder import (
    CdfError,
    CdfTable,
    Decoder,
    Encoder,
    RangeCoderError,
    build_cdf,
    decode_symbols,
    encode_symbols,
    pack_tables,
    quantize_pmf,
    tables_from_pmfs,
)

BACKENDS = ["python"] + (["cython"] if ec.BACKEND == "cython" else [])


def ideal_bits(symbols, tables, indexes):
    cdfs, sizes = tables
    freq = (cdfs[indexes, symbols + 1].astype(np.float64) - cdfs[indexes, symbols]) / 2 ** 16
    return float(-np.log2(freq).sum())


@st.composite
def streams(draw):
    n_tables = draw(st.integers(1, 4))
    alphabet = draw(st.integers(1, 40))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    length = draw(st.integers(0, 300))
    rng = np.random.default_rng(seed)
    pmfs = rng.dirichlet(np.full(alphabet, draw(st.sampled_from([0.05, 0.5, 5.0]))), size=n_tables)
    tables = tables_from_pmfs(pmfs)
    idx = rng.integers(0, n_tables, length).astype(np.int32)
    sym = np.array([rng.choice(alphabet, p=pmfs[t]) for t in idx], dtype=np.int64)
    return sym, tables, idx


@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(data=streams())
def test_round_trip_and_length_bound(backend, data):
    sym, tables, idx = data
    payload = encode_symbols(sym, tables, idx, backend=backend)
    out = decode_symbols(payload, tables, len(sym), idx, backend=backend)
    np.testing.assert_array_equal(out, sym)
    assert 8 * len(payload) <= ideal_bits(sym, tables, idx) + 40


@settings(max_examples=100, deadline=None)
@given(data=streams())
def test_backends_produce_identical_bytes(data):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    sym, tables, idx = data
    assert encode_symbols(sym, tables, idx, backend="python") == encode_symbols(sym, tables, idx, backend="cython")


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_stream_is_four_bytes(backend):
    t = build_cdf([0.5, 0.5])
    payload = encode_symbols(np.zeros(0, dtype=np.int64), t, backend=backend)
    assert len(payload) == 4
    assert decode_symbols(payload, t, 0, backend=backend).size == 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_carry_propagation_stress(backend):
    # near-certain symbols keep low close to the top of the range, forcing long 0xFF runs
    t = build_cdf([1 - 2 ** -15, 2 ** -15])
    sym = np.zeros(5000, dtype=np.int64)
    sym[::997] = 1
    payload = encode_symbols(sym, t, backend=backend)
    np.testing.assert_array_equal(decode_symbols(payload, t, sym.size, backend=backend), sym)


@pytest.mark.parametrize("backend", BACKENDS)
def test_incremental_encoder_matches_single_call(backend):
    rng = np.random.default_rng(0)
    a, b = build_cdf(rng.dirichlet(np.ones(5))), build_cdf(rng.dirichlet(np.ones(9)))
    s1, s2 = rng.integers(0, 5, 100), rng.integers(0, 9, 80)
    enc = Encoder(backend)
    enc.encode(s1, a)
    enc.encode(s2, b)
    payload = enc.finish()
    dec = Decoder(payload, backend)
    np.testing.assert_array_equal(dec.decode(a, 100), s1)
    np.testing.assert_array_equal(dec.decode(b, 80), s2)
    dec.finish()
    both = encode_symbols(np.concatenate([s1, s2]), [a, b], np.r_[np.zeros(100), np.ones(80)], backend=backend)
    assert both == payload


@pytest.mark.parametrize("backend", BACKENDS)
def test_decoder_errors(backend):
    t = build_cdf([0.25, 0.25, 0.5])
    sym = np.random.default_rng(1).integers(0, 3, 400)
    payload = encode_symbols(sym, t, backend=backend)
    with pytest.raises(RangeCoderError):
        decode_symbols(payload[:-3], t, sym.size, backend=backend)
    with pytest.raises(RangeCoderError, match="unread"):
        decode_symbols(payload + b"\x00", t, sym.size, backend=backend)
    with pytest.raises(RangeCoderError):
        decode_symbols(b"\x01\x02", t, 4, backend=backend)


def test_encoder_rejects_bad_symbols_and_indexes():
    t = build_cdf([0.5, 0.5])
    with pytest.raises(RangeCoderError, match="position 2"):
        encode_symbols([0, 1, 2], t)
    with pytest.raises(RangeCoderError):
        encode_symbols([0, -1], t)
    with pytest.raises(RangeCoderError, match="indexes"):
        encode_symbols([0, 1], [t, t])
    with pytest.raises(RangeCoderError, match="out of range"):
        encode_symbols([0, 1], [t, t], [0, 2])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=300))
def test_quantize_pmf_invariants(weights):
    w = np.asarray(weights) + 1e-12
    freq = quantize_pmf(w / w.sum())
    assert freq.sum() == 2 ** 16
    assert freq.min() >= 1


def test_quantize_pmf_negative_residue_path():
    # many tiny entries floored to 1 exceed what the largest entry can give back
    pmf = np.full(40000, 1e-9)
    pmf[0] = 1 - pmf[1:].sum()
    pmf[1] = 0.0
    pmf = pmf / pmf.sum()
    freq = quantize_pmf(pmf)
    assert freq.sum() == 2 ** 16 and freq.min() == 1


def test_cdf_validation():
    with pytest.raises(CdfError):
        quantize_pmf([0.5, 0.6])
    with pytest.raises(CdfError):
        quantize_pmf([])
    with pytest.raises(CdfError):
        quantize_pmf([1.5, -0.5])
    with pytest.raises(CdfError):
        pack_tables([])
    with pytest.raises(CdfError, match="precision"):
        pack_tables([CdfTable(np.array([0, 4096], dtype=np.uint32), 12)])


def test_cdf_table_properties():
    t = build_cdf([0.25, 0.75])
    np.testing.assert_array_equal(t.cumulative, [0, 16384, 65536])
    assert t.alphabet_size == 2
    np.testing.assert_allclose(t.probabilities(), [0.25, 0.75])
    assert t == build_cdf([0.25, 0.75]) and hash(t) == hash(build_cdf([0.25, 0.75]))
    mat, sizes = pack_tables([t, build_cdf([1 / 3] * 3)])
    assert mat.shape == (2, 4) and list(sizes) == [2, 3]


def test_backend_selection():
    assert ec.get_backend("python") is ec._pycoder
    with pytest.raises(ValueError):
        ec.get_backend("fortran")


def test_environment_forces_pure_python():
    import os
    import subprocess
    import sys

    env = dict(os.environ, FAIRCODEC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import faircodec.entropycoder as e; print(e.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
