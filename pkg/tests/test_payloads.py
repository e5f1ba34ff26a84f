import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnnids.errors import EmptyKey
from rnnids.payloads import (
    DEFAULT_KEY,
    STUB_MARKER,
    PayloadCorpus,
    base_payload,
    build_corpus,
    build_spectral,
    read_corpus_dir,
    render_pgm,
    toy_encode,
    write_corpus,
    xor_sliding,
)


def test_base_payload_fixture():
    base = base_payload()
    assert len(base) == 64


def test_zero_iterations_identity():
    assert toy_encode(b"payload", b"k", 0) == b"payload"


@given(st.binary(max_size=200), st.binary(min_size=1, max_size=8))
def test_xor_is_involution(data, key):
    assert xor_sliding(xor_sliding(data, key), key) == data


def test_xor_key_slides_per_block():
    # key "AB": positions 0,1 use A,B; the next block starts one further along
    out = xor_sliding(bytes(6), b"\x01\x02")
    assert out == bytes([1, 2, 2, 1, 1, 2])


def test_encode_structure_and_determinism():
    base = b"\x41" * 10
    one = toy_encode(base, b"\x0f", 1, rng_seed=4)
    assert one[:8] == STUB_MARKER
    assert len(one) == 8 + 2 + 10
    assert one[10:] == bytes(b ^ 0x0F for b in base)
    assert toy_encode(base, DEFAULT_KEY, 3, 9) == toy_encode(base, DEFAULT_KEY, 3, 9)
    assert len(toy_encode(base, DEFAULT_KEY, 3, 9)) == 10 + 3 * 10


def test_encode_round_body_is_undone_by_same_key():
    base = b"round body"
    key = b"\x10\x20\x30"
    enc = toy_encode(base, key, 1)
    assert xor_sliding(enc[10:], key) == base


def test_empty_key():
    with pytest.raises(EmptyKey):
        toy_encode(b"x", b"", 1)
    with pytest.raises(EmptyKey):
        xor_sliding(b"x", b"")


def test_negative_iterations():
    with pytest.raises(ValueError):
        toy_encode(b"x", b"k", -1)


def test_corpus_variant_zero_is_base():
    corpus = build_corpus(b"abc", max_iterations=3)
    assert corpus.variants[0] == b"abc"
    assert len(corpus.variants) == 4
    with pytest.raises(ValueError):
        PayloadCorpus((b"x",), "e", b"y")


def test_corpus_dir_roundtrip(tmp_path):
    corpus = build_corpus(base_payload(), max_iterations=5, rng_seed=2)
    write_corpus(corpus, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir())[:2] == ["manifest.json", "variant_0.bin"]
    assert read_corpus_dir(tmp_path) == corpus


def test_spectral_padding():
    m = build_spectral([b"ab", b"abcd"])
    assert m.cells.shape == (2, 4)
    assert m.cells[0].tolist() == [0x61, 0x62, 0, 0]
    assert m.lengths == (2, 4)
    assert m.row_bytes(0) == b"ab"


def test_spectral_single_variant():
    m = build_spectral([b"xyz"])
    assert m.cells.tolist() == [list(b"xyz")]


def test_row_lengths_survive_trailing_zeros():
    m = build_spectral([b"a\x00\x00", b"abcdef"])
    assert m.row_bytes(0) == b"a\x00\x00"


def test_pgm_format():
    m = build_spectral([b"\x00\xff"])
    assert render_pgm(m) == b"P5\n2 1\n255\n\x00\xff"


def test_pgm_all_black():
    m = build_spectral([bytes(5), bytes(5)])
    body = render_pgm(m)[len(b"P5\n5 2\n255\n"):]
    assert body == bytes(10)


def test_pgm_deterministic():
    m = build_spectral(build_corpus(base_payload(), max_iterations=10).variants)
    assert render_pgm(m) == render_pgm(m)


@settings(max_examples=20, deadline=None)
@given(st.binary(min_size=1, max_size=40), st.binary(min_size=1, max_size=4),
       st.integers(10, 30), st.integers(0, 1000))
def test_constant_columns_exist(base, key, n, seed):
    # any corpus of >= 10 encoded variants keeps the stub at fixed columns
    variants = [toy_encode(base, key, k, seed + k) for k in range(1, n + 1)]
    m = build_spectral(variants)
    constant = m.constant_columns()
    assert len(constant) >= 8
    assert set(range(8)) <= set(constant)


def test_constant_columns_scan_matches_bruteforce():
    m = build_spectral(build_corpus(base_payload(), max_iterations=20).variants)
    brute = [c for c in range(m.cols) if len({int(m.cells[r, c]) for r in range(m.rows)}) == 1]
    assert m.constant_columns() == brute
    assert np.all(m.cells[:, :8] == np.frombuffer(STUB_MARKER, dtype=np.uint8))
