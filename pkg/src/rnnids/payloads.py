"""Toy polymorphic encoder and spectral images of encoded-payload corpora.

The encoder imitates XOR sliding-key engines at desk scale: every round
XORs everything produced so far with a key schedule that shifts by one
position per key-length block, then prepends a fixed decoder-stub marker
and two junk octets. The stub is what leaves constant columns in a
spectral image, the content-based pattern a detector can latch onto.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EmptyKey

STUB_MARKER = bytes([0xEB, 0x10, 0x5E, 0x31, 0xC9, 0xB1, 0x00, 0x90])
JUNK_OCTETS = 2
ENGINE = "toy-xor-sliding"
DEFAULT_KEY = bytes([0x5A, 0xC3])


def base_payload() -> bytes:
    """The shipped 64-octet synthetic stand-in for a bind-shell payload."""
    return resources.files("rnnids.data").joinpath("base_payload.bin").read_bytes()


def xor_sliding(data: bytes, key: bytes) -> bytes:
    """XOR ``data`` with ``key``, sliding the key start by one per block.

    Octet ``i`` is XORed with ``key[(i + i // len(key)) % len(key)]``;
    applying the same key twice restores the input.
    """
    if not key:
        raise EmptyKey("XOR key must be non-empty")
    n = len(key)
    k = np.frombuffer(bytes(key), dtype=np.uint8)
    idx = np.arange(len(data))
    stream = k[(idx + idx // n) % n]
    return (np.frombuffer(bytes(data), dtype=np.uint8) ^ stream).tobytes()


def toy_encode(payload: bytes, key: bytes, iterations: int, rng_seed: int = 0) -> bytes:
    """Apply ``iterations`` encoding rounds; zero rounds returns ``payload``."""
    if not key:
        raise EmptyKey("XOR key must be non-empty")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    rng = random.Random(rng_seed)
    body = bytes(payload)
    key = bytes(key)
    for _ in range(iterations):
        junk = bytes(rng.randrange(256) for _ in range(JUNK_OCTETS))
        body = STUB_MARKER + junk + xor_sliding(body, key)
        key = key[1:] + key[:1]
    return body


@dataclass(frozen=True)
class PayloadCorpus:
    variants: tuple
    engine: str
    base_payload: bytes
    key: bytes = DEFAULT_KEY
    rng_seed: int = 0

    def __post_init__(self):
        if not self.variants or self.variants[0] != self.base_payload:
            raise ValueError("variant 0 must be the unencoded base payload")


def build_corpus(base: bytes, key: bytes = DEFAULT_KEY, max_iterations: int = 100,
                 rng_seed: int = 0) -> PayloadCorpus:
    """Variants for 0..max_iterations rounds; variant k uses seed rng_seed + k."""
    variants = tuple(toy_encode(base, key, k, rng_seed + k) for k in range(max_iterations + 1))
    return PayloadCorpus(variants, ENGINE, bytes(base), bytes(key), rng_seed)


def build_mutants(base: bytes, key: bytes = DEFAULT_KEY, iterations: int = 5, count: int = 5,
                  rng_seed: int = 0) -> list:
    """``count`` encodings with the same round count; mutant k uses seed rng_seed + k.

    They differ only in their junk octets, like mutants of one worm
    produced by a single polymorphic engine.
    """
    return [toy_encode(base, key, iterations, rng_seed + k) for k in range(1, count + 1)]


def write_corpus(corpus: PayloadCorpus, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, variant in enumerate(corpus.variants):
        (directory / f"variant_{k}.bin").write_bytes(variant)
    manifest = {
        "engine": corpus.engine,
        "key": corpus.key.hex(),
        "seed": corpus.rng_seed,
        "variants": len(corpus.variants),
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_corpus_dir(directory) -> PayloadCorpus:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    variants = tuple(
        (directory / f"variant_{k}.bin").read_bytes() for k in range(manifest["variants"])
    )
    return PayloadCorpus(variants, manifest["engine"], variants[0],
                         bytes.fromhex(manifest["key"]), manifest["seed"])


@dataclass(frozen=True)
class SpectralMatrix:
    cells: np.ndarray  # uint8, rows x cols, zero padded
    lengths: tuple  # true length of each row

    @property
    def rows(self):
        return self.cells.shape[0]

    @property
    def cols(self):
        return self.cells.shape[1]

    def row_bytes(self, k) -> bytes:
        return self.cells[k, :self.lengths[k]].tobytes()

    def constant_columns(self) -> list:
        """Column indices holding a single value across every row."""
        same = (self.cells == self.cells[0]).all(axis=0)
        return [int(c) for c in np.flatnonzero(same)]


def build_spectral(corpus) -> SpectralMatrix:
    """One row per variant, zero padded on the right to the longest variant."""
    variants = corpus.variants if isinstance(corpus, PayloadCorpus) else tuple(corpus)
    if not variants:
        raise ValueError("need at least one variant")
    cols = max(len(v) for v in variants)
    cells = np.zeros((len(variants), cols), dtype=np.uint8)
    for k, v in enumerate(variants):
        cells[k, :len(v)] = np.frombuffer(bytes(v), dtype=np.uint8)
    return SpectralMatrix(cells, tuple(len(v) for v in variants))


def render_pgm(matrix: SpectralMatrix) -> bytes:
    """Binary greyscale PGM; 0x00 renders black and 0xFF white."""
    if matrix.rows == 0 or matrix.cols == 0:
        raise ValueError("cannot render an empty matrix")
    header = f"P5\n{matrix.cols} {matrix.rows}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(matrix.cells, dtype=np.uint8).tobytes()
