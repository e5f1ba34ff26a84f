"""Edit-distance and local-alignment similarity between octet sequences.

Both dynamic programs sweep one row at a time with numpy. The in-row
(left-neighbour) dependency is resolved with a running min/max: for a
linear gap cost ``g`` the left chain ``H[j] = max(t[j], H[j-1] + g)``
unrolls to ``j*g + cummax(t[k] - k*g)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import EmptyInput, NotEnoughSequences

#: Value returned by :func:`levenshtein_similarity_pct` when both inputs are
#: empty (the ratio is 0/0; two empty strings are treated as identical).
BOTH_EMPTY_SIMILARITY = 100.0

LEVENSHTEIN = "levenshtein"


def _as_octets(seq) -> np.ndarray:
    if isinstance(seq, str):
        seq = seq.encode("utf-8")
    if isinstance(seq, (bytes, bytearray, memoryview)):
        return np.frombuffer(bytes(seq), dtype=np.uint8).astype(np.int16)
    return np.asarray(list(seq), dtype=np.int16)


def levenshtein_distance(a, b) -> int:
    """Minimum number of single-octet insertions, deletions and substitutions."""
    x, y = _as_octets(a), _as_octets(b)
    if len(x) < len(y):
        x, y = y, x
    if len(y) == 0:
        return int(len(x))
    cols = np.arange(len(y) + 1)
    prev = cols.copy()
    for i, ch in enumerate(x, start=1):
        t = np.empty_like(prev)
        t[0] = i
        t[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (y != ch))
        prev = np.minimum.accumulate(t - cols) + cols
    return int(prev[-1])


def levenshtein_similarity_pct(a, b) -> float:
    """``100 * (1 - d / max(|a|, |b|))``; see :data:`BOTH_EMPTY_SIMILARITY`."""
    longest = max(len(_as_octets(a)), len(_as_octets(b)))
    if longest == 0:
        return BOTH_EMPTY_SIMILARITY
    return 100.0 * (1.0 - levenshtein_distance(a, b) / longest)


@dataclass(frozen=True)
class AlignmentParams:
    match: float = 1.0
    mismatch: float = -1.0
    gap_penalty: float = -1.0

    def __post_init__(self):
        if not self.match > 0:
            raise ValueError("match score must be positive")
        if self.mismatch > 0 or self.gap_penalty > 0:
            raise ValueError("mismatch and gap penalty must be <= 0")

    @property
    def _tolerance(self):
        return 1e-9 * max(abs(self.match), abs(self.mismatch), abs(self.gap_penalty))


@dataclass(frozen=True)
class AlignmentResult:
    max_score: float
    max_pos: tuple
    align_len: int
    normalized_similarity_pct: float


def score_matrix(a, b, params: AlignmentParams = AlignmentParams()) -> np.ndarray:
    """Full (|a|+1) x (|b|+1) local-alignment matrix, floored at zero."""
    x, y = _as_octets(a), _as_octets(b)
    g = float(params.gap_penalty)
    H = np.zeros((len(x) + 1, len(y) + 1))
    ramp = np.arange(len(y) + 1) * g
    for i, ch in enumerate(x, start=1):
        prev = H[i - 1]
        t = np.zeros(len(y) + 1)
        sub = np.where(y == ch, params.match, params.mismatch)
        t[1:] = np.maximum(np.maximum(prev[:-1] + sub, prev[1:] + g), 0.0)
        H[i] = np.maximum.accumulate(t - ramp) + ramp
    return H


def smith_waterman(a, b, params: AlignmentParams = AlignmentParams()) -> AlignmentResult:
    """Local alignment score, its position and traceback length.

    The maximum is the first row-major cell within a tiny tolerance of the
    matrix maximum. Traceback prefers diagonal, then up, then left moves and
    stops at the first zero cell; ``align_len`` counts the moves taken.
    """
    x, y = _as_octets(a), _as_octets(b)
    if len(x) == 0 or len(y) == 0:
        raise EmptyInput("smith_waterman needs two non-empty sequences")
    H = score_matrix(x, y, params)
    tol = params._tolerance
    best = H.max()
    if best <= tol:
        return AlignmentResult(0.0, (0, 0), 0, 0.0)
    flat = int(np.argmax(H >= best - tol))
    i, j = divmod(flat, H.shape[1])
    max_pos = (i, j)
    g = params.gap_penalty
    steps = 0
    while H[i, j] > tol:
        here = H[i, j]
        sub = params.match if x[i - 1] == y[j - 1] else params.mismatch
        if abs(here - (H[i - 1, j - 1] + sub)) <= tol:
            i, j = i - 1, j - 1
        elif abs(here - (H[i - 1, j] + g)) <= tol:
            i -= 1
        else:
            j -= 1
        steps += 1
    score = float(H[max_pos])
    pct = min(100.0, max(0.0, 100.0 * score / (params.match * steps)))
    return AlignmentResult(score, max_pos, steps, pct)


def sw_normalized_similarity_pct(a, b, params: AlignmentParams = AlignmentParams()) -> float:
    return smith_waterman(a, b, params).normalized_similarity_pct


Metric = Union[str, AlignmentParams]


def pairwise_pct(a, b, metric: Metric) -> float:
    if isinstance(metric, AlignmentParams):
        return sw_normalized_similarity_pct(a, b, metric)
    if metric == LEVENSHTEIN:
        return levenshtein_similarity_pct(a, b)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class SimilarityMatrix:
    labels: tuple
    values: tuple  # values[i] holds row i, columns 0..i
    metric: Metric

    def __getitem__(self, ij):
        i, j = ij
        return self.values[i][j] if j <= i else self.values[j][i]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([""] + list(self.labels))
        for label, row in zip(self.labels, self.values):
            cells = [f"{v:.1f}" for v in row] + [""] * (len(self.labels) - len(row))
            writer.writerow([label] + cells)
        return out.getvalue()

    def to_text(self) -> str:
        width = max(6, max(len(l) for l in self.labels) + 1)
        lines = [" " * width + "".join(f"{l:>{width}}" for l in self.labels)]
        for label, row in zip(self.labels, self.values):
            lines.append(f"{label:<{width}}" + "".join(f"{v:>{width}.1f}" for v in row))
        return "\n".join(lines) + "\n"


def order_labels(labels: Sequence[str]) -> list:
    """Originals first, starred (generated) labels after, each in input order."""
    plain = [l for l in labels if not l.endswith("*")]
    starred = [l for l in labels if l.endswith("*")]
    return plain + starred


def similarity_matrix(sequences, metric: Metric = LEVENSHTEIN) -> SimilarityMatrix:
    """Lower-triangular percentage matrix over labelled sequences.

    ``sequences`` is a mapping or an iterable of ``(label, data)`` pairs.
    """
    items = list(sequences.items()) if hasattr(sequences, "items") else list(sequences)
    if len(items) < 2:
        raise NotEnoughSequences("a similarity matrix needs at least two sequences")
    data = dict(items)
    if len(data) != len(items):
        raise ValueError("sequence labels must be unique")
    labels = order_labels([label for label, _ in items])
    rows = []
    for i, li in enumerate(labels):
        row = [pairwise_pct(data[li], data[lj], metric) for lj in labels[:i]]
        row.append(100.0)
        rows.append(tuple(row))
    return SimilarityMatrix(tuple(labels), tuple(rows), metric)
