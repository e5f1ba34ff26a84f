"""Inverse regular-expression generation: draw strings from a pattern's language."""

from __future__ import annotations

import random

from ..errors import GenerationImpossible
from .automaton import Dfa, compile_regex
from .regex import (
    DOT_OCTETS,
    AnchorEnd,
    AnchorStart,
    CharClass,
    Concat,
    Dot,
    Empty,
    Epsilon,
    Literal,
    Node,
    Optional,
    Plus,
    Repeat,
    Star,
    Union,
    min_length,
)

DEFAULT_MAX_LEN = 256
AST_ATTEMPTS = 32
_SORTED_DOT = sorted(DOT_OCTETS)


class _Walker:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self._min = {}

    def min_len(self, node):
        try:
            return self._min[node]
        except KeyError:
            value = self._min[node] = min_length(node)
            return value

    def geometric(self):
        """Repetition count k with P(k) = 0.5 ** (k + 1)."""
        k = 0
        while self.rng.random() < 0.5:
            k += 1
        return k

    def repeat(self, node, count, budget, out):
        child_min = self.min_len(node)
        for _ in range(count):
            if child_min is None or child_min > budget - len(out) or (child_min == 0 and count > 64):
                break
            self.walk(node, budget, out)

    def walk(self, node: Node, budget: int, out: bytearray):
        """Append a member of L(node) using at most ``budget`` octets overall."""
        rng = self.rng
        if isinstance(node, Literal):
            out.append(node.octet)
        elif isinstance(node, CharClass):
            out.append(rng.choice(sorted(node.octets)))
        elif isinstance(node, Dot):
            out.append(rng.choice(_SORTED_DOT))
        elif isinstance(node, (Epsilon, AnchorStart, AnchorEnd)):
            pass
        elif isinstance(node, Empty):
            raise GenerationImpossible("pattern contains the empty language")
        elif isinstance(node, Concat):
            tail = [self.min_len(item) for item in node.items]
            for k, item in enumerate(node.items):
                reserve = sum(tail[k + 1:])
                self.walk(item, budget - reserve, out)
        elif isinstance(node, Union):
            room = budget - len(out)
            options = [item for item in node.items
                       if self.min_len(item) is not None and self.min_len(item) <= room]
            if not options:
                raise GenerationImpossible("no alternative fits the length budget")
            self.walk(rng.choice(options), budget, out)
        elif isinstance(node, Star):
            self.repeat(node.node, self.geometric(), budget, out)
        elif isinstance(node, Plus):
            self.walk(node.node, budget, out)
            self.repeat(node.node, self.geometric(), budget, out)
        elif isinstance(node, Optional):
            if rng.random() < 0.5:
                self.repeat(node.node, 1, budget, out)
        elif isinstance(node, Repeat):
            child_min = self.min_len(node.node)
            for k in range(node.min):
                self.walk(node.node, budget - (node.min - k - 1) * child_min, out)
            high = node.max if node.max is not None else node.min + self.geometric()
            extra = rng.randint(0, high - node.min) if node.max is not None else high - node.min
            self.repeat(node.node, extra, budget, out)
        else:
            raise TypeError(f"unknown node {node!r}")


def _dfa_walk(dfa: Dfa, rng: random.Random, max_len: int) -> bytes:
    """Random walk restricted to moves that can still reach acceptance in budget."""
    dist = dfa.distances_to_accept()
    q = dfa.start
    out = bytearray()
    while True:
        remaining = max_len - len(out)
        if q in dfa.accepting and (remaining == 0 or rng.random() < 0.5):
            return bytes(out)
        choices = [b for b in range(256) if dist[dfa.table[q][b]] + 1 <= remaining]
        if not choices:
            raise GenerationImpossible("walk ran out of budget")
        b = rng.choice(choices)
        out.append(b)
        q = dfa.table[q][b]


def generate_matching(ast: Node, rng_seed: int = 0, max_len: int = DEFAULT_MAX_LEN,
                      dfa: Dfa = None) -> bytes:
    """Draw a payload accepted by ``ast``.

    Alternatives are chosen uniformly and ``*``/``+`` repetition counts are
    geometric with p = 0.5, truncated to fit ``max_len``. A draw that the
    compiled automaton rejects (possible with anchors in odd places) is
    retried; after repeated failures a budgeted walk over the DFA is used,
    which always succeeds when some member fits.
    """
    if dfa is None:
        dfa = compile_regex(ast)
    shortest = dfa.shortest_accepted_length()
    if shortest is None:
        raise GenerationImpossible("pattern language is empty")
    if shortest > max_len:
        raise GenerationImpossible(f"shortest match needs {shortest} octets > max_len {max_len}")
    rng = random.Random(rng_seed)
    walker = _Walker(rng)
    core_min = walker.min_len(ast)
    if core_min is not None and core_min <= max_len:
        for _ in range(AST_ATTEMPTS):
            out = bytearray()
            try:
                walker.walk(ast, max_len, out)
            except GenerationImpossible:
                continue
            if len(out) <= max_len and dfa.accepts(bytes(out)):
                return bytes(out)
    return _dfa_walk(dfa, rng, max_len)
