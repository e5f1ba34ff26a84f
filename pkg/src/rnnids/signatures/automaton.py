"""Thompson NFA construction and subset construction to a total DFA.

Anchors are zero-width NFA edges: a ``^`` edge may only be crossed before
the first octet and a ``$`` edge only after the last one. Every pattern is
wrapped in any-octet loops on both sides, so an unanchored pattern matches
when any substring of the payload does.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import DfaTooLarge
from .regex import (
    ALL_OCTETS,
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
)

DEFAULT_STATE_CAP = 100_000


class _Nfa:
    def __init__(self):
        self.eps = []
        self.bol = []
        self.eol = []
        self.moves = []  # per state: list of (octet set, target)

    def new_state(self):
        self.eps.append([])
        self.bol.append([])
        self.eol.append([])
        self.moves.append([])
        return len(self.eps) - 1

    def build(self, node: Node):
        """Returns (entry, exit) state ids of a fragment for ``node``."""
        start, end = self.new_state(), self.new_state()
        if isinstance(node, Literal):
            self.moves[start].append((frozenset([node.octet]), end))
        elif isinstance(node, CharClass):
            self.moves[start].append((node.octets, end))
        elif isinstance(node, Dot):
            self.moves[start].append((DOT_OCTETS, end))
        elif isinstance(node, Epsilon):
            self.eps[start].append(end)
        elif isinstance(node, Empty):
            pass
        elif isinstance(node, AnchorStart):
            self.bol[start].append(end)
        elif isinstance(node, AnchorEnd):
            self.eol[start].append(end)
        elif isinstance(node, Concat):
            here = start
            for item in node.items:
                s, e = self.build(item)
                self.eps[here].append(s)
                here = e
            self.eps[here].append(end)
        elif isinstance(node, Union):
            for item in node.items:
                s, e = self.build(item)
                self.eps[start].append(s)
                self.eps[e].append(end)
        elif isinstance(node, (Star, Plus, Optional)):
            s, e = self.build(node.node)
            self.eps[start].append(s)
            self.eps[e].append(end)
            if not isinstance(node, Plus):
                self.eps[start].append(end)
            if not isinstance(node, Optional):
                self.eps[e].append(s)
        elif isinstance(node, Repeat):
            here = start
            for _ in range(node.min):
                s, e = self.build(node.node)
                self.eps[here].append(s)
                here = e
            if node.max is None:
                s, e = self.build(Star(node.node))
                self.eps[here].append(s)
                here = e
            else:
                for _ in range(node.max - node.min):
                    s, e = self.build(node.node)
                    self.eps[here].append(s)
                    self.eps[here].append(end)
                    here = e
            self.eps[here].append(end)
        else:
            raise TypeError(f"unknown node {node!r}")
        return start, end

    def closure(self, states, bol=False, eol=False):
        seen = set(states)
        stack = list(states)
        while stack:
            s = stack.pop()
            targets = list(self.eps[s])
            if bol:
                targets += self.bol[s]
            if eol:
                targets += self.eol[s]
            for t in targets:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)


def _octet_classes(sets):
    """Partition 0..255 into classes no edge label can tell apart."""
    sets = list(dict.fromkeys(sets))
    signature_ids = {}
    class_of = []
    for octet in range(256):
        sig = tuple(octet in s for s in sets)
        class_of.append(signature_ids.setdefault(sig, len(signature_ids)))
    reps = [class_of.index(k) for k in range(len(signature_ids))]
    return class_of, reps


@dataclass(eq=False)
class Dfa:
    """Total DFA over octets; ``table[q][b]`` is the successor of q on b."""

    table: list
    start: int
    accepting: frozenset
    _always: frozenset = field(init=False, repr=False)
    _dead: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.table)
        always = set(self.accepting)
        changed = True
        while changed:
            changed = False
            for q in list(always):
                if any(t not in always for t in self.table[q]):
                    always.discard(q)
                    changed = True
        live = set(self.accepting)
        preds = [set() for _ in range(n)]
        for q, row in enumerate(self.table):
            for t in set(row):
                preds[t].add(q)
        queue = deque(live)
        while queue:
            q = queue.popleft()
            for p in preds[q]:
                if p not in live:
                    live.add(p)
                    queue.append(p)
        self._always = frozenset(always)
        self._dead = frozenset(set(range(n)) - live)

    @property
    def num_states(self):
        return len(self.table)

    @property
    def states(self):
        return range(len(self.table))

    def accepts(self, payload: bytes) -> bool:
        q = self.start
        table, always, dead = self.table, self._always, self._dead
        if q in always:
            return True
        for b in bytes(payload):
            q = table[q][b]
            if q in always:
                return True
            if q in dead:
                return False
        return q in self.accepting

    def distances_to_accept(self):
        """Fewest further octets needed to reach acceptance, per state (inf if never)."""
        n = len(self.table)
        dist = np.full(n, np.inf)
        preds = [set() for _ in range(n)]
        for q, row in enumerate(self.table):
            for t in set(row):
                preds[t].add(q)
        queue = deque()
        for q in self.accepting:
            dist[q] = 0
            queue.append(q)
        while queue:
            q = queue.popleft()
            for p in preds[q]:
                if dist[p] == np.inf:
                    dist[p] = dist[q] + 1
                    queue.append(p)
        return dist

    def shortest_accepted_length(self):
        d = self.distances_to_accept()[self.start]
        return None if d == np.inf else int(d)


def compile_regex(node: Node, state_cap: int = DEFAULT_STATE_CAP) -> Dfa:
    """Compile a syntax tree to a DFA with substring-search semantics."""
    nfa = _Nfa()
    entry, exit_ = nfa.build(Concat((Star(CharClass(ALL_OCTETS)), node, Star(CharClass(ALL_OCTETS)))))
    class_of, reps = _octet_classes(s for moves in nfa.moves for s, _ in moves)
    n_classes = len(reps)

    start_set = nfa.closure([entry], bol=True)
    keys = {(start_set, True): 0}
    sets = [(start_set, True)]
    class_rows = []
    queue = deque([0])
    while queue:
        q = queue.popleft()
        current, _ = sets[q]
        row = []
        for rep in reps:
            targets = [t for s in current for octets, t in nfa.moves[s] if rep in octets]
            key = (nfa.closure(targets), False)
            idx = keys.get(key)
            if idx is None:
                if len(sets) >= state_cap:
                    raise DfaTooLarge(f"DFA exceeds {state_cap} states")
                idx = keys[key] = len(sets)
                sets.append(key)
                queue.append(idx)
            row.append(idx)
        class_rows.append(row)

    accepting = frozenset(
        q for q, (states, is_start) in enumerate(sets)
        if exit_ in nfa.closure(states, bol=is_start, eol=True)
    )
    table = [[row[class_of[b]] for b in range(256)] for row in class_rows]
    assert all(len(row) == n_classes for row in class_rows)
    return Dfa(table, 0, accepting)


def equivalent(a: Dfa, b: Dfa) -> bool:
    """Product-construction language equality check."""
    seen = {(a.start, b.start)}
    queue = deque(seen)
    while queue:
        p, q = queue.popleft()
        if (p in a.accepting) != (q in b.accepting):
            return False
        for octet in range(256):
            pair = (a.table[p][octet], b.table[q][octet])
            if pair not in seen:
                seen.add(pair)
                queue.append(pair)
    return True
