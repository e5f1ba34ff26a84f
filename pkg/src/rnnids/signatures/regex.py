"""Regular-expression syntax tree, parser and printer for payload patterns.

The accepted dialect is the regular subset used by Bro/Zeek payload
conditions: literals, escapes, character classes, ``.``, alternation,
``* + ?``, bounded repetition ``{m,n}``, grouping and the ``^``/``$``
anchors. Matching is over octets, so patterns are parsed as latin-1 text.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from ..errors import RegexSyntaxError

ALL_OCTETS = frozenset(range(256))
NEWLINE = 0x0A
#: ``.`` matches every octet except newline, as in flex-style patterns.
DOT_OCTETS = ALL_OCTETS - {NEWLINE}
MAX_REPEAT = 1000


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Empty(Node):
    """Matches nothing."""


@dataclass(frozen=True)
class Epsilon(Node):
    """Matches the empty string."""


@dataclass(frozen=True)
class Literal(Node):
    octet: int


@dataclass(frozen=True)
class CharClass(Node):
    members: frozenset
    negated: bool = False

    @property
    def octets(self) -> frozenset:
        return ALL_OCTETS - self.members if self.negated else self.members


@dataclass(frozen=True)
class Concat(Node):
    items: Tuple[Node, ...]


@dataclass(frozen=True)
class Union(Node):
    items: Tuple[Node, ...]


@dataclass(frozen=True)
class Star(Node):
    node: Node


@dataclass(frozen=True)
class Plus(Node):
    node: Node


@dataclass(frozen=True)
class Optional(Node):
    node: Node


@dataclass(frozen=True)
class Repeat(Node):
    node: Node
    min: int
    max: "int | None"  # None: unbounded

    def __post_init__(self):
        if self.min < 0 or (self.max is not None and self.max < self.min):
            raise ValueError(f"bad repetition bounds {{{self.min},{self.max}}}")


@dataclass(frozen=True)
class AnchorStart(Node):
    pass


@dataclass(frozen=True)
class AnchorEnd(Node):
    pass


@dataclass(frozen=True)
class Dot(Node):
    pass


def concat(items) -> Node:
    flat = []
    for item in items:
        if isinstance(item, Concat):
            flat.extend(item.items)
        elif not isinstance(item, Epsilon):
            flat.append(item)
    if not flat:
        return Epsilon()
    return flat[0] if len(flat) == 1 else Concat(tuple(flat))


def union(*items) -> Node:
    flat = []
    for item in items:
        flat.extend(item.items if isinstance(item, Union) else [item])
    return flat[0] if len(flat) == 1 else Union(tuple(flat))


# Parsing -------------------------------------------------------------------

_CLASS_ESCAPES = {
    "d": frozenset(range(0x30, 0x3A)),
    "w": frozenset(list(range(0x30, 0x3A)) + list(range(0x41, 0x5B))
                   + list(range(0x61, 0x7B)) + [0x5F]),
    "s": frozenset(b" \t\n\r\f\v"),
}
_CONTROL_ESCAPES = {"n": 0x0A, "r": 0x0D, "t": 0x09, "f": 0x0C, "v": 0x0B, "0": 0x00}
_HEX = "0123456789abcdefABCDEF"


class _Parser:
    def __init__(self, pattern: str):
        self.text = pattern
        self.pos = 0

    def error(self, message, pos=None):
        return RegexSyntaxError(message, self.pos if pos is None else pos)

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else None

    def take(self):
        ch = self.peek()
        if ch is None:
            raise self.error("unexpected end of pattern")
        self.pos += 1
        return ch

    def parse(self) -> Node:
        node = self.alternation()
        if self.pos < len(self.text):
            raise self.error("unbalanced ')'")
        return node

    def alternation(self) -> Node:
        branches = [self.sequence()]
        while self.peek() == "|":
            self.pos += 1
            branches.append(self.sequence())
        return union(*branches)

    def sequence(self) -> Node:
        items = []
        while self.peek() not in (None, "|", ")"):
            items.append(self.quantified())
        return concat(items)

    def quantified(self) -> Node:
        start = self.pos
        grouped = self.peek() == "("
        node = self.atom()
        while True:
            ch = self.peek()
            if ch in ("*", "+", "?"):
                wrapper = {"*": Star, "+": Plus, "?": Optional}[ch]
            elif ch == "{":
                bounds = self.bounds()
                if bounds is None:
                    return node
                wrapper = None
            else:
                return node
            if isinstance(node, (AnchorStart, AnchorEnd)) and not grouped:
                raise self.error("nothing to repeat", start)
            if wrapper is not None:
                self.pos += 1
                node = wrapper(node)
            else:
                node = Repeat(node, *bounds)

    def bounds(self):
        """Consume ``{m}``, ``{m,}`` or ``{m,n}``; None if '{' is not a quantifier."""
        end = self.text.find("}", self.pos)
        if end < 0:
            return None
        body = self.text[self.pos + 1:end]
        lo, sep, hi = body.partition(",")
        if not lo.isdigit() or (hi and not hi.isdigit()):
            return None
        low = int(lo)
        high = low if not sep else (int(hi) if hi else None)
        if high is not None and high < low:
            raise self.error(f"repetition bounds {{{body}}} out of order")
        if max(low, high or 0) > MAX_REPEAT:
            raise self.error(f"repetition bound above {MAX_REPEAT}")
        self.pos = end + 1
        return low, high

    def atom(self) -> Node:
        start = self.pos
        ch = self.take()
        if ch == "(":
            node = self.alternation()
            if self.peek() != ")":
                raise self.error("unbalanced '('", start)
            self.pos += 1
            return node
        if ch == "[":
            return self.char_class(start)
        if ch == ".":
            return Dot()
        if ch == "^":
            return AnchorStart()
        if ch == "$":
            return AnchorEnd()
        if ch == "\\":
            value = self.escape()
            return value if isinstance(value, Node) else Literal(value)
        if ch in "*+?":
            raise self.error("nothing to repeat", start)
        return Literal(self.octet(ch, start))

    def octet(self, ch, pos):
        code = ord(ch)
        if code > 0xFF:
            raise self.error(f"character {ch!r} is not a single octet", pos)
        return code

    def escape(self):
        """Returns an octet value or a CharClass for shorthand classes."""
        start = self.pos - 1
        if self.peek() is None:
            raise self.error("dangling escape", start)
        ch = self.take()
        if ch == "x":
            digits = self.text[self.pos:self.pos + 2]
            if len(digits) != 2 or any(d not in _HEX for d in digits):
                raise self.error("\\x needs two hex digits", start)
            self.pos += 2
            return int(digits, 16)
        if ch in _CONTROL_ESCAPES:
            return _CONTROL_ESCAPES[ch]
        if ch.lower() in _CLASS_ESCAPES:
            return CharClass(_CLASS_ESCAPES[ch.lower()], negated=ch.isupper())
        return self.octet(ch, start)

    def char_class(self, start) -> Node:
        negated = False
        if self.peek() == "^":
            negated = True
            self.pos += 1
        members = set()
        first = True
        while True:
            ch = self.peek()
            if ch is None:
                raise self.error("unbalanced '['", start)
            if ch == "]" and not first:
                self.pos += 1
                break
            first = False
            lo = self.class_item()
            if isinstance(lo, CharClass):
                members |= lo.octets
                continue
            if self.peek() == "-" and self.text[self.pos + 1:self.pos + 2] not in ("]", ""):
                dash = self.pos
                self.pos += 1
                hi = self.class_item()
                if isinstance(hi, CharClass):
                    raise self.error("class shorthand cannot end a range", dash)
                if hi < lo:
                    raise self.error("inverted character range", dash)
                members.update(range(lo, hi + 1))
            else:
                members.add(lo)
        node = CharClass(frozenset(members), negated)
        if not node.octets:
            raise self.error("character class matches nothing", start)
        return node

    def class_item(self):
        pos = self.pos
        ch = self.take()
        if ch == "\\":
            return self.escape()
        return self.octet(ch, pos)


def parse_regex(pattern: str) -> Node:
    """Parse ``pattern`` into a syntax tree; raises RegexSyntaxError."""
    if isinstance(pattern, (bytes, bytearray)):
        pattern = bytes(pattern).decode("latin-1")
    return _Parser(pattern).parse()


# Printing ------------------------------------------------------------------

_META = set("\\.^$|?*+()[]{}/")
_CLASS_META = set("\\]^-/")


def _octet_text(octet, meta):
    ch = chr(octet)
    if 0x20 <= octet < 0x7F:
        return "\\" + ch if ch in meta else ch
    return f"\\x{octet:02x}"


def _class_text(node: CharClass):
    ordered = sorted(node.members)
    parts = []
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1] == ordered[j] + 1:
            j += 1
        if j - i >= 2:
            parts.append(_octet_text(ordered[i], _CLASS_META) + "-"
                         + _octet_text(ordered[j], _CLASS_META))
        else:
            parts.extend(_octet_text(o, _CLASS_META) for o in ordered[i:j + 1])
        i = j + 1
    return "[" + ("^" if node.negated else "") + "".join(parts) + "]"


def to_pattern(node: Node) -> str:
    """Render a tree back to pattern text that reparses to the same tree."""
    if isinstance(node, Literal):
        return _octet_text(node.octet, _META)
    if isinstance(node, CharClass):
        return _class_text(node)
    if isinstance(node, Dot):
        return "."
    if isinstance(node, AnchorStart):
        return "^"
    if isinstance(node, AnchorEnd):
        return "$"
    if isinstance(node, Epsilon):
        return "()"
    if isinstance(node, Empty):
        raise ValueError("the empty language has no pattern syntax")
    if isinstance(node, Concat):
        return "".join(
            f"({to_pattern(item)})" if isinstance(item, Union) else to_pattern(item)
            for item in node.items
        )
    if isinstance(node, Union):
        return "|".join(to_pattern(item) for item in node.items)
    inner = node.node
    text = to_pattern(inner)
    if isinstance(inner, (Concat, Union, AnchorStart, AnchorEnd)):
        text = f"({text})"
    if isinstance(node, Star):
        return text + "*"
    if isinstance(node, Plus):
        return text + "+"
    if isinstance(node, Optional):
        return text + "?"
    if isinstance(node, Repeat):
        if node.max is None:
            return f"{text}{{{node.min},}}"
        if node.max == node.min:
            return f"{text}{{{node.min}}}"
        return f"{text}{{{node.min},{node.max}}}"
    raise TypeError(f"unknown node {node!r}")


def min_length(node: Node):
    """Shortest member length, or None for the empty language."""
    if isinstance(node, (Literal, CharClass, Dot)):
        return 1
    if isinstance(node, (Epsilon, AnchorStart, AnchorEnd, Star, Optional)):
        return 0
    if isinstance(node, Empty):
        return None
    if isinstance(node, Concat):
        total = 0
        for item in node.items:
            n = min_length(item)
            if n is None:
                return None
            total += n
        return total
    if isinstance(node, Union):
        lengths = [n for n in map(min_length, node.items) if n is not None]
        return min(lengths) if lengths else None
    if isinstance(node, Plus):
        return min_length(node.node)
    if isinstance(node, Repeat):
        if node.min == 0:
            return 0
        n = min_length(node.node)
        return None if n is None else n * node.min
    raise TypeError(f"unknown node {node!r}")
