"""Bro/Zeek-style signature blocks: parsing, header evaluation and output.

Only the header fields ``ip-proto``, ``src-ip``/``src-host``,
``dst-ip``/``dst-host``, ``src-port`` and ``dst-port`` are interpreted.
Other condition lines are kept verbatim in ``options`` and written back
unchanged; ``event``/``enable`` lines are actions.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

from ..errors import ParseError, RegexSyntaxError
from .automaton import Dfa, compile_regex
from .regex import Node, parse_regex

HEADER_FIELDS = {
    "ip-proto": "ip-proto",
    "src-ip": "src-host",
    "src-host": "src-host",
    "dst-ip": "dst-host",
    "dst-host": "dst-host",
    "src-port": "src-port",
    "dst-port": "dst-port",
}
OPERATORS = ("==", "!=", "<=", ">=", "<", ">")
ACTION_KEYWORDS = ("event", "enable")
PROTO_NUMBERS = {"icmp": 1, "tcp": 6, "udp": 17}
PROTO_NAMES = {v: k for k, v in PROTO_NUMBERS.items()}

_HEADER_RE = re.compile(r"^(?P<field>[a-z-]+)\s*(?P<op>==|!=|<=|>=|<|>)\s*(?P<value>\S.*)$")
_OPEN_RE = re.compile(r"^signature(?:\s+(?P<id>[^\s{]+))?\s*(?P<brace>\{)?\s*(?P<rest>.*)$")


@dataclass(frozen=True)
class HeaderCondition:
    field: str  # canonical: ip-proto, src-host, dst-host, src-port, dst-port
    op: str
    values: tuple
    keyword: str = ""  # spelling used in the source text

    def __post_init__(self):
        if not self.keyword:
            object.__setattr__(self, "keyword", self.field)

    @cached_property
    def _parsed(self):
        if self.field == "ip-proto":
            return tuple(_proto_number(v) for v in self.values)
        if self.field in ("src-host", "dst-host"):
            return tuple(ipaddress.ip_network(v, strict=False) for v in self.values)
        return tuple(int(v) for v in self.values)

    def holds(self, value) -> bool:
        if self.field in ("src-host", "dst-host"):
            addr = ipaddress.ip_address(value)
            hits = [addr in net for net in self._parsed]
            if self.op == "==":
                return any(hits)
            if self.op == "!=":
                return not any(hits)
            raise ValueError(f"operator {self.op} is not defined for addresses")
        if self.field == "ip-proto":
            value = _proto_number(value)
        compare = {
            "==": lambda a, b: a == b,
            "!=": lambda a, b: a != b,
            "<": lambda a, b: a < b,
            "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b,
            ">=": lambda a, b: a >= b,
        }[self.op]
        if self.op == "!=":
            return all(compare(value, v) for v in self._parsed)
        return any(compare(value, v) for v in self._parsed)

    def to_line(self) -> str:
        return f"{self.keyword} {self.op} {','.join(self.values)}"


def _proto_number(value):
    if isinstance(value, int):
        return value
    text = str(value).strip().lower()
    if text in PROTO_NUMBERS:
        return PROTO_NUMBERS[text]
    if text.isdigit():
        return int(text)
    raise ValueError(f"unknown protocol {value!r}")


@dataclass(frozen=True)
class SignatureRule:
    id: str
    header_conditions: tuple = ()
    payload_regex: Optional[Node] = None
    payload_source: Optional[str] = None  # pattern text between the slashes
    options: tuple = ()
    actions: tuple = ()

    @cached_property
    def dfa(self) -> Optional[Dfa]:
        return None if self.payload_regex is None else compile_regex(self.payload_regex)

    def header_matches(self, flow) -> bool:
        fields = {
            "ip-proto": flow.proto,
            "src-host": flow.src_host,
            "dst-host": flow.dst_host,
            "src-port": flow.src_port,
            "dst-port": flow.dst_port,
        }
        return all(cond.holds(fields[cond.field]) for cond in self.header_conditions)

    def payload_matches(self, payload: bytes) -> bool:
        return True if self.dfa is None else self.dfa.accepts(payload)

    def matches(self, flow) -> bool:
        return self.header_matches(flow) and self.payload_matches(flow.payload)

    def conditions_for(self, field_name):
        return [c for c in self.header_conditions if c.field == field_name]


def _split_payload(line, lineno):
    body = line[len("payload"):].strip()
    if not body.startswith("/"):
        raise ParseError("payload pattern must be delimited by '/'", lineno)
    end = None
    i = 1
    while i < len(body):
        if body[i] == "\\":
            i += 2
            continue
        if body[i] == "/":
            end = i
        i += 1
    if end is None:
        raise ParseError("payload pattern is missing its closing '/'", lineno)
    trailer = body[end + 1:].strip()
    if trailer not in ("", "}"):
        raise ParseError(f"unexpected text after payload pattern: {trailer!r}", lineno)
    return body[1:end], trailer == "}"


def _parse_header(match, lineno):
    values = tuple(v.strip() for v in match.group("value").split(",") if v.strip())
    keyword = match.group("field")
    cond = HeaderCondition(HEADER_FIELDS[keyword], match.group("op"), values, keyword)
    try:
        cond._parsed
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    return cond


def parse_ruleset(text: str) -> list:
    """Parse every ``signature <id> { ... }`` block in ``text``."""
    rules = []
    seen = set()
    current = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if current is None:
            m = _OPEN_RE.match(line)
            if not m:
                raise ParseError(f"expected 'signature <id> {{', got {line!r}", lineno)
            if not m.group("id"):
                raise ParseError("signature block without an id", lineno)
            if not m.group("brace"):
                raise ParseError("missing '{' after signature id", lineno)
            current = {"id": m.group("id"), "line": lineno, "headers": [], "payload": None,
                       "options": [], "actions": []}
            line = m.group("rest").strip()
            if not line:
                continue
        closes = False
        if line == "}":
            closes, line = True, ""
        elif line.startswith("payload"):
            if current["payload"] is not None:
                raise ParseError("only one payload condition per signature", lineno)
            source, closes = _split_payload(line, lineno)
            try:
                current["payload"] = (source, parse_regex(source))
            except RegexSyntaxError as exc:
                raise ParseError(f"bad payload pattern: {exc}", lineno) from None
            line = ""
        elif line.endswith("}"):
            closes, line = True, line[:-1].strip()
        if line:
            if line.startswith("signature"):
                raise ParseError("unbalanced braces: nested signature block", lineno)
            if "{" in line or "}" in line:
                raise ParseError("unbalanced braces", lineno)
            m = _HEADER_RE.match(line)
            if m and m.group("field") in HEADER_FIELDS:
                current["headers"].append(_parse_header(m, lineno))
            elif line.split()[0] in ACTION_KEYWORDS:
                current["actions"].append(line)
            else:
                current["options"].append(line)
        if closes:
            rule_id = current["id"]
            if rule_id in seen:
                raise ParseError(f"duplicate signature id {rule_id!r}", current["line"])
            seen.add(rule_id)
            payload = current["payload"]
            rules.append(SignatureRule(
                id=rule_id,
                header_conditions=tuple(current["headers"]),
                payload_regex=payload[1] if payload else None,
                payload_source=payload[0] if payload else None,
                options=tuple(current["options"]),
                actions=tuple(current["actions"]),
            ))
            current = None
    if current is not None:
        raise ParseError(f"unbalanced braces: block {current['id']!r} is never closed",
                         current["line"])
    return rules


def read_ruleset(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_ruleset(fh.read())


def format_rule(rule: SignatureRule) -> str:
    lines = [f"signature {rule.id} {{"]
    lines += [f"  {c.to_line()}" for c in rule.header_conditions]
    if rule.payload_source is not None:
        lines.append(f"  payload /{rule.payload_source}/")
    lines += [f"  {o}" for o in rule.options]
    lines += [f"  {a}" for a in rule.actions]
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_ruleset(rules) -> str:
    return "\n".join(format_rule(r) for r in rules)
