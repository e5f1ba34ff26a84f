"""Signature rules, payload regexes, DFA compilation and inverse generation."""

from .automaton import DEFAULT_STATE_CAP, Dfa, compile_regex, equivalent
from .generate import DEFAULT_MAX_LEN, generate_matching
from .regex import (
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
    parse_regex,
    to_pattern,
)
from .repair import repair_generated
from .rules import (
    HeaderCondition,
    SignatureRule,
    format_rule,
    format_ruleset,
    parse_ruleset,
    read_ruleset,
)

compile = compile_regex  # noqa: A001  (module-level alias mirroring the operation name)


def union(r1: Node, r2: Node) -> Node:
    """Regex whose language is L(r1) | L(r2)."""
    return Union((r1, r2))


def match_payload(rule_or_dfa, payload: bytes) -> bool:
    """True iff ``payload`` is accepted; unanchored patterns match substrings."""
    if isinstance(rule_or_dfa, SignatureRule):
        return rule_or_dfa.payload_matches(payload)
    if isinstance(rule_or_dfa, Dfa):
        return rule_or_dfa.accepts(payload)
    if isinstance(rule_or_dfa, Node):
        return compile_regex(rule_or_dfa).accepts(payload)
    raise TypeError(f"cannot match against {type(rule_or_dfa).__name__}")
