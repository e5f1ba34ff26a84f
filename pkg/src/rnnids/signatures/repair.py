"""Turn raw model-emitted pattern text into a parseable payload regex."""

from __future__ import annotations

from ..errors import RegexSyntaxError, UnrepairableOutput
from .regex import parse_regex


def _strip_slashes(text):
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            out.append(text[i:i + 2])
            i += 2
            continue
        if ch != "/":
            out.append(ch)
        i += 1
    return "".join(out)


def _drop_dangling_escape(text):
    run = len(text) - len(text.rstrip("\\"))
    return text[:-1] if run % 2 else text


def _close_open(text):
    stack = []  # entries: "(" or index of an open "["
    in_class = None
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            i += 2
            continue
        if in_class is not None:
            body_start = in_class + (2 if text[in_class + 1:in_class + 2] == "^" else 1)
            if ch == "]" and i > body_start:
                in_class = None
                stack.pop()
        elif ch == "[":
            in_class = i
            stack.append(i)
        elif ch == "(":
            stack.append("(")
        elif ch == ")" and stack and stack[-1] == "(":
            stack.pop()
        i += 1
    closers = []
    if in_class is not None:
        stack.pop()
        body_start = in_class + (2 if text[in_class + 1:in_class + 2] == "^" else 1)
        if len(text) > body_start:
            closers.append("]")
        else:
            text = text[:in_class]
    closers.extend(")" for _ in stack)
    return text + "".join(closers)


def repair_generated(raw: str) -> str:
    """Repair a generated pattern.

    Steps, in order: remove every unescaped ``/``; drop a trailing dangling
    backslash; close unterminated classes and groups innermost first (an
    unterminated class with no members is removed instead). The result is
    checked with the parser; UnrepairableOutput carries the parser error.
    """
    text = _close_open(_drop_dangling_escape(_strip_slashes(raw)))
    try:
        parse_regex(text)
    except RegexSyntaxError as exc:
        raise UnrepairableOutput(raw, exc) from exc
    return text
