import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import all_strings, random_ast, random_pattern_text, reference_match
from rnnids.errors import (
    DfaTooLarge,
    GenerationImpossible,
    ParseError,
    RegexSyntaxError,
    UnrepairableOutput,
)
from rnnids.signatures import (
    AnchorStart,
    CharClass,
    Concat,
    Empty,
    Literal,
    Repeat,
    compile_regex,
    equivalent,
    format_ruleset,
    generate_matching,
    match_payload,
    parse_regex,
    parse_ruleset,
    repair_generated,
    to_pattern,
    union,
)

SSH_BLOCK = """\
signature dpd_ssh_client {
  ip-proto == tcp
  payload /^[sS][sS][hH]-[12]\\./
  requires-reverse-signature dpd_ssh_server
  enable "ssh"
  tcp-state originator
}
"""
SSH_PATTERN = r"^[sS][sS][hH]-[12]\."


def cc(chars):
    return CharClass(frozenset(chars.encode()))


# -- regex parsing ----------------------------------------------------------------

def test_ssh_pattern_ast():
    assert parse_regex(SSH_PATTERN) == Concat((
        AnchorStart(), cc("sS"), cc("sS"), cc("hH"), Literal(ord("-")), cc("12"), Literal(ord(".")),
    ))


def test_single_literal():
    assert parse_regex("a") == Literal(ord("a"))


@pytest.mark.parametrize("bad", ["[z-a]", "(ab", "ab)", "[ab", "a\\", "*a", "a{3,1}", "\\xZ1", "a|*"])
def test_syntax_errors(bad):
    with pytest.raises(RegexSyntaxError) as info:
        parse_regex(bad)
    assert info.value.position is not None


def test_escapes_and_classes():
    dfa = compile_regex(parse_regex(r"^\x41\/\\[^\d]\.$"))
    assert dfa.accepts(b"A/\\x.")
    assert not dfa.accepts(b"A/\\1.")


def test_bounded_repeat():
    node = parse_regex("a{2,3}")
    assert node == Repeat(Literal(ord("a")), 2, 3)
    dfa = compile_regex(parse_regex("^a{2,3}$"))
    assert [dfa.accepts(b"a" * n) for n in range(5)] == [False, False, True, True, False]


def test_dot_excludes_newline():
    dfa = compile_regex(parse_regex("^.$"))
    assert dfa.accepts(b"\x00") and dfa.accepts(b"\xff") and not dfa.accepts(b"\n")


def test_printer_roundtrip_random():
    rng = random.Random(7)
    for _ in range(500):
        ast = parse_regex(random_pattern_text(rng))
        assert parse_regex(to_pattern(ast)) == ast


@settings(max_examples=200)
@given(st.binary(min_size=1, max_size=6))
def test_literal_printer_roundtrip(raw):
    # every octet, metacharacters included, survives printing and reparsing
    dfa = compile_regex(parse_regex("^" + to_pattern(parse_regex(
        "".join(f"\\x{b:02x}" for b in raw))) + "$"))
    assert dfa.accepts(raw)
    assert not dfa.accepts(raw + raw[:1])


# -- DFA ------------------------------------------------------------------------------

def test_ssh_semantics():
    dfa = compile_regex(parse_regex(SSH_PATTERN))
    assert dfa.accepts(b"SSH-2.0-OpenSSH")
    assert dfa.accepts(b"SSH-1.99-OpenSSH")
    assert not dfa.accepts(b"ssh-3.")
    assert not dfa.accepts(b"xSSH-2.")
    assert not dfa.accepts(b"")


def test_anchored_finite_language():
    dfa = compile_regex(parse_regex("^ab$"))
    accepted = [s for s in all_strings(b"abc", 4) if dfa.accepts(s)]
    assert accepted == [b"ab"]


def test_anchored_plus():
    dfa = compile_regex(parse_regex("^a+$"))
    assert dfa.accepts(b"aaaa") and not dfa.accepts(b"aab")


def test_dfa_is_total():
    dfa = compile_regex(parse_regex("a(b|c)*d"))
    assert all(len(row) == 256 for row in dfa.table)
    assert all(0 <= t < dfa.num_states for row in dfa.table for t in row)
    assert dfa.accepting <= set(dfa.states)


def test_state_cap():
    with pytest.raises(DfaTooLarge):
        compile_regex(parse_regex("a[ab]{12}"), state_cap=50)


def test_dfa_agrees_with_backtracker():
    rng = random.Random(2024)
    strings = list(all_strings(b"ab", 6))
    for _ in range(500):
        ast = random_ast(rng, 4)
        dfa = compile_regex(ast)
        for s in strings:
            assert dfa.accepts(s) == reference_match(ast, s), (to_pattern(ast), s)


def test_parsed_patterns_agree_with_backtracker():
    rng = random.Random(99)
    strings = list(all_strings(b"ab", 5))
    for _ in range(200):
        ast = parse_regex(random_pattern_text(rng))
        dfa = compile_regex(ast)
        assert all(dfa.accepts(s) == reference_match(ast, s) for s in strings)


# -- union and equivalence ------------------------------------------------------------

def test_union_accepts_both():
    dfa = compile_regex(union(parse_regex("^a$"), parse_regex("^b$")))
    assert dfa.accepts(b"a") and dfa.accepts(b"b") and not dfa.accepts(b"c")


def test_union_with_self_equivalent():
    rng = random.Random(5)
    for _ in range(100):
        ast = random_ast(rng, 3)
        assert equivalent(compile_regex(ast), compile_regex(union(ast, ast)))


def test_equivalence_detects_difference():
    assert not equivalent(compile_regex(parse_regex("^a+$")), compile_regex(parse_regex("^a*$")))
    assert equivalent(compile_regex(parse_regex("^(a|b)*$")), compile_regex(parse_regex("^[ab]*$")))


def test_union_preserves_ssh_matches():
    original = parse_regex(SSH_PATTERN)
    synthetic = parse_regex("[sS]+[hH]-")
    both = compile_regex(union(original, synthetic))
    for seed in range(200):
        assert both.accepts(generate_matching(original, rng_seed=seed))


# -- inverse generation ----------------------------------------------------------------

def test_singleton_language():
    ast = parse_regex("^ab$")
    assert {generate_matching(ast, rng_seed=s) for s in range(20)} == {b"ab"}


def test_generation_deterministic():
    ast = parse_regex("[a-z]+(0|1)*x?")
    assert generate_matching(ast, rng_seed=3) == generate_matching(ast, rng_seed=3)


def test_generated_ssh_payloads_match():
    ast = parse_regex(SSH_PATTERN)
    dfa = compile_regex(ast)
    outs = [generate_matching(ast, rng_seed=s, dfa=dfa) for s in range(1000)]
    assert all(dfa.accepts(o) for o in outs)
    assert len(set(outs)) > 10


def test_generation_respects_max_len():
    ast = parse_regex("^a+b*$")
    for s in range(200):
        assert len(generate_matching(ast, rng_seed=s, max_len=5)) <= 5


@pytest.mark.parametrize("pattern,max_len", [("^a{10}$", 5), ("^a$b", 10), ("^$a", 10)])
def test_generation_impossible(pattern, max_len):
    with pytest.raises(GenerationImpossible):
        generate_matching(parse_regex(pattern), max_len=max_len)


def test_generation_empty_node():
    with pytest.raises(GenerationImpossible):
        generate_matching(Empty())


def test_generation_random_asts_self_match():
    rng = random.Random(11)
    for _ in range(60):
        ast = random_ast(rng, 4)
        dfa = compile_regex(ast)
        if dfa.shortest_accepted_length() is None:
            continue
        for seed in range(50):
            assert dfa.accepts(generate_matching(ast, rng_seed=seed, dfa=dfa))


# -- repair ---------------------------------------------------------------------------

@pytest.mark.parametrize("raw,fixed", [
    ("abc(", "abc()"),
    ("[ab/c", "[abc]"),
    ("a\\", "a"),
    ("a/b/c", "abc"),
    ("a\\/b", "a\\/b"),
    ("(a[bc", "(a[bc])"),
    ("x[", "x"),
])
def test_repair_examples(raw, fixed):
    assert repair_generated(raw) == fixed


def test_repair_unrepairable():
    with pytest.raises(UnrepairableOutput) as info:
        repair_generated("a)")
    assert info.value.raw == "a)"


@settings(max_examples=300)
@given(st.text(alphabet="ab()[]/\\.*+?|^$-", max_size=20))
def test_repair_idempotent_and_valid(raw):
    try:
        fixed = repair_generated(raw)
    except UnrepairableOutput:
        return
    parse_regex(fixed)
    assert repair_generated(fixed) == fixed


# -- rulesets --------------------------------------------------------------------------

def test_parse_ssh_block():
    (rule,) = parse_ruleset(SSH_BLOCK)
    assert rule.id == "dpd_ssh_client"
    (cond,) = rule.header_conditions
    assert (cond.field, cond.op, cond.values) == ("ip-proto", "==", ("tcp",))
    assert rule.payload_source == SSH_PATTERN
    assert rule.payload_regex == parse_regex(SSH_PATTERN)
    assert rule.options == ("requires-reverse-signature dpd_ssh_server", "tcp-state originator")
    assert rule.actions == ('enable "ssh"',)
    assert match_payload(rule, b"SSH-1.99-OpenSSH")


def test_empty_ruleset():
    assert parse_ruleset("") == []
    assert parse_ruleset("# only a comment\n\n") == []


@pytest.mark.parametrize("text,line", [
    ("signature a {\n payload /x/\n payload /y/\n}\n", 3),
    ("signature {\n payload /x/\n}\n", 1),
    ("signature a {\n payload /x/\n", 1),
    ("signature a {\n payload x\n}\n", 2),
    ("signature a {\n payload /x(/\n}\n", 2),
    ("}\n", 1),
    ("signature a {\n}\nsignature a {\n}\n", 3),
])
def test_ruleset_errors(text, line):
    with pytest.raises(ParseError) as info:
        parse_ruleset(text)
    assert info.value.line == line


def test_ruleset_roundtrip():
    text = SSH_BLOCK + "\nsignature other {\n  dst-port == 21,2121\n  src-ip == 10.0.0.0/8\n  payload /USER ./\n}\n"
    rules = parse_ruleset(text)
    again = parse_ruleset(format_ruleset(rules))
    assert again == rules


def test_header_matching():
    from rnnids.dataset import FlowRecord
    (rule,) = parse_ruleset("signature r {\n ip-proto == udp\n dst-port < 100\n src-ip == 10.0.0.0/8\n}\n")
    flow = FlowRecord("10.1.2.3", "192.168.0.1", 5000, 53, "udp", b"", 0, "benign", "benign")
    assert rule.matches(flow)
    assert not rule.matches(FlowRecord("11.1.2.3", "192.168.0.1", 5000, 53, "udp", b"", 0, "benign", "benign"))
    assert not rule.matches(FlowRecord("10.1.2.3", "192.168.0.1", 5000, 153, "udp", b"", 0, "benign", "benign"))
    assert not rule.matches(FlowRecord("10.1.2.3", "192.168.0.1", 5000, 53, "tcp", b"", 0, "benign", "benign"))


def test_payload_requiring_octets_rejects_empty():
    (rule,) = parse_ruleset(SSH_BLOCK)
    assert not match_payload(rule, b"")
