from rnnids.seqmodel import LstmConfig
from rnnids.siggen import _check, synthesize_rule, synthesize_ruleset, synthetic_id
from rnnids.signatures import parse_ruleset

SMALL = LstmConfig(epochs=5, hidden_size=16, sequence_length=10)

RULES = parse_ruleset("""
signature ssh {
  ip-proto == tcp
  dst-port == 22
  payload /^[sS][sS][hH]-[12]\\./
  event "ssh"
}
signature header_only {
  dst-port == 9
}
""")


def test_synthetic_id():
    assert synthetic_id("http", 2) == "http_rnn2"


def test_check_rejections():
    assert _check("abc", "abc")[1] == "identical to the source pattern"
    assert _check("a*", "abc")[1] == "matches the empty payload"
    assert _check("^$a", "abc")[1] == "empty language"
    assert _check("a(", "abc")[1].startswith("RegexSyntaxError")
    ast, reason = _check("ab+", "abc")
    assert reason is None and ast is not None


def test_synthesized_rule_keeps_headers():
    rule, candidates, reason = synthesize_rule(RULES[0], SMALL, rng_seed=3)
    assert candidates
    if rule is None:
        assert reason
        return
    assert rule.id == "ssh_rnn1"
    assert rule.header_conditions == RULES[0].header_conditions
    assert rule.actions == RULES[0].actions
    assert rule.payload_source != RULES[0].payload_source
    assert rule.payload_source == candidates[-1].repaired


def test_ruleset_skips_rules_without_payload():
    res = synthesize_ruleset(RULES, SMALL, rng_seed=1, index=4)
    assert "header_only" in res.skipped
    assert all(r.id.endswith("_rnn4") for r in res.rules)


def test_deterministic():
    a = synthesize_ruleset(RULES[:1], SMALL, rng_seed=7)
    b = synthesize_ruleset(RULES[:1], SMALL, rng_seed=7)
    assert [r.payload_source for r in a.rules] == [r.payload_source for r in b.rules]
    assert [c.raw for c in a.candidates["ssh"]] == [c.raw for c in b.candidates["ssh"]]
