"""Synthetic signature generation: one small LSTM per rule, trained on its pattern.

Each rule's payload pattern text is the training corpus. A sample of the
same length (seeded with the pattern's first octet) is repaired into a
valid regex and kept only if it is usable as a signature: it must
compile, differ from the source pattern, accept something, and not accept
the empty payload (which would flag every flow).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import DfaTooLarge, RegexSyntaxError, UnrepairableOutput
from .seqmodel import LstmConfig, encode_corpus, sample, train
from .signatures.automaton import compile_regex
from .signatures.regex import parse_regex
from .signatures.repair import repair_generated
from .signatures.rules import SignatureRule

DEFAULT_ATTEMPTS = 8


@dataclass
class Candidate:
    raw: str
    repaired: str = None
    rejected: str = None  # reason, or None when accepted


@dataclass
class SiggenResult:
    rules: list
    skipped: dict = field(default_factory=dict)  # source rule id -> reason
    candidates: dict = field(default_factory=dict)  # source rule id -> [Candidate]


def synthetic_id(rule_id: str, index: int) -> str:
    return f"{rule_id}_rnn{index}"


def _check(text: str, source: str):
    """Parsed AST for an acceptable repaired pattern, or a rejection reason."""
    if text == source:
        return None, "identical to the source pattern"
    try:
        ast = parse_regex(text)
        dfa = compile_regex(ast)
    except (RegexSyntaxError, DfaTooLarge) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    shortest = dfa.shortest_accepted_length()
    if shortest is None:
        return None, "empty language"
    if shortest == 0:
        return None, "matches the empty payload"
    return ast, None


def synthesize_rule(rule: SignatureRule, config: LstmConfig, rng_seed: int = 0, index: int = 1,
                    attempts: int = DEFAULT_ATTEMPTS):
    """Returns ``(new_rule or None, candidates, reason)``."""
    source = rule.payload_source
    if source is None or len(source) < 2:
        return None, [], "no payload pattern long enough to train on"
    raw_source = source.encode("latin-1")
    corpus = encode_corpus(raw_source, name=rule.id)
    model = train(corpus, replace(config, rng_seed=rng_seed))
    candidates = []
    for attempt in range(attempts):
        tail = sample(model, raw_source[:1], len(raw_source) - 1, config.temperature,
                      rng_seed=rng_seed * 1009 + attempt)
        cand = Candidate((raw_source[:1] + tail).decode("latin-1"))
        candidates.append(cand)
        try:
            cand.repaired = repair_generated(cand.raw)
        except UnrepairableOutput as exc:
            cand.rejected = f"unrepairable: {exc.cause}"
            continue
        ast, reason = _check(cand.repaired, source)
        if reason:
            cand.rejected = reason
            continue
        new_rule = SignatureRule(
            id=synthetic_id(rule.id, index),
            header_conditions=rule.header_conditions,
            payload_regex=ast,
            payload_source=cand.repaired,
            options=rule.options,
            actions=rule.actions,
        )
        return new_rule, candidates, None
    return None, candidates, f"no usable sample in {attempts} attempts"


def synthesize_ruleset(rules, config: LstmConfig = None, rng_seed: int = 0, index: int = 1,
                       attempts: int = DEFAULT_ATTEMPTS, progress=None) -> SiggenResult:
    """Synthetic variants of every rule; rule k trains with seed ``rng_seed + k``."""
    config = config or LstmConfig()
    result = SiggenResult([])
    for k, rule in enumerate(rules):
        new_rule, candidates, reason = synthesize_rule(rule, config, rng_seed + k, index, attempts)
        result.candidates[rule.id] = candidates
        if new_rule is None:
            result.skipped[rule.id] = reason
        else:
            result.rules.append(new_rule)
        if progress:
            progress(rule.id, new_rule, reason)
    return result
