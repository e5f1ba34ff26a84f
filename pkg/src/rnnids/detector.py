"""Minimal signature-matching detector and the FP/FN evaluation harness."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field

from .dataset import BENIGN, MALICIOUS, FlowRecord, LabeledDataset, host_pool, overlay
from .errors import LeakageError
from .signatures.rules import SignatureRule

ORIGINAL = "original"
SYNTHETIC = "synthetic"
DEDUP_NOTE = "one alarm per (flow, rule) regardless of match offsets"


@dataclass(frozen=True)
class Ruleset:
    rules: tuple
    provenance: dict  # rule id -> "original" | "synthetic"

    def __post_init__(self):
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError("rule ids must be unique within a ruleset")
        for rule in self.rules:
            rule.dfa  # compile up front

    @classmethod
    def build(cls, original=(), synthetic=()):
        rules = tuple(original) + tuple(synthetic)
        prov = {r.id: ORIGINAL for r in original}
        prov.update({r.id: SYNTHETIC for r in synthetic})
        return cls(rules, prov)

    def extended(self, synthetic_rules) -> "Ruleset":
        prov = dict(self.provenance)
        prov.update({r.id: SYNTHETIC for r in synthetic_rules})
        return Ruleset(self.rules + tuple(synthetic_rules), prov)

    @property
    def ids(self):
        return [r.id for r in self.rules]


@dataclass(frozen=True, order=True)
class Alarm:
    flow_index: int
    rule_id: str
    matched: bool = True


def _flows(dataset):
    return dataset.flows if isinstance(dataset, LabeledDataset) else tuple(dataset)


def scan(dataset, ruleset: Ruleset) -> list:
    """Alarms for every (flow, rule) whose header and payload conditions hold.

    Labels are never consulted.
    """
    alarms = []
    for index, flow in enumerate(_flows(dataset)):
        for rule in ruleset.rules:
            if rule.matches(flow):
                alarms.append(Alarm(index, rule.id))
    alarms.sort()
    return alarms


@dataclass
class EvalReport:
    fp_pct: "float | None"
    fn_pct: "float | None"
    alarms: int
    per_rule_hits: dict
    benign: int
    malicious: int

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("fp_pct", "fn_pct"):
            if out[key] is None:
                del out[key]
        return out


def evaluate(dataset, alarms) -> EvalReport:
    flows = _flows(dataset)
    alarmed = {a.flow_index for a in alarms}
    hits = {}
    for a in alarms:
        hits[a.rule_id] = hits.get(a.rule_id, 0) + 1
    benign = [i for i, f in enumerate(flows) if f.label == BENIGN]
    malicious = [i for i, f in enumerate(flows) if f.label == MALICIOUS]
    fp = 100.0 * sum(i in alarmed for i in benign) / len(benign) if benign else None
    fn = 100.0 * sum(i not in alarmed for i in malicious) / len(malicious) if malicious else None
    return EvalReport(fp, fn, len(alarms), dict(sorted(hits.items())), len(benign), len(malicious))


@dataclass
class ExperimentResult:
    name: str
    baseline: EvalReport
    augmented: EvalReport
    notes: list = field(default_factory=list)

    @property
    def deltas(self) -> dict:
        def diff(a, b):
            return None if a is None or b is None else b - a

        return {
            "fp_pct": diff(self.baseline.fp_pct, self.augmented.fp_pct),
            "fn_pct": diff(self.baseline.fn_pct, self.augmented.fn_pct),
            "alarms": self.augmented.alarms - self.baseline.alarms,
        }

    def to_json(self) -> dict:
        return {
            "experiment": self.name,
            "note": DEDUP_NOTE,
            "baseline": self.baseline.to_json(),
            "augmented": self.augmented.to_json(),
            "deltas": {k: v for k, v in self.deltas.items() if v is not None},
            "notes": list(self.notes),
        }

    def to_table(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{v:.2f}"

        rows = [("Off-the-shelf", self.baseline), ("Enhanced", self.augmented)]
        lines = [
            f"# {self.name}; {DEDUP_NOTE}",
            f"{'Detector':<16}{'FP [%]':>10}{'FN [%]':>10}{'Alarms':>10}",
        ]
        for label, rep in rows:
            lines.append(f"{label:<16}{pct(rep.fp_pct):>10}{pct(rep.fn_pct):>10}{rep.alarms:>10}")
        return "\n".join(lines) + "\n"


def _paired(name, dataset, baseline: Ruleset, augmented: Ruleset, notes=()):
    base = evaluate(dataset, scan(dataset, baseline))
    aug = evaluate(dataset, scan(dataset, augmented))
    return ExperimentResult(name, base, aug, list(notes))


def worm_dataset(mutants, benign_flows, rng_seed: int = 0, pool=None, dst_port: int = 80):
    """Overlay mutant payloads (as TCP flows from fresh hosts) onto benign traffic."""
    rng = random.Random(rng_seed)
    pool = list(pool) if pool is not None else host_pool()
    benign_flows = list(benign_flows)
    victims = sorted({f.dst_host for f in benign_flows}) or ["10.0.0.1"]
    malicious = [
        FlowRecord(rng.choice(pool), rng.choice(victims), rng.randrange(1024, 65536), dst_port,
                   "tcp", bytes(m), 0, MALICIOUS, f"mutant_{k}")
        for k, m in enumerate(mutants)
    ]
    return overlay(benign_flows, malicious, rng_seed, malicious_host_pool=pool)


def experiment_worm(baseline_rules, synthetic_rule: SignatureRule, mutants, benign_flows,
                    rng_seed: int = 0, pool=None) -> ExperimentResult:
    """Detection of worm mutants with and without one synthetic signature.

    Both rulesets scan the same overlaid dataset.
    """
    baseline = Ruleset.build(original=baseline_rules)
    if synthetic_rule.id in baseline.provenance:
        raise ValueError(f"synthetic rule id {synthetic_rule.id!r} clashes with the baseline")
    augmented = baseline.extended([synthetic_rule])
    dataset = worm_dataset(mutants, benign_flows, rng_seed, pool)
    return _paired("Experiment 1 (worm mutants)", dataset, baseline, augmented)


def check_leakage(dataset: LabeledDataset, synthetic_rules) -> None:
    """Refuse rules that were also used to synthesise the dataset's malicious flows."""
    used = dataset.generation_rules
    origins = {f.origin for f in dataset.flows if f.label == MALICIOUS}
    patterns = set(used.values())
    leaked = sorted(
        r.id for r in synthetic_rules
        if r.id in used or r.id in origins
        or (r.payload_source is not None and r.payload_source in patterns)
    )
    if leaked:
        raise LeakageError(
            "rules added to the detector were also used to generate the dataset: "
            + ", ".join(leaked)
        )


def experiment_general(ruleset, synthetic_rules, dataset: LabeledDataset) -> ExperimentResult:
    """General case: baseline ruleset vs the same ruleset plus synthetic rules."""
    baseline = ruleset if isinstance(ruleset, Ruleset) else Ruleset.build(original=ruleset)
    synthetic_rules = list(synthetic_rules)
    check_leakage(dataset, synthetic_rules)
    augmented = baseline.extended(synthetic_rules)
    return _paired("Experiment 2 (general case)", dataset, baseline, augmented)


def dumps_report(result: ExperimentResult) -> str:
    return json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n"
