from rnnids.dataset import read_dataset, revalidate_payloads
from rnnids.fixtures import build_all, codered_mutants, data_path, read_mutants
from rnnids.signatures import parse_ruleset


def test_shipped_fixtures_are_reproducible(tmp_path):
    written = build_all(tmp_path)
    assert written
    for path in written:
        assert path.read_bytes() == data_path(path.name).read_bytes(), path.name


def test_rulesets_parse_and_ids_are_consistent():
    base = parse_ruleset(data_path("base.sig").read_text())
    gen = parse_ruleset(data_path("synthetic_generation.sig").read_text())
    det = parse_ruleset(data_path("synthetic_detector.sig").read_text())
    assert len(base) == len(gen) == len(det)
    assert {r.id + "_rnn1" for r in base} == {r.id for r in gen}
    assert {r.id + "_rnn2" for r in base} == {r.id for r in det}
    assert not {r.payload_source for r in gen} & {r.payload_source for r in det}


def test_overlay_revalidates():
    ds = read_dataset(data_path("overlay.jsonl"))
    rules = parse_ruleset(data_path("base.sig").read_text()) + \
        parse_ruleset(data_path("synthetic_generation.sig").read_text())
    assert revalidate_payloads(ds, rules) == []
    ds.check()


def test_codered_mutants_file():
    assert read_mutants(data_path("codered_mutants.hex")) == codered_mutants()
    (rule,) = parse_ruleset(data_path("codered.sig").read_text())
    hits = [m for m in codered_mutants() if rule.payload_matches(m)]
    assert len(hits) == 5 and not rule.payload_matches(codered_mutants()[-1])


def test_memorize_fixture_size():
    assert len(data_path("memorize_200.bin").read_bytes()) == 200
