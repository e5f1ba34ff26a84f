import csv
import io
import json
import subprocess
import sys

import pytest

from rnnids.cli import UsageError, main, read_config_file
from rnnids.fixtures import data_path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_compare_csv(tmp_path, capsys):
    (tmp_path / "a").write_bytes(b"kitten")
    (tmp_path / "b").write_bytes(b"sitting")
    code, out, _ = run(["compare", f"x={tmp_path / 'a'}", f"y={tmp_path / 'b'}"], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["", "x", "y"]
    # percent similarity, lower triangle: 1 - 3/7
    assert rows[1][1:] == ["100.0", ""] and rows[2][1:] == ["57.1", "100.0"]


def test_compare_sw_text(tmp_path, capsys):
    (tmp_path / "a").write_bytes(b"abcxyz")
    (tmp_path / "b").write_bytes(b"qqabcq")
    code, out, _ = run(["compare", "--metric", "sw", "--format", "text",
                        tmp_path / "a", tmp_path / "b"], capsys)
    assert code == 0 and "100" in out


def test_corpus_spectra_and_manifest(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert run(["corpus", "--max-iterations", 3, "--out", corpus], capsys)[0] == 0
    assert sorted(p.name for p in corpus.iterdir() if p.suffix == ".bin") == [
        "variant_0.bin", "variant_1.bin", "variant_2.bin", "variant_3.bin"]
    manifest = json.loads((corpus / "run-manifest.json").read_text())
    assert manifest["format"] == "rnnids-run" and manifest["seeds"] == {"seed": 0}
    pgm = tmp_path / "s.pgm"
    assert run(["spectra", "--corpus", corpus, "--out", pgm], capsys)[0] == 0
    assert pgm.read_bytes().startswith(b"P5\n")


def test_train_sample_and_rerun_identical(tmp_path, capsys):
    data = tmp_path / "d.txt"
    data.write_bytes(b"abcabcabcabcabcabc" * 4)
    model = tmp_path / "m.bin"
    args = ["train", data, "--out", model, "--epochs", 3, "--hidden-size", 8,
            "--sequence-length", 10, "--seed", 4]
    assert run(args, capsys)[0] == 0
    first = model.read_bytes()
    manifest = model.with_name("m.bin.manifest.json")
    assert json.loads(manifest.read_text())["config_overrides"] == {
        "epochs": 3, "hidden_size": 8, "sequence_length": 10}
    model.unlink()
    assert run(["rerun", manifest], capsys)[0] == 0
    assert model.read_bytes() == first
    code, out, _ = run(["sample", "--model", model, "--prime", "ab", "--length", 5,
                        "--temperature", 0], capsys)
    assert code == 0 and len(out) >= 5


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    data = tmp_path / "d.txt"
    data.write_bytes(b"xyz" * 20)
    monkeypatch.setenv("RNNIDS_SEED", "11")
    assert run(["train", data, "--out", tmp_path / "m", "--epochs", 1, "--hidden-size", 4],
               capsys)[0] == 0
    assert json.loads((tmp_path / "m.manifest.json").read_text())["seeds"] == {"seed": 11}
    monkeypatch.setenv("RNNIDS_SEED", "eleven")
    code, _, err = run(["train", data, "--out", tmp_path / "m", "--epochs", 1], capsys)
    assert code == 1 and json.loads(err)["error"] == "UsageError"


def test_config_file(tmp_path):
    cfg = tmp_path / "c.conf"
    cfg.write_text("# comment\nepochs = 7\nlearning_rate=0.01\noptimizer = sgd\n")
    assert read_config_file(cfg) == {"epochs": 7, "learning_rate": 0.01, "optimizer": "sgd"}
    cfg.write_text("no_such_field = 1\n")
    with pytest.raises(UsageError):
        read_config_file(cfg)


def test_siggen_deterministic(tmp_path, capsys):
    rules = tmp_path / "r.sig"
    rules.write_text("signature s {\n  dst-port == 22\n  payload /^[sS][sS][hH]-[12]\\./\n}\n")
    outs = []
    for name in ("a.sig", "b.sig"):
        out = tmp_path / name
        assert run(["siggen", "--rules", rules, "--out", out, "--seed", 7, "--epochs", 5,
                    "--hidden-size", 16], capsys)[0] == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_scan_and_dataset(tmp_path, capsys):
    out = tmp_path / "ds.jsonl"
    assert run(["dataset", "--pcap", data_path("benign.pcap"), "--rules", data_path("base.sig"),
                "--per-rule", 2, "--out", out], capsys)[0] == 0
    alarms = tmp_path / "alarms.csv"
    code, stdout, _ = run(["scan", "--dataset", out, "--rules", data_path("base.sig"),
                           "--alarms", alarms], capsys)
    assert code == 0
    report = json.loads(stdout)
    assert report["fn_pct"] == 0
    assert alarms.read_text().startswith("flow_index,rule_id")


def test_experiment_worm_table(capsys):
    code, out, _ = run(["experiment", "worm"], capsys)
    assert code == 0 and "Off-the-shelf" in out and "Enhanced" in out


def test_leakage_exit_code(capsys):
    code, _, err = run(["experiment", "general", "--synthetic",
                        data_path("synthetic_generation.sig")], capsys)
    assert code == 1 and json.loads(err)["error"] == "LeakageError"


def test_bad_pattern_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.sig"
    bad.write_text("signature b {\n  payload /a(b/\n}\n")
    code, _, err = run(["scan", "--dataset", data_path("overlay.jsonl"), "--rules", bad], capsys)
    payload = json.loads(err)
    assert code == 1 and payload["error"] == "ParseError" and payload["line"] == 2
    assert "position 1" in payload["message"]


def test_usage_errors_exit_2():
    proc = subprocess.run([sys.executable, "-m", "rnnids.cli", "bogus"], capture_output=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "rnnids.cli", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("rnnids")
