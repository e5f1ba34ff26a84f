"""Command-line entry point: ``rnnids <subcommand> ...``.

Every subcommand that writes a file also writes a run manifest next to it
(``<output>.manifest.json``, or ``run-manifest.json`` inside an output
directory). ``rnnids rerun MANIFEST`` replays the recorded invocation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from . import __version__
from .dataset import (
    DEFAULT_MALICIOUS_POOL,
    benign_host_set,
    host_pool,
    ingest_pcap,
    overlay,
    read_dataset,
    synth_malicious_flows,
    write_dataset,
)
from .detector import (
    Ruleset,
    dumps_report,
    evaluate,
    experiment_general,
    experiment_worm,
    scan,
)
from .errors import RnnIdsError
from .fixtures import data_path, read_mutants
from .payloads import DEFAULT_KEY, base_payload, build_corpus, build_spectral, read_corpus_dir, \
    render_pgm, write_corpus
from .seqmodel import LstmConfig, encode_corpus, load_model, sample, save_model, train
from .siggen import DEFAULT_ATTEMPTS, synthesize_ruleset
from .signatures.rules import format_ruleset, read_ruleset
from .simmetrics import LEVENSHTEIN, AlignmentParams, similarity_matrix

SEED_ENV = "RNNIDS_SEED"
MANIFEST_FORMAT = "rnnids-run"
DIR_MANIFEST = "run-manifest.json"

_TRAINING_KEYS = {f.name: f for f in dataclasses.fields(LstmConfig) if f.name != "rng_seed"}


class UsageError(RnnIdsError):
    pass


# -- configuration ------------------------------------------------------------------

def _cast(name, text):
    if name in ("learning_rate", "temperature", "grad_clip"):
        return float(text)
    if name == "optimizer":
        return text.strip()
    if name == "hidden_size" and text.strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


def read_config_file(path) -> dict:
    """``key = value`` lines using the training-table field names; ``#`` comments."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _TRAINING_KEYS:
            raise UsageError(f"{path}:{lineno}: expected one of {sorted(_TRAINING_KEYS)} = value")
        try:
            values[key] = _cast(key, value.strip())
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}") from None
    return values


def _training_config(args) -> tuple:
    """Resolved LstmConfig plus the explicit overrides that produced it."""
    overrides = read_config_file(args.config) if args.config else {}
    for key in _TRAINING_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            overrides[key] = flag
    config = dataclasses.replace(LstmConfig(), rng_seed=args.seed, **overrides)
    return config, overrides


def _add_training_flags(p):
    g = p.add_argument_group("training (flags override --config)")
    g.add_argument("--config", help="key=value file using the training field names")
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--learning-rate", dest="learning_rate", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--num-hidden-layers", dest="num_hidden_layers", type=int)
    g.add_argument("--embedding-size", dest="embedding_size", type=int)
    g.add_argument("--sequence-length", dest="sequence_length", type=int)
    g.add_argument("--hidden-size", dest="hidden_size", type=int)
    g.add_argument("--hidden-cap", dest="hidden_cap", type=int)
    g.add_argument("--grad-clip", dest="grad_clip", type=float)
    g.add_argument("--optimizer", choices=("adam", "sgd"))
    g.add_argument("--temperature", type=float)


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (default: ${SEED_ENV} or 0)")


# -- manifests ------------------------------------------------------------------------

def _manifest_path(output: Path) -> Path:
    if output.is_dir():
        return output / DIR_MANIFEST
    return output.with_name(output.name + ".manifest.json")


def write_manifest(args, argv, inputs, outputs, overrides=None):
    if not outputs:
        return None
    manifest = {
        "format": MANIFEST_FORMAT,
        "subcommand": args.command if not getattr(args, "experiment", None)
        else f"experiment {args.experiment}",
        "argv": list(argv),
        "cwd": os.getcwd(),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seeds": {"seed": args.seed},
        "config_overrides": dict(sorted((overrides or {}).items())),
        "version": __version__,
    }
    path = _manifest_path(Path(outputs[0]))
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@contextmanager
def _in_directory(path):
    old = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(old)


# -- subcommands ------------------------------------------------------------------------

def cmd_corpus(args, argv):
    base = Path(args.base).read_bytes() if args.base else base_payload()
    corpus = build_corpus(base, bytes.fromhex(args.key), args.max_iterations, args.seed)
    out = Path(args.out)
    write_corpus(corpus, out)
    write_manifest(args, argv, [args.base] if args.base else [], [out])
    print(f"{len(corpus.variants)} variants written to {out}")


def cmd_spectra(args, argv):
    matrix = build_spectral(read_corpus_dir(args.corpus))
    out = Path(args.out)
    out.write_bytes(render_pgm(matrix))
    write_manifest(args, argv, [args.corpus], [out])
    print(f"{matrix.rows}x{matrix.cols} image, {len(matrix.constant_columns())} constant columns")


def cmd_train(args, argv):
    raw = b"".join(Path(p).read_bytes() for p in args.inputs)
    config, overrides = _training_config(args)
    corpus = encode_corpus(raw, name="+".join(Path(p).name for p in args.inputs))

    def progress(epoch, loss):
        if args.verbose:
            print(f"epoch {epoch + 1}: loss {loss:.6f}", file=sys.stderr)

    model = train(corpus, config, progress=progress)
    save_model(model, args.out)
    write_manifest(args, argv, args.inputs, [args.out], overrides)
    print(f"final loss {model.loss_trace[-1]:.6f} (hidden {model.hidden_sizes[0]}, "
          f"vocab {model.vocab_size})")


def _prime_bytes(args):
    if args.prime_hex is not None:
        return bytes.fromhex(args.prime_hex)
    if args.prime_file is not None:
        return Path(args.prime_file).read_bytes()
    return args.prime.encode("latin-1")


def cmd_sample(args, argv):
    model = load_model(args.model)
    temperature = args.temperature if args.temperature is not None else model.config.temperature
    out = sample(model, _prime_bytes(args), args.length, temperature, args.seed)
    if args.out:
        Path(args.out).write_bytes(out)
        write_manifest(args, argv, [args.model], [args.out])
    else:
        sys.stdout.buffer.write(out)
        sys.stdout.flush()


def _labelled(specs):
    items = []
    for spec in specs:
        label, sep, path = spec.partition("=")
        if not sep:
            label, path = Path(spec).stem, spec
        items.append((label, Path(path).read_bytes()))
    return items


def cmd_compare(args, argv):
    metric = LEVENSHTEIN if args.metric == "levenshtein" else \
        AlignmentParams(args.match, args.mismatch, args.gap)
    matrix = similarity_matrix(_labelled(args.sequences), metric)
    text = matrix.to_csv() if args.format == "csv" else matrix.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(args, argv, [s.partition("=")[2] or s for s in args.sequences], [args.out])
    else:
        sys.stdout.write(text)


def cmd_siggen(args, argv):
    rules = read_ruleset(args.rules)
    config, overrides = _training_config(args)

    def progress(rule_id, new_rule, reason):
        if args.verbose:
            shown = new_rule.payload_source if new_rule else f"skipped ({reason})"
            print(f"{rule_id}: {shown}", file=sys.stderr)

    result = synthesize_ruleset(rules, config, args.seed, args.index, args.attempts, progress)
    header = "".join(f"# skipped {rid}: {why}\n" for rid, why in sorted(result.skipped.items()))
    Path(args.out).write_text(header + ("\n" if header else "") + format_ruleset(result.rules),
                              encoding="utf-8")
    write_manifest(args, argv, [args.rules], [args.out], overrides)
    print(f"{len(result.rules)} synthetic rules written, {len(result.skipped)} skipped")


def cmd_dataset(args, argv):
    inputs = []
    benign = []
    if args.pcap:
        ingest = ingest_pcap(Path(args.pcap).read_bytes())
        benign = ingest.flows
        inputs.append(args.pcap)
        if ingest.skipped or ingest.truncated:
            print(f"pcap: {ingest.skipped} packets skipped, truncated={bool(ingest.truncated)}",
                  file=sys.stderr)
    pool = host_pool(args.pool, args.pool_size)
    rules = []
    for path in args.rules or []:
        rules.extend(read_ruleset(path))
        inputs.append(path)
    synth = synth_malicious_flows(rules, args.per_rule, pool, benign_host_set(benign), args.seed,
                                  args.max_len)
    for rule_id, reason in sorted(synth.skipped.items()):
        print(f"skipped {rule_id}: {reason}", file=sys.stderr)
    dataset = overlay(benign, synth.flows, args.seed, malicious_host_pool=pool,
                      generation_rules={r.id: r.payload_source for r in rules
                                        if r.id not in synth.skipped})
    write_dataset(dataset, args.out)
    write_manifest(args, argv, inputs, [args.out])
    print(f"{dataset.benign_count} benign + {dataset.malicious_count} malicious flows")


def _rules_from(paths):
    rules = []
    for path in paths or []:
        rules.extend(read_ruleset(path))
    return rules


def cmd_scan(args, argv):
    dataset = read_dataset(args.dataset)
    ruleset = Ruleset.build(_rules_from(args.rules), _rules_from(args.synthetic))
    alarms = scan(dataset, ruleset)
    report = evaluate(dataset, alarms)
    text = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    outputs = []
    if args.alarms:
        lines = ["flow_index,rule_id\n"] + [f"{a.flow_index},{a.rule_id}\n" for a in alarms]
        Path(args.alarms).write_text("".join(lines), encoding="utf-8")
        outputs.append(args.alarms)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        outputs.insert(0, args.out)
    else:
        sys.stdout.write(text)
    write_manifest(args, argv, [args.dataset] + (args.rules or []) + (args.synthetic or []), outputs)


def _emit_experiment(args, argv, result, inputs):
    sys.stdout.write(result.to_table())
    if args.out:
        Path(args.out).write_text(dumps_report(result), encoding="utf-8")
        write_manifest(args, argv, inputs, [args.out])


def cmd_experiment_worm(args, argv):
    baseline = read_ruleset(args.rules)
    synthetic = read_ruleset(args.synthetic)
    if len(synthetic) != 1:
        raise UsageError(f"{args.synthetic} must hold exactly one signature, found {len(synthetic)}")
    benign = ingest_pcap(Path(args.pcap).read_bytes()).flows
    result = experiment_worm(baseline, synthetic[0], read_mutants(args.mutants), benign,
                             args.seed, host_pool(args.pool))
    _emit_experiment(args, argv, result, [args.rules, args.synthetic, args.mutants, args.pcap])


def cmd_experiment_general(args, argv):
    result = experiment_general(read_ruleset(args.rules), read_ruleset(args.synthetic),
                                read_dataset(args.dataset))
    _emit_experiment(args, argv, result, [args.rules, args.synthetic, args.dataset])


def cmd_rerun(args, argv):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if manifest.get("format") != MANIFEST_FORMAT:
        raise UsageError(f"{args.manifest} is not a run manifest")
    recorded = list(manifest["argv"])
    if "--seed" not in recorded:
        recorded += ["--seed", str(manifest["seeds"]["seed"])]
    with _in_directory(manifest["cwd"]):
        return main(recorded)


# -- parser ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rnnids",
        description="Generate worm mutants and synthetic signatures with a character LSTM, "
                    "and evaluate a signature detector on overlay datasets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("corpus", help="toy-encode a payload into a variant corpus directory")
    p.add_argument("--base", help="base payload file (default: shipped 64-octet stand-in)")
    p.add_argument("--key", default=DEFAULT_KEY.hex(), help="XOR key as hex (default %(default)s)")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--out", required=True, help="output directory")
    _add_seed(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("spectra", help="render a corpus directory as a PGM spectral image")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("train", help="train a character LSTM on one or more files")
    p.add_argument("inputs", nargs="+", help="training files, concatenated in order")
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("-v", "--verbose", action="store_true")
    _add_training_flags(p)
    _add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample octets from a trained model")
    p.add_argument("--model", required=True)
    prime = p.add_mutually_exclusive_group(required=True)
    prime.add_argument("--prime", help="priming text (latin-1)")
    prime.add_argument("--prime-hex", help="priming octets as hex")
    prime.add_argument("--prime-file", help="priming octets from a file")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--temperature", type=float, help="0 selects the most likely octet")
    p.add_argument("--out", help="output file (default: stdout)")
    _add_seed(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("compare", help="pairwise similarity matrix as CSV or text")
    p.add_argument("sequences", nargs="+", help="files, optionally as LABEL=PATH; "
                                                "labels ending in * are generated")
    p.add_argument("--metric", choices=("levenshtein", "sw"), default="levenshtein")
    p.add_argument("--match", type=float, default=1.0)
    p.add_argument("--mismatch", type=float, default=-1.0)
    p.add_argument("--gap", type=float, default=-1.0)
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    p.add_argument("--out")
    _add_seed(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("siggen", help="train on each rule's pattern and emit synthetic rules")
    p.add_argument("--rules", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--index", type=int, default=1, help="N in the _rnn<N> id suffix")
    p.add_argument("--attempts", type=int, default=DEFAULT_ATTEMPTS,
                   help="samples tried per rule before skipping it")
    p.add_argument("-v", "--verbose", action="store_true")
    _add_training_flags(p)
    _add_seed(p)
    p.set_defaults(func=cmd_siggen)

    p = sub.add_parser("dataset", help="ingest a capture, synthesise malicious flows, overlay")
    p.add_argument("--pcap", help="benign libpcap capture")
    p.add_argument("--rules", action="append", help="generation ruleset (repeatable)")
    p.add_argument("--per-rule", type=int, default=10)
    p.add_argument("--pool", default=DEFAULT_MALICIOUS_POOL, help="malicious host CIDR")
    p.add_argument("--pool-size", type=int)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("scan", help="run a ruleset over a dataset and report FP/FN")
    p.add_argument("--dataset", required=True)
    p.add_argument("--rules", action="append", help="original ruleset (repeatable)")
    p.add_argument("--synthetic", action="append", help="synthetic ruleset (repeatable)")
    p.add_argument("--alarms", help="write alarms as CSV")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    _add_seed(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("experiment", help="paired baseline/augmented detector runs")
    exp = p.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    w = exp.add_parser("worm", help="worm mutants vs one synthetic signature")
    w.add_argument("--rules", default=str(data_path("codered.sig")))
    w.add_argument("--synthetic", default=str(data_path("codered_synthetic.sig")))
    w.add_argument("--mutants", default=str(data_path("codered_mutants.hex")),
                   help="one hex-encoded payload per line")
    w.add_argument("--pcap", default=str(data_path("benign.pcap")))
    w.add_argument("--pool", default=DEFAULT_MALICIOUS_POOL)
    w.add_argument("--out", help="JSON report")
    _add_seed(w)
    w.set_defaults(func=cmd_experiment_worm)
    g = exp.add_parser("general", help="ruleset vs ruleset plus synthetic signatures")
    g.add_argument("--rules", default=str(data_path("base.sig")))
    g.add_argument("--synthetic", default=str(data_path("synthetic_detector.sig")))
    g.add_argument("--dataset", default=str(data_path("overlay.jsonl")))
    g.add_argument("--out", help="JSON report")
    _add_seed(g)
    g.set_defaults(func=cmd_experiment_general)

    p = sub.add_parser("rerun", help="replay the invocation recorded in a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun, seed=0)
    return parser


def _report_error(exc):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "position"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        result = args.func(args, argv)
        return int(result or 0)
    except (RnnIdsError, ValueError, OSError) as exc:
        _report_error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
