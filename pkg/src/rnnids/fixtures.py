"""Deterministic builder for the shipped fixture files in ``rnnids.data``.

Everything here is a desk-scale reconstruction: the protocol signatures are
representative DPD-style patterns (only the SSH block is verbatim), the
``_rnn1``/``_rnn2`` sets are hand-written variants in the shape an LSTM
produces, the worm is a Code-Red-shaped stand-in with no exploit content,
and the benign capture is synthetic traffic.

Run ``python -m rnnids.fixtures DIR`` to regenerate the files.
"""

from __future__ import annotations

import random
import sys
from importlib import resources
from pathlib import Path

from .dataset import FlowRecord, benign_host_set, host_pool, ingest_pcap, overlay, \
    synth_malicious_flows, dumps_dataset, write_pcap
from .signatures.rules import format_ruleset, parse_ruleset

SEED = 20180501
BENIGN_START_US = 1_500_000_000 * 1_000_000

# protocol, header lines, original pattern, generation-only variant, detector-added variant
_PROTOCOLS = [
    ("socks", ["ip-proto == tcp", "dst-port == 1080"],
     r"^\x04[\x01\x02]\x00", r"^\x05[\x01-\x03]\x00", r"^[\x04\x05][\x01-\x03]\x00"),
    ("dnp3", ["ip-proto == tcp", "dst-port == 20000"],
     r"^\x05\x64[\x05-\xff]", r"^\x05\x64[\x00-\x0f]", r"^\x05\x64[\x00-\x04]"),
    ("rfb", ["ip-proto == tcp", "dst-port == 5900"],
     r"^RFB 00[345]\.00[0-8]", r"^RFB 00[3-9]\.0[0-9][0-9]\n", r"^RFB [0-9]{3}\.[0-9]{3}"),
    ("krb", ["ip-proto == udp", "dst-port == 88"],
     r"^[\x6a\x6c].{1,4}\x30.{1,4}\xa1\x03\x02\x01\x05",
     r"^[\x6a\x6c\x6e].{1,4}\x30.{1,4}\xa1\x03\x02\x01[\x04\x05]",
     r"^\x6e.{1,4}\x30"),
    ("ftp", ["ip-proto == tcp", "dst-port == 21"],
     r"^[uU][sS][eE][rR] [a-zA-Z0-9]+", r"^[uU][sS][eE][rR] +[a-z]+\r\n", r"^[uU][sS][eE][rR]  +"),
    ("tunnels", ["ip-proto == udp", "dst-port == 2152"],
     r"^\x32\xff", r"^[\x30-\x3f]\xff..", r"^[\x30\x31\x33-\x3f]\xff"),
    ("dce_rpc", ["ip-proto == tcp", "dst-port == 135"],
     r"^\x05[\x00\x01][\x00-\x13]\x03", r"^\x05[\x00\x01][\x00-\x13][\x03\x10]",
     r"^\x05[\x00\x01][\x00-\x13]\x10"),
    ("smtp", ["ip-proto == tcp", "dst-port == 25"],
     r"^([eE][hH]|[hH][eE])[lL][oO] ", r"^([eE][hH]|[hH][eE])[lL][oO][ \t]+[a-z]+",
     r"^[eEhH][hHeE][lL][oO]\t"),
    ("sip", ["ip-proto == udp", "dst-port == 5060"],
     r"^(REGISTER|INVITE|OPTIONS|BYE) sip:", r"^(INVITE|ACK|CANCEL|OPTIONS) sips?:",
     r"^(ACK|CANCEL) sip"),
    ("rdp", ["ip-proto == tcp", "dst-port == 3389"],
     r"^\x03\x00.{2}.\xe0", r"^\x03\x00.{2}.[\xd0\xe0]", r"^\x03\x00...\xd0"),
    ("ssh", ["ip-proto == tcp"],
     r"^[sS][sS][hH]-[12]\.", r"^[sS][sS][hH]-[123]\.", r"^[sS][sS][hH]-3\."),
    ("ssl", ["ip-proto == tcp", "dst-port == 443"],
     r"^\x16\x03[\x00-\x03]..\x01...\x03[\x00-\x03]",
     r"^\x16\x03[\x00-\x04]..\x01...\x03[\x00-\x04]",
     r"^\x16\x03\x04..\x01"),
    ("irc", ["ip-proto == tcp", "dst-port == 6667"],
     r"^[nN][iI][cC][kK] [^\r\n]+[\r\n]", r"^([nN][iI][cC][kK]|[uU][sS][eE][rR]) [a-z]+\r\n",
     r"^[uU][sS][eE][rR] [^\r\n]+\r\n"),
    ("xmpp", ["ip-proto == tcp", "dst-port == 5222"],
     r"<stream:stream [^>]*xmlns='jabber:", r"<stream:stream [a-z ]*xmlns=[\"']jabber:",
     r"xmlns=\"jabber:"),
    ("dhcp", ["ip-proto == udp", "dst-port == 67"],
     r"^\x01\x01\x06\x00", r"^\x01[\x01\x06]\x06\x00", r"^\x01\x06\x06"),
    ("http", ["ip-proto == tcp", "dst-port == 80"],
     r"^(GET|POST|HEAD|PUT) [^ ]+ HTTP\/1\.[01]",
     r"^(GET|POST|PUT|DELETE|PATCH) \/[a-z]+ HTTP\/[12]\.[01]",
     r"^(GET|POST|PUT|DELETE|PATCH) [^ ]+ HTTP\/2\.0"),
    ("pop3", ["ip-proto == tcp", "dst-port == 110"],
     r"^(USER|PASS|APOP|CAPA|STLS)[ \r\n]", r"^(USER|PASS|APOP|AUTH|UIDL|TOP)[ \r\n]",
     r"^(AUTH|UIDL|TOP)[ \r\n]"),
]

_SSH_BLOCK = """\
signature dpd_ssh_client {
  ip-proto == tcp
  payload /^[sS][sS][hH]-[12]\\./
  requires-reverse-signature dpd_ssh_server
  enable "ssh"
  tcp-state originator
}
"""

_HEADER = {
    "base.sig": "# Reconstructed protocol-detection signatures, one per protocol (17).\n"
                "# Only dpd_ssh_client is verbatim; the rest are representative patterns.\n",
    "synthetic_generation.sig": "# Variant signatures used only to synthesise malicious traffic.\n"
                                "# Never add these to a detector evaluated on that traffic.\n",
    "synthetic_detector.sig": "# Variant signatures added to the detector; disjoint from the\n"
                              "# generation set by id and by pattern.\n",
}


def _block(rule_id, headers, pattern, tail=("event \"protocol detected\"",)):
    body = "".join(f"  {h}\n" for h in headers)
    body += f"  payload /{pattern}/\n"
    body += "".join(f"  {t}\n" for t in tail)
    return f"signature {rule_id} {{\n{body}}}\n"


def baseline_ruleset_text() -> str:
    blocks = []
    for name, headers, original, _, _ in _PROTOCOLS:
        if name == "ssh":
            blocks.append(_SSH_BLOCK)
        else:
            blocks.append(_block(f"dpd_{name}", headers, original))
    return _HEADER["base.sig"] + "\n" + "\n".join(blocks)


def _variant_text(column: int, suffix: str, header_key: str) -> str:
    blocks = []
    for name, headers, *patterns in _PROTOCOLS:
        base_id = "dpd_ssh_client" if name == "ssh" else f"dpd_{name}"
        blocks.append(_block(f"{base_id}_{suffix}", headers, patterns[column]))
    return _HEADER[header_key] + "\n" + "\n".join(blocks)


def generation_ruleset_text() -> str:
    return _variant_text(1, "rnn1", "synthetic_generation.sig")


def detector_ruleset_text() -> str:
    return _variant_text(2, "rnn2", "synthetic_detector.sig")


# -- worm stand-in ---------------------------------------------------------------

CODERED_RULE = """\
# Code-Red-shaped stand-in signature: request for the .ida handler padded with N.
signature codered_ida {
  ip-proto == tcp
  dst-port == 80
  payload /^GET \\/default\\.ida\\?N+%u[0-9a-f]{4}/
  event "Code-Red request"
}
"""

CODERED_SYNTHETIC = """\
# Variant of codered_ida in the shape an LSTM emits.
signature codered_ida_rnn1 {
  ip-proto == tcp
  dst-port == 80
  payload /^GET \\/default\\.ida\\?[NX]+%u/
  event "Code-Red request"
}
"""


def codered_mutants() -> list:
    """Six request-shaped mutants; the last pads with X and evades codered_ida."""
    tail = "%u9090%u6858%ucbd3%u7801%u9090%u6858%ucbd3%u7801%u9090=a HTTP/1.0\r\n\r\n"
    out = []
    for n, pad in ((224, "N"), (200, "N"), (180, "N"), (240, "N"), (212, "N"), (224, "X")):
        out.append(f"GET /default.ida?{pad * n}{tail}".encode("ascii"))
    return out


# -- benign capture ----------------------------------------------------------------

_NAMES = ["example", "mirror", "cdn", "mail", "update", "static", "api", "news", "wiki", "docs"]


def _dns_query(rng, name):
    qname = b"".join(bytes([len(p)]) + p.encode() for p in name.split(".")) + b"\x00"
    return rng.randbytes(2) + b"\x01\x00\x00\x01\x00\x00\x00\x00\x00\x00" + qname + b"\x00\x01\x00\x01"


def _dns_answer(query, rng):
    return query[:2] + b"\x81\x80" + query[4:6] + b"\x00\x01" + query[8:] + \
        b"\xc0\x0c\x00\x01\x00\x01\x00\x00\x0e\x10\x00\x04" + rng.randbytes(4)


def benign_flows(n_packets: int = 500, rng_seed: int = SEED) -> list:
    """Synthetic benign packets between 10.0.0.0/16 clients and 172.16.0.0/24 servers.

    Roughly 2% of the packets are client SSH banners and plain HTTP/1.1
    requests, which the protocol signatures flag; two HTTP/2.0 requests
    are flagged only by the detector-added set.
    """
    rng = random.Random(rng_seed)
    clients = [f"10.0.{rng.randrange(0, 4)}.{rng.randrange(2, 250)}" for _ in range(24)]
    servers = [f"172.16.0.{k}" for k in range(10, 22)]
    flagged = ["ssh"] * 6 + ["http11"] * 5 + ["http20"] * 2
    kinds = flagged + rng.choices(
        ["dns", "http_resp", "tls", "ntp", "ack", "smtp_resp", "ssh_data"],
        weights=[24, 16, 20, 8, 20, 6, 6], k=n_packets - len(flagged))
    rng.shuffle(kinds)
    flows = []
    ts = BENIGN_START_US
    for kind in kinds:
        ts += rng.randrange(1_000, 400_000)
        c, s = rng.choice(clients), rng.choice(servers)
        eph = rng.randrange(32768, 61000)
        name = f"{rng.choice(_NAMES)}.{rng.choice(['org', 'net', 'com'])}"
        if kind == "dns":
            q = _dns_query(rng, name)
            if rng.random() < 0.5:
                flows.append(FlowRecord(c, s, eph, 53, "udp", q, ts))
            else:
                flows.append(FlowRecord(s, c, 53, eph, "udp", _dns_answer(q, rng), ts))
        elif kind == "http_resp":
            body = rng.randbytes(rng.randrange(0, 40))
            head = f"HTTP/1.1 {rng.choice([200, 200, 304, 404])} OK\r\nServer: {name}\r\n\r\n"
            flows.append(FlowRecord(s, c, 80, eph, "tcp", head.encode() + body, ts))
        elif kind == "tls":
            data = b"\x17\x03\x03" + rng.randrange(16, 200).to_bytes(2, "big") + rng.randbytes(24)
            if rng.random() < 0.5:
                flows.append(FlowRecord(c, s, eph, 443, "tcp", data, ts))
            else:
                flows.append(FlowRecord(s, c, 443, eph, "tcp", data, ts))
        elif kind == "ntp":
            flows.append(FlowRecord(c, s, 123, 123, "udp", b"\x23\x02\x06\xe8" + rng.randbytes(44), ts))
        elif kind == "ack":
            flows.append(FlowRecord(c, s, eph, rng.choice([80, 443, 22, 25]), "tcp", b"", ts))
        elif kind == "smtp_resp":
            line = f"{rng.choice([220, 250, 354])} {name} ESMTP ready\r\n".encode()
            flows.append(FlowRecord(s, c, 25, eph, "tcp", line, ts))
        elif kind == "ssh_data":
            flows.append(FlowRecord(c, s, eph, 22, "tcp", rng.randbytes(rng.randrange(32, 96)), ts))
        elif kind == "ssh":
            banner = f"SSH-2.0-OpenSSH_{rng.choice(['7.4', '8.2p1', '8.9p1'])}\r\n".encode()
            flows.append(FlowRecord(c, s, eph, 22, "tcp", banner, ts))
        elif kind == "http11":
            req = f"GET /{rng.choice(_NAMES)}/index.html HTTP/1.1\r\nHost: {name}\r\n\r\n".encode()
            flows.append(FlowRecord(c, s, eph, 80, "tcp", req, ts))
        else:
            req = f"GET /{rng.choice(_NAMES)} HTTP/2.0\r\nHost: {name}\r\n\r\n".encode()
            flows.append(FlowRecord(c, s, eph, 80, "tcp", req, ts))
    return flows


# -- overlay scenario ---------------------------------------------------------------

ORIGINAL_PER_RULE = 10
VARIANT_PER_RULE = 3


def overlay_dataset(benign, rng_seed: int = SEED):
    """Benign traffic plus flows generated from the baseline and ``_rnn1`` sets."""
    originals = parse_ruleset(baseline_ruleset_text())
    variants = parse_ruleset(generation_ruleset_text())
    pool = host_pool(size=64)
    hosts = benign_host_set(benign)
    first = synth_malicious_flows(originals, ORIGINAL_PER_RULE, pool, hosts, rng_seed)
    second = synth_malicious_flows(variants, VARIANT_PER_RULE, pool, hosts, rng_seed + 1)
    used = {r.id: r.payload_source for r in originals + variants}
    return overlay(benign, first.flows + second.flows, rng_seed, malicious_host_pool=pool,
                   generation_rules=used)


def build_all(directory) -> list:
    """Write every fixture into ``directory``; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    benign = benign_flows()
    pcap = write_pcap(benign)
    # the overlay is built from what the capture reads back as
    dataset = overlay_dataset(ingest_pcap(pcap).flows)
    files = {
        "base.sig": baseline_ruleset_text(),
        "synthetic_generation.sig": generation_ruleset_text(),
        "synthetic_detector.sig": detector_ruleset_text(),
        "codered.sig": CODERED_RULE,
        "codered_synthetic.sig": CODERED_SYNTHETIC,
        "codered_mutants.hex": "".join(m.hex() + "\n" for m in codered_mutants()),
        "benign.pcap": pcap,
        "overlay.jsonl": dumps_dataset(dataset),
    }
    written = []
    for name, content in files.items():
        path = directory / name
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content, encoding="utf-8")
        written.append(path)
    return written


def data_path(name: str) -> Path:
    """Filesystem path of a shipped fixture."""
    return Path(str(resources.files("rnnids.data").joinpath(name)))


def read_mutants(path) -> list:
    return [bytes.fromhex(line) for line in Path(path).read_text().split() if line]


if __name__ == "__main__":
    for p in build_all(sys.argv[1] if len(sys.argv) > 1 else data_path("")):
        print(p)
