"""Labelled benign/malicious flow datasets built by overlay.

Benign flows come from a classic libpcap capture (one packet is one flow
observation). Malicious flows are synthesised from signatures by inverse
regex generation and attributed to hosts that never appear in the benign
capture, then merged into the benign timeline.
"""

from __future__ import annotations

import base64
import io
import ipaddress
import json
import logging
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DatasetFormatError, GenerationImpossible, HostOverlapError, PcapFormatError
from .signatures.generate import DEFAULT_MAX_LEN, generate_matching
from .signatures.rules import PROTO_NAMES, SignatureRule

log = logging.getLogger(__name__)

BENIGN = "benign"
MALICIOUS = "malicious"
DATASET_FORMAT = "rnnids-dataset"
DATASET_VERSION = 1
DEFAULT_MALICIOUS_POOL = "192.0.2.0/24"

PCAP_MAGIC_USEC = 0xA1B2C3D4
PCAP_MAGIC_NSEC = 0xA1B23C4D
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = (101, 228)
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = (0x8100, 0x88A8)


@dataclass(frozen=True)
class FlowRecord:
    src_host: str
    dst_host: str
    src_port: int
    dst_port: int
    proto: str  # "tcp" | "udp"
    payload: bytes = b""
    timestamp: int = 0  # microseconds since the epoch
    label: str = BENIGN
    origin: str = BENIGN  # rule id for malicious flows

    def __post_init__(self):
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port {port} out of range")
        if self.proto not in ("tcp", "udp"):
            raise ValueError(f"unsupported protocol {self.proto!r}")
        if self.label not in (BENIGN, MALICIOUS):
            raise ValueError(f"unknown label {self.label!r}")
        if (self.label == BENIGN) != (self.origin == BENIGN):
            raise ValueError("label and origin disagree")

    def to_json(self) -> dict:
        return {
            "src": self.src_host, "dst": self.dst_host,
            "sport": self.src_port, "dport": self.dst_port,
            "proto": self.proto, "ts": self.timestamp,
            "label": self.label, "origin": self.origin,
            "payload": base64.b64encode(self.payload).decode("ascii"),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FlowRecord":
        return cls(
            src_host=obj["src"], dst_host=obj["dst"],
            src_port=int(obj["sport"]), dst_port=int(obj["dport"]),
            proto=obj["proto"], timestamp=int(obj["ts"]),
            label=obj["label"], origin=obj["origin"],
            payload=base64.b64decode(obj["payload"], validate=True),
        )


# pcap ingestion --------------------------------------------------------------

@dataclass
class PcapIngest:
    flows: list = field(default_factory=list)
    skipped: int = 0  # non-IPv4, fragments, other transports
    truncated: int = 0  # 1 when the capture ends mid-record


def ingest_pcap(data: bytes) -> PcapIngest:
    """Parse a classic libpcap capture into benign flow records."""
    if len(data) < 24:
        raise PcapFormatError("capture is shorter than the 24-octet global header")
    (magic,) = struct.unpack("<I", data[:4])
    if magic in (PCAP_MAGIC_USEC, PCAP_MAGIC_NSEC):
        endian = "<"
    else:
        (magic,) = struct.unpack(">I", data[:4])
        endian = ">"
    if magic == PCAP_MAGIC_NSEC:
        raise PcapFormatError("nanosecond-resolution pcap is not supported")
    if magic != PCAP_MAGIC_USEC:
        raise PcapFormatError(f"not a libpcap capture (magic {data[:4].hex()})")
    _, _, _, _, _, linktype = struct.unpack(endian + "HHiIII", data[4:24])
    if linktype != LINKTYPE_ETHERNET and linktype not in LINKTYPE_RAW:
        raise PcapFormatError(f"unsupported link type {linktype}")

    result = PcapIngest()
    record = struct.Struct(endian + "IIII")
    pos = 24
    while pos < len(data):
        if pos + record.size > len(data):
            result.truncated += 1
            break
        ts_sec, ts_usec, incl_len, _ = record.unpack_from(data, pos)
        pos += record.size
        if pos + incl_len > len(data):
            result.truncated += 1
            break
        frame = data[pos:pos + incl_len]
        pos += incl_len
        flow = _decode_frame(frame, linktype, ts_sec * 1_000_000 + ts_usec)
        if flow is None:
            result.skipped += 1
        else:
            result.flows.append(flow)
    if result.truncated:
        log.warning("capture truncated after %d packets", len(result.flows) + result.skipped)
    return result


def _decode_frame(frame: bytes, linktype: int, timestamp: int):
    if linktype == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            return None
        offset = 12
        (ethertype,) = struct.unpack_from("!H", frame, offset)
        while ethertype in ETHERTYPE_VLAN and len(frame) >= offset + 6:
            offset += 4
            (ethertype,) = struct.unpack_from("!H", frame, offset)
        if ethertype != ETHERTYPE_IPV4:
            return None
        ip = frame[offset + 2:]
    else:
        ip = frame
    if len(ip) < 20 or ip[0] >> 4 != 4:
        return None
    ihl = (ip[0] & 0x0F) * 4
    total_len, frag = struct.unpack_from("!HxxH", ip, 2)
    if ihl < 20 or len(ip) < ihl:
        return None
    if frag & 0x2000 or frag & 0x1FFF:
        return None
    proto = PROTO_NAMES.get(ip[9])
    if proto not in ("tcp", "udp"):
        return None
    src = str(ipaddress.IPv4Address(ip[12:16]))
    dst = str(ipaddress.IPv4Address(ip[16:20]))
    segment = ip[ihl:min(len(ip), total_len)] if total_len >= ihl else ip[ihl:]
    if proto == "tcp":
        if len(segment) < 20:
            return None
        header_len = (segment[12] >> 4) * 4
        if header_len < 20 or len(segment) < header_len:
            return None
    else:
        header_len = 8
        if len(segment) < 8:
            return None
    sport, dport = struct.unpack_from("!HH", segment, 0)
    return FlowRecord(src, dst, sport, dport, proto, bytes(segment[header_len:]), timestamp)


def write_pcap(flows, linktype: int = LINKTYPE_ETHERNET) -> bytes:
    """Serialise flows as Ethernet/IPv4 packets (used to build fixture captures)."""
    out = io.BytesIO()
    out.write(struct.pack("<IHHiIII", PCAP_MAGIC_USEC, 2, 4, 0, 0, 65535, linktype))
    for ident, flow in enumerate(flows):
        if flow.proto == "tcp":
            transport = struct.pack("!HHIIBBHHH", flow.src_port, flow.dst_port, ident, 0,
                                    5 << 4, 0x18, 65535, 0, 0)
            proto_num = 6
        else:
            transport = struct.pack("!HHHH", flow.src_port, flow.dst_port,
                                    8 + len(flow.payload), 0)
            proto_num = 17
        segment = transport + flow.payload
        ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(segment), ident & 0xFFFF, 0x4000,
                         64, proto_num, 0, ipaddress.IPv4Address(flow.src_host).packed,
                         ipaddress.IPv4Address(flow.dst_host).packed)
        frame = b"\x02\x00\x00\x00\x00\x02" + b"\x02\x00\x00\x00\x00\x01" + b"\x08\x00" + ip + segment
        sec, usec = divmod(flow.timestamp, 1_000_000)
        out.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
        out.write(frame)
    return out.getvalue()


# malicious synthesis ---------------------------------------------------------

_EPHEMERAL = range(1024, 65536)
_ALL_PORTS = range(1, 65536)


def _port_choices(rule: SignatureRule, field_name: str, default):
    conds = rule.conditions_for(field_name)
    listed = [int(v) for c in conds if c.op == "==" for v in c.values]
    candidates = sorted(set(listed)) if listed else default
    if not conds:
        return candidates
    return [p for p in candidates if all(c.holds(p) for c in conds)]


def _proto_choices(rule: SignatureRule):
    conds = rule.conditions_for("ip-proto")
    return [p for p in ("tcp", "udp") if all(c.holds(p) for c in conds)]


def _dst_choices(rule: SignatureRule, benign_hosts, rng):
    conds = rule.conditions_for("dst-host")
    if not conds:
        return sorted(benign_hosts) or ["10.0.0.1"]
    nets = [ipaddress.ip_network(v, strict=False) for c in conds if c.op == "==" for v in c.values]
    found = []
    for net in nets or [ipaddress.ip_network("10.0.0.0/8")]:
        for _ in range(16):
            addr = str(net.network_address + rng.randrange(net.num_addresses))
            if all(c.holds(addr) for c in conds):
                found.append(addr)
    return sorted(set(found))


@dataclass
class Synthesis:
    flows: list
    skipped: dict  # rule id -> reason


def synth_malicious_flows(rules, per_rule: int, pool, benign_hosts=(), rng_seed: int = 0,
                          max_len: int = DEFAULT_MAX_LEN) -> Synthesis:
    """Generate ``per_rule`` malicious flows for every rule.

    Payloads are drawn from each rule's payload language; protocol, ports
    and destination are chosen to satisfy the rule's header conditions;
    sources are drawn uniformly (with reuse) from ``pool``. Rules whose
    conditions or payload cannot be satisfied are skipped and reported.
    """
    pool = sorted(set(pool))
    overlap = set(pool) & set(benign_hosts)
    if overlap:
        raise HostOverlapError(overlap)
    if not pool:
        raise ValueError("malicious host pool is empty")
    rng = random.Random(rng_seed)
    flows, skipped = [], {}
    for rule in rules:
        protos = _proto_choices(rule)
        sports = _port_choices(rule, "src-port", _EPHEMERAL)
        dports = _port_choices(rule, "dst-port", _ALL_PORTS)
        src_conds = rule.conditions_for("src-host")
        sources = [h for h in pool if all(c.holds(h) for c in src_conds)]
        dsts = _dst_choices(rule, benign_hosts, rng)
        missing = [name for name, opts in (("ip-proto", protos), ("src-port", sports),
                                           ("dst-port", dports), ("src-host", sources),
                                           ("dst-host", dsts)) if not opts]
        if missing:
            skipped[rule.id] = "unsatisfiable header condition: " + ", ".join(missing)
            continue
        generated = []
        try:
            for _ in range(per_rule):
                payload = b""
                if rule.payload_regex is not None:
                    payload = generate_matching(rule.payload_regex, rng.getrandbits(63), max_len,
                                                dfa=rule.dfa)
                generated.append(FlowRecord(
                    src_host=rng.choice(sources), dst_host=rng.choice(dsts),
                    src_port=rng.choice(sports), dst_port=rng.choice(dports),
                    proto=rng.choice(protos), payload=payload,
                    label=MALICIOUS, origin=rule.id,
                ))
        except GenerationImpossible as exc:
            skipped[rule.id] = f"payload: {exc}"
            continue
        flows.extend(generated)
    return Synthesis(flows, skipped)


def host_pool(cidr: str = DEFAULT_MALICIOUS_POOL, size: int = None) -> list:
    hosts = [str(h) for h in ipaddress.ip_network(cidr).hosts()]
    return hosts if size is None else hosts[:size]


# overlay ------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledDataset:
    flows: tuple
    benign_hosts: frozenset
    malicious_host_pool: frozenset
    manifest: dict

    @property
    def benign_count(self):
        return sum(f.label == BENIGN for f in self.flows)

    @property
    def malicious_count(self):
        return sum(f.label == MALICIOUS for f in self.flows)

    @property
    def generation_rules(self) -> dict:
        return dict(self.manifest.get("generation_rules", {}))

    def check(self):
        """Raise if any dataset invariant is violated."""
        overlap = self.benign_hosts & self.malicious_host_pool
        if overlap:
            raise HostOverlapError(overlap)
        for f in self.flows:
            if f.label == MALICIOUS and f.src_host not in self.malicious_host_pool:
                raise HostOverlapError([f.src_host])
        counts = self.manifest.get("counts", {})
        if counts.get(BENIGN) != self.benign_count or counts.get(MALICIOUS) != self.malicious_count:
            raise DatasetFormatError("manifest counts do not match the flows")


def revalidate_payloads(dataset, rules) -> list:
    """Indices of malicious flows whose payload no longer matches their origin rule.

    A flow whose origin is not among ``rules`` counts as a failure.
    """
    by_id = {r.id: r for r in rules}
    flows = dataset.flows if isinstance(dataset, LabeledDataset) else tuple(dataset)
    bad = []
    for index, flow in enumerate(flows):
        if flow.label != MALICIOUS:
            continue
        rule = by_id.get(flow.origin)
        if rule is None or not rule.payload_matches(flow.payload):
            bad.append(index)
    return bad


def benign_host_set(flows) -> frozenset:
    return frozenset(h for f in flows for h in (f.src_host, f.dst_host))


def overlay(benign, malicious, rng_seed: int = 0, malicious_host_pool=None,
            generation_rules=None) -> LabeledDataset:
    """Merge malicious flows into the benign timeline.

    Malicious timestamps are drawn uniformly over the benign capture's time
    span, then all flows are ordered by timestamp (stable, benign first on
    ties). ``generation_rules`` (rule id -> pattern) is recorded in the
    manifest so later experiments can check for leakage.
    """
    benign = [f for f in benign]
    malicious = [f for f in malicious]
    if any(f.label != BENIGN for f in benign) or any(f.label != MALICIOUS for f in malicious):
        raise ValueError("benign/malicious inputs carry the wrong labels")
    hosts = benign_host_set(benign)
    pool = frozenset(malicious_host_pool if malicious_host_pool is not None
                     else (f.src_host for f in malicious))
    overlap = (hosts & pool) | {f.src_host for f in malicious if f.src_host in hosts}
    if overlap:
        raise HostOverlapError(overlap)
    stray = {f.src_host for f in malicious} - pool
    if stray:
        raise ValueError(f"malicious sources outside the pool: {sorted(stray)}")
    rng = random.Random(rng_seed)
    if benign:
        lo = min(f.timestamp for f in benign)
        hi = max(f.timestamp for f in benign)
        placed = [_with_timestamp(f, rng.randint(lo, hi)) for f in malicious]
    else:
        placed = malicious
    flows = sorted(benign + placed, key=lambda f: f.timestamp)
    manifest = {
        "counts": {BENIGN: len(benign), MALICIOUS: len(placed)},
        "seed": rng_seed,
        "generation_rules": dict(sorted((generation_rules or {}).items())),
    }
    return LabeledDataset(tuple(flows), hosts, pool, manifest)


def _with_timestamp(flow: FlowRecord, ts: int) -> FlowRecord:
    return FlowRecord(flow.src_host, flow.dst_host, flow.src_port, flow.dst_port, flow.proto,
                      flow.payload, ts, flow.label, flow.origin)


# persistence ---------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dumps_dataset(dataset: LabeledDataset) -> str:
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "benign_hosts": sorted(dataset.benign_hosts),
        "malicious_host_pool": sorted(dataset.malicious_host_pool),
        "manifest": dataset.manifest,
    }
    lines = [_dump(header)] + [_dump(f.to_json()) for f in dataset.flows]
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> LabeledDataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad manifest line: {exc}", 1) from None
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise DatasetFormatError("first line is not an rnnids dataset manifest", 1)
    if header.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {header.get('version')}", 1)
    flows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            flows.append(FlowRecord.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"malformed flow record: {exc}", lineno) from None
    try:
        dataset = LabeledDataset(tuple(flows), frozenset(header["benign_hosts"]),
                                 frozenset(header["malicious_host_pool"]), header["manifest"])
    except KeyError as exc:
        raise DatasetFormatError(f"manifest lacks {exc}", 1) from None
    dataset.check()
    return dataset


def write_dataset(dataset: LabeledDataset, path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8")


def read_dataset(path) -> LabeledDataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))
