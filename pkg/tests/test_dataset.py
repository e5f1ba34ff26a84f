import json
import random
import struct

import pytest
from hypothesis import given, settings, strategies as st

from rnnids.dataset import (
    BENIGN,
    MALICIOUS,
    FlowRecord,
    dumps_dataset,
    host_pool,
    ingest_pcap,
    loads_dataset,
    overlay,
    read_dataset,
    revalidate_payloads,
    synth_malicious_flows,
    write_dataset,
    write_pcap,
)
from rnnids.errors import DatasetFormatError, HostOverlapError, PcapFormatError
from rnnids.signatures import parse_ruleset

RULES = parse_ruleset("""
signature ssh_like {
  ip-proto == tcp
  dst-port == 22
  payload /^[sS][sS][hH]-[12]\\./
}
signature dns_like {
  ip-proto == udp
  dst-port == 53
  payload /\\x00\\x01[a-z]+/
}
""")


def global_header(magic_bytes=b"\xd4\xc3\xb2\xa1", linktype=1):
    return magic_bytes + struct.pack("<HHiIII", 2, 4, 0, 0, 65535, linktype)


def udp_hello_frame():
    # Ethernet: dst, src, type IPv4
    eth = bytes.fromhex("ffffffffffff" "001122334455" "0800")
    payload = b"hello"
    udp = bytes.fromhex("3039" "0035") + (8 + len(payload)).to_bytes(2, "big") + b"\x00\x00"
    total = 20 + len(udp) + len(payload)
    ip = (bytes.fromhex("45" "00") + total.to_bytes(2, "big") + bytes.fromhex("0001" "4000" "40" "11" "0000")
          + bytes([10, 0, 0, 1]) + bytes([10, 0, 0, 2]))
    return eth + ip + udp + payload


def record(frame, sec=1, usec=5):
    return struct.pack("<IIII", sec, usec, len(frame), len(frame)) + frame


# -- pcap ------------------------------------------------------------------------

def test_one_udp_packet():
    res = ingest_pcap(global_header() + record(udp_hello_frame()))
    (flow,) = res.flows
    assert flow == FlowRecord("10.0.0.1", "10.0.0.2", 12345, 53, "udp", b"hello", 1_000_005)
    assert res.skipped == 0 and res.truncated == 0


def test_big_endian_capture():
    header = b"\xa1\xb2\xc3\xd4" + struct.pack(">HHiIII", 2, 4, 0, 0, 65535, 1)
    frame = udp_hello_frame()
    res = ingest_pcap(header + struct.pack(">IIII", 1, 5, len(frame), len(frame)) + frame)
    assert res.flows[0].payload == b"hello"


def test_header_only():
    res = ingest_pcap(global_header())
    assert res.flows == [] and res.skipped == 0


def test_arp_skipped():
    arp = bytes.fromhex("ffffffffffff" "001122334455" "0806") + bytes(28)
    res = ingest_pcap(global_header() + record(arp))
    assert res.flows == [] and res.skipped == 1


def test_fragment_skipped():
    frame = bytearray(udp_hello_frame())
    frame[14 + 6:14 + 8] = b"\x20\x00"  # more-fragments flag
    assert ingest_pcap(global_header() + record(bytes(frame))).skipped == 1


def test_truncated_record_keeps_partial():
    good = record(udp_hello_frame())
    res = ingest_pcap(global_header() + good + good[:-3])
    assert len(res.flows) == 1 and res.truncated == 1


@pytest.mark.parametrize("data", [b"\xd4\xc3\xb2", b"\x4d\x3c\xb2\xa1" + bytes(20), b"\x00" * 24])
def test_bad_headers(data):
    with pytest.raises(PcapFormatError):
        ingest_pcap(data)


def test_pcap_writer_roundtrip():
    flows = [
        FlowRecord("10.0.0.1", "10.0.0.2", 1000, 80, "tcp", b"GET / HTTP/1.0\r\n", 7),
        FlowRecord("10.0.0.3", "10.0.0.2", 5353, 53, "udp", b"\x00\xff/", 9_000_001),
        FlowRecord("10.0.0.1", "10.0.0.2", 1000, 80, "tcp", b"", 9_000_002),
    ]
    assert ingest_pcap(write_pcap(flows)).flows == flows


# -- synthesis -------------------------------------------------------------------

def test_synth_counts_and_validity():
    syn = synth_malicious_flows(RULES[:1], 3, host_pool(size=4), rng_seed=1)
    assert len(syn.flows) == 3
    assert all(RULES[0].matches(f) for f in syn.flows)
    assert all(f.proto == "tcp" and f.dst_port == 22 and f.origin == "ssh_like" for f in syn.flows)


def test_concurrent_infections():
    syn = synth_malicious_flows(RULES, 5, ["192.0.2.7"], rng_seed=2)
    assert {f.src_host for f in syn.flows} == {"192.0.2.7"}
    assert len(syn.flows) == 10


def test_synth_overlap_rejected():
    with pytest.raises(HostOverlapError) as info:
        synth_malicious_flows(RULES, 1, ["10.0.0.1"], benign_hosts={"10.0.0.1"})
    assert info.value.addresses == ["10.0.0.1"]


def test_unsatisfiable_rules_skipped():
    rules = parse_ruleset("""
signature impossible {
  payload /^a{300}$/
}
signature no_proto {
  ip-proto == icmp
  payload /x/
}
""")
    syn = synth_malicious_flows(rules + RULES[:1], 2, host_pool(size=2))
    assert set(syn.skipped) == {"impossible", "no_proto"}
    assert len(syn.flows) == 2


def test_synth_deterministic():
    a = synth_malicious_flows(RULES, 4, host_pool(size=8), rng_seed=3)
    b = synth_malicious_flows(RULES, 4, host_pool(size=8), rng_seed=3)
    assert a.flows == b.flows


# -- overlay -----------------------------------------------------------------------

def benign_flows(n, seed=0):
    rng = random.Random(seed)
    return [FlowRecord(f"10.0.{rng.randrange(4)}.{rng.randrange(1, 9)}", "10.1.0.1",
                       rng.randrange(1024, 65536), 80, "tcp", bytes(rng.randrange(256) for _ in range(4)),
                       rng.randrange(10**6, 2 * 10**6)) for _ in range(n)]


def test_overlay_single_malicious():
    mal = synth_malicious_flows(RULES[:1], 1, ["192.0.2.1"]).flows
    ds = overlay([], mal)
    assert len(ds.flows) == 1 and ds.manifest["counts"] == {BENIGN: 0, MALICIOUS: 1}


def test_overlay_overlap():
    benign = [FlowRecord("10.0.0.1", "10.0.0.2", 1, 2, "tcp")]
    mal = [FlowRecord("10.0.0.1", "10.0.0.2", 1, 2, "tcp", b"x", 0, MALICIOUS, "r")]
    with pytest.raises(HostOverlapError) as info:
        overlay(benign, mal, malicious_host_pool={"10.0.0.1"})
    assert "10.0.0.1" in info.value.addresses


def test_overlay_ordering():
    benign = benign_flows(100)
    mal = synth_malicious_flows(RULES, 5, host_pool(size=3), rng_seed=1).flows
    ds = overlay(benign, mal, rng_seed=5)
    assert len(ds.flows) == 110
    ts = [f.timestamp for f in ds.flows]
    assert ts == sorted(ts)
    lo, hi = min(f.timestamp for f in benign), max(f.timestamp for f in benign)
    assert all(lo <= f.timestamp <= hi for f in ds.flows)
    ds.check()


def test_revalidation_flags_tampering():
    mal = synth_malicious_flows(RULES, 2, host_pool(size=2)).flows
    ds = overlay(benign_flows(10), mal)
    assert revalidate_payloads(ds, RULES) == []
    assert revalidate_payloads(ds, RULES[:1]) != []


# -- persistence ---------------------------------------------------------------------

def test_roundtrip(tmp_path):
    mal = synth_malicious_flows(RULES, 3, host_pool(size=3), rng_seed=2).flows
    ds = overlay(benign_flows(20), mal, rng_seed=1, generation_rules={"ssh_like": "x"})
    path = tmp_path / "d.jsonl"
    write_dataset(ds, path)
    assert read_dataset(path) == ds
    write_dataset(read_dataset(path), tmp_path / "e.jsonl")
    assert (tmp_path / "e.jsonl").read_bytes() == path.read_bytes()


def test_empty_dataset_roundtrip():
    ds = overlay([], [])
    text = dumps_dataset(ds)
    assert len(text.splitlines()) == 1
    assert loads_dataset(text) == ds


@settings(max_examples=100)
@given(st.binary(max_size=64))
def test_payload_binary_safe(payload):
    flow = FlowRecord("10.0.0.1", "10.0.0.2", 1, 2, "udp", payload)
    ds = overlay([flow], [])
    assert loads_dataset(dumps_dataset(ds)).flows[0].payload == payload


def test_binary_payload_example():
    flow = FlowRecord("10.0.0.1", "10.0.0.2", 1, 2, "udp", b"\x00\xff\x2f")
    assert loads_dataset(dumps_dataset(overlay([flow], []))).flows[0].payload == b"\x00\xff\x2f"


def test_format_errors():
    good = dumps_dataset(overlay(benign_flows(2), []))
    header, *rest = good.splitlines()
    bad_version = json.loads(header)
    bad_version["version"] = 99
    with pytest.raises(DatasetFormatError) as info:
        loads_dataset(json.dumps(bad_version) + "\n")
    assert info.value.line == 1
    with pytest.raises(DatasetFormatError) as info:
        loads_dataset(header + "\n" + rest[0] + "\n{not json\n")
    assert info.value.line == 3
    with pytest.raises(DatasetFormatError):
        loads_dataset("")
