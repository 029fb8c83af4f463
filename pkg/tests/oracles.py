"""Brute-force reference computations used by the feature tests."""
import math
import re
from datetime import datetime, timezone
from fractions import Fraction

from tlsfeat.capture import ACK, PSH, Packet
from tlsfeat.flows import FlowTable

CLIENT = (bytes([10, 0, 0, 1]), 40000)
SERVER = (bytes([10, 0, 0, 2]), 443)


def random_events(rng, n=None):
    """Event list of ``(ts_ns, direction, payload, wire_len)`` in capture order."""
    n = rng.randrange(1, 80) if n is None else n
    t = rng.randrange(0, 2**40)
    events = []
    for _ in range(n):
        t += rng.choice((0, rng.randrange(1, 10**3), rng.randrange(1, 10**9)))
        d = rng.randrange(2)
        size = rng.choice((0, 0, rng.randrange(1, 40), rng.randrange(1, 1400)))
        payload = rng.randbytes(size) if rng.random() < 0.7 else bytes([rng.randrange(256)]) * size
        events.append((t, d, payload, 54 + size + rng.choice((0, 0, 12))))
    return events


def flow_from_events(events):
    """Feed events through a FlowTable; the first event's sender is the initiator."""
    table = FlowTable()
    seq = [1000, 9000]
    first_dir = events[0][1]
    ends = (CLIENT, SERVER) if first_dir == 0 else (SERVER, CLIENT)
    for ts, d, payload, wire in events:
        src, dst = (ends[0], ends[1]) if d == first_dir else (ends[1], ends[0])
        p = Packet(ts // 10**9, ts % 10**9, src[0], dst[0], src[1], dst[1],
                   seq[d], ACK | PSH, payload, wire, 0)
        seq[d] += len(payload)
        table.add(p)
    (flow,) = table.drain()
    return flow


def describe(values):
    """(sum, max, min, mean, std) with exact rational arithmetic."""
    if not values:
        return (0, 0, 0, 0, 0)
    vals = [Fraction(v) for v in values]
    n = len(vals)
    mean = sum(vals) / n
    var = sum((v - mean) ** 2 for v in vals) / n
    return (sum(vals), max(vals), min(vals), mean, math.sqrt(var))


def stats(events, first_dir):
    """Expected 33 values keyed like tlsfeat.features.STAT_NAMES."""
    out = {}
    groups = {
        "out": [e for e in events if e[1] == first_dir],
        "in": [e for e in events if e[1] != first_dir],
        "bidir": list(events),
    }
    for name, evs in groups.items():
        out[f"{name}_pkt_count"] = len(evs)
        lens = [e[3] for e in evs]
        iats = [Fraction(b[0] - a[0], 10**9) for a, b in zip(evs, evs[1:])]
        for group, vals in (("pkt_len", lens), ("iat", iats)):
            for key, v in zip(("sum", "max", "min", "mean", "std"), describe(vals)):
                out[f"{name}_{group}_{key}"] = v
    return out


def splt(events, first_dir, cap):
    lengths, iats = [], []
    prev = None
    truncated = False
    for ts, d, payload, _ in events:
        if not payload:
            continue
        if len(lengths) == cap:
            truncated = True
            break
        lengths.append(len(payload) if d == first_dir else -len(payload))
        iats.append(0 if prev is None else Fraction(ts - prev, 10**9))
        prev = ts
    return lengths, iats, truncated


def byte_dist(events):
    counts = [0] * 256
    for _, _, payload, _ in events:
        for b in payload:
            counts[b] += 1
    total = sum(counts)
    if total == 0:
        return counts, 0.0, 0.0, 0.0
    mean = Fraction(sum(b * c for b, c in enumerate(counts)), total)
    var = Fraction(sum(b * b * c for b, c in enumerate(counts)), total) - mean ** 2
    ent = -sum(c / total * math.log2(c / total) for c in counts if c)
    return counts, float(mean), math.sqrt(var), ent


KEY_TYPES = {"rsaEncryption": "rsa", "id-ecPublicKey": "ec", "dsaEncryption": "dsa",
             "ED25519": "other:1.3.101.112"}


def _split_rfc2253(text):
    parts = re.split(r"(?<!\\),", text)
    out = []
    for p in reversed(parts):  # RFC 2253 lists the most specific RDN first
        oid, value = p.split("=", 1)
        out.append((oid, value.replace("\\,", ",")))
    return out


def _dump_time(text):
    return datetime.strptime(text.strip(), "%b %d %H:%M:%S %Y GMT").replace(tzinfo=timezone.utc)


def parse_dump(text):
    """Fields of an ``openssl x509 -text -nameopt RFC2253,oid`` dump."""
    d = {}
    d["version"] = int(re.search(r"Version: (\d+)", text).group(1))
    m = re.search(r"Serial Number: (\d+) \(0x", text)
    if m:
        d["serial"] = int(m.group(1))
    else:
        m = re.search(r"Serial Number:\s*\n\s+([0-9a-f:]+)", text)
        d["serial"] = int(m.group(1).replace(":", ""), 16)
    d["signature"] = re.search(r"Signature Algorithm: (\S+)", text).group(1)
    d["issuer"] = _split_rfc2253(re.search(r"Issuer: (.*)", text).group(1))
    d["subject"] = _split_rfc2253(re.search(r"Subject: (.*)", text).group(1))
    d["not_before"] = _dump_time(re.search(r"Not Before: (.*)", text).group(1))
    d["not_after"] = _dump_time(re.search(r"Not After : (.*)", text).group(1))
    d["key_type"] = KEY_TYPES[re.search(r"Public Key Algorithm: (\S+)", text).group(1)]
    m = re.search(r"Public-Key: \((\d+) bit\)", text)
    d["bits"] = int(m.group(1)) if m else None
    ext = text.split("X509v3 extensions:\n", 1)
    d["extensions"] = 0 if len(ext) == 1 else len(
        re.findall(r"^ {12}\S.*:( critical)? *$", ext[1], re.M))
    return d
