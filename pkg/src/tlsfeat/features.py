"""Per-flow meta, statistical, SPLT and byte-distribution features."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import log2, sqrt

from . import kernels
from .capture import format_ip
from .flows import INBOUND, OUTBOUND, Flow

DEFAULT_SPLT_CAP = 100

DIRECTIONS = ("out", "in", "bidir")
STAT_GROUPS = ("pkt_len", "iat")
STAT_FUNCS = ("sum", "max", "min", "mean", "std")
STAT_NAMES = tuple(
    [f"{d}_pkt_count" for d in DIRECTIONS]
    + [f"{d}_{g}_{f}" for d in DIRECTIONS for g in STAT_GROUPS for f in STAT_FUNCS]
)


@dataclass
class MetaFeatures:
    stream_index: int
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    start_time_ns: int
    duration: float
    pcap_name: str

    @property
    def start_time(self) -> float:
        return self.start_time_ns / 1e9


@dataclass
class StatFeatures:
    """33 values: per direction a packet count plus five length and five IAT stats."""

    values: dict[str, float | int]

    def __getitem__(self, name):
        return self.values[name]


@dataclass
class SPLT:
    lengths: list[int] = field(default_factory=list)
    iats: list[float] = field(default_factory=list)
    truncated: bool = False

    def __len__(self):
        return len(self.lengths)

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.lengths, self.iats))


@dataclass
class ByteDist:
    counts: list[int]
    mean: float
    std: float
    entropy: float

    @property
    def total(self) -> int:
        return sum(self.counts)


def compute_meta(flow: Flow, pcap_name: str) -> MetaFeatures:
    return MetaFeatures(
        stream_index=flow.index,
        src_ip=format_ip(flow.initiator[0]),
        src_port=flow.initiator[1],
        dst_ip=format_ip(flow.responder[0]),
        dst_port=flow.responder[1],
        start_time_ns=flow.first_ts_ns,
        duration=(flow.last_ts_ns - flow.first_ts_ns) / 1e9,
        pcap_name=pcap_name,
    )


def _iats(ts: list[int]) -> list[float]:
    return [(b - a) / 1e9 for a, b in zip(ts, ts[1:])]


def compute_stats(flow: Flow) -> StatFeatures:
    describe = kernels.describe
    ts_all = flow.ts_ns
    lens_all = flow.wire_lens
    dirs = flow.dirs
    ts_dir = ([], [])
    lens_dir = ([], [])
    for t, n, d in zip(ts_all, lens_all, dirs):
        ts_dir[d].append(t)
        lens_dir[d].append(n)
    values: dict[str, float | int] = {}
    groups = (
        ("out", ts_dir[OUTBOUND], lens_dir[OUTBOUND]),
        ("in", ts_dir[INBOUND], lens_dir[INBOUND]),
        ("bidir", ts_all, lens_all),
    )
    for name, ts, lens in groups:
        values[f"{name}_pkt_count"] = len(ts)
    for name, ts, lens in groups:
        total, hi, lo, mean, std = describe(lens)
        values[f"{name}_pkt_len_sum"] = int(total)
        values[f"{name}_pkt_len_max"] = int(hi)
        values[f"{name}_pkt_len_min"] = int(lo)
        values[f"{name}_pkt_len_mean"] = mean
        values[f"{name}_pkt_len_std"] = std
        total, hi, lo, mean, std = describe(_iats(ts))
        values[f"{name}_iat_sum"] = total
        values[f"{name}_iat_max"] = hi
        values[f"{name}_iat_min"] = lo
        values[f"{name}_iat_mean"] = mean
        values[f"{name}_iat_std"] = std
    return StatFeatures({k: values[k] for k in STAT_NAMES})


def compute_splt(flow: Flow, cap: int = DEFAULT_SPLT_CAP) -> SPLT:
    out = SPLT()
    prev = None
    for t, n, d in zip(flow.ts_ns, flow.payload_lens, flow.dirs):
        if n <= 0:
            continue
        if len(out.lengths) >= cap:
            out.truncated = True
            break
        out.lengths.append(n if d == OUTBOUND else -n)
        out.iats.append(0.0 if prev is None else (t - prev) / 1e9)
        prev = t
    return out


def byte_dist_from_counts(counts) -> ByteDist:
    counts = [int(c) for c in counts]
    total = sum(counts)
    if total == 0:
        return ByteDist(counts, 0.0, 0.0, 0.0)
    s1 = 0
    s2 = 0
    entropy = 0.0
    for b, c in enumerate(counts):
        if c:
            s1 += b * c
            s2 += b * b * c
            p = c / total
            entropy -= p * log2(p)
    mean = s1 / total
    # exact integer numerator avoids cancellation in E[b^2] - E[b]^2
    var = (s2 * total - s1 * s1) / (total * total)
    std = sqrt(var)
    return ByteDist(counts, mean, std, max(0.0, min(8.0, entropy)))


def compute_byte_dist(flow: Flow) -> ByteDist:
    return byte_dist_from_counts(flow.byte_counts)
