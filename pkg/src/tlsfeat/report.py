"""Per-capture pipeline, JSON serialization, summaries and benchmarking."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import kernels
from .capture import CaptureError, DecodeCounts, iter_packets, open_capture
from .features import (DEFAULT_SPLT_CAP, SPLT, ByteDist, MetaFeatures, StatFeatures,
                       compute_byte_dist, compute_meta, compute_splt, compute_stats)
from .flows import DEFAULT_REORDER_CAP, Flow, FlowTable
from .tls import TlsSession
from .tls_names import HANDSHAKE_NAMES, cipher_suite_name, version_name
from .x509 import CertificateInfo, parse_certificate

log = logging.getLogger(__name__)

PCAP_SUFFIXES = (".pcap", ".cap", ".dmp")

# how often (in packets) closed flows are checked for finalization
_SWEEP_EVERY = 8192


@dataclass
class Options:
    splt_cap: int = DEFAULT_SPLT_CAP
    reorder_cap: int = DEFAULT_REORDER_CAP
    # capture seconds a closed flow waits for stray packets before it is finalized
    linger: float = 60.0
    cert_cache: int = 4096


@dataclass
class StreamFeatureReport:
    meta: MetaFeatures
    stats: StatFeatures
    splt: SPLT
    byte_dist: ByteDist
    session: TlsSession
    certificates: list[CertificateInfo]

    @property
    def flags(self) -> list[str]:
        return self.session.flags

    def to_dict(self) -> dict:
        return {
            "meta": _meta_dict(self.meta),
            "stats": {k: _sec(v) if "_iat_" in k else _num(v)
                      for k, v in self.stats.values.items()},
            "splt": {
                "lengths": list(self.splt.lengths),
                "iats": [_sec(x) for x in self.splt.iats],
                "truncated": self.splt.truncated,
            },
            "byte_dist": {
                "counts": list(self.byte_dist.counts),
                "mean": self.byte_dist.mean,
                "std": self.byte_dist.std,
                "entropy": self.byte_dist.entropy,
            },
            "tls": _tls_dict(self.session),
            "certificates": [c.to_dict() for c in self.certificates],
        }


@dataclass
class PcapSummary:
    pcap_name: str
    file_bytes: int = 0
    analysis_time: float = 0.0
    tcp_flow_count: int = 0
    tls_stream_count: int = 0
    certificates_seen: int = 0
    certificates_parsed: int = 0
    unique_certificates: int = 0
    records: int = 0
    tcp_packets: int = 0
    not_tcp_packets: int = 0
    malformed_packets: int = 0
    truncations: int = 0
    desyncs: int = 0
    gapped_streams: int = 0
    reorder_overflows: int = 0
    capture_error: str | None = None
    kernel_backend: str = kernels.BACKEND
    digests: set = field(default_factory=set, repr=False)

    def to_dict(self) -> dict:
        d = {
            "pcap_name": self.pcap_name,
            "file_bytes": self.file_bytes,
            "analysis_time": _sec(self.analysis_time),
            "tcp_flow_count": self.tcp_flow_count,
            "tls_stream_count": self.tls_stream_count,
            "certificates_seen": self.certificates_seen,
            "certificates_parsed": self.certificates_parsed,
            "unique_certificates": self.unique_certificates,
            "errors": {
                "malformed_packets": self.malformed_packets,
                "truncations": self.truncations,
                "desyncs": self.desyncs,
                "gapped_streams": self.gapped_streams,
                "reorder_overflows": self.reorder_overflows,
            },
            "packets": {
                "records": self.records,
                "tcp": self.tcp_packets,
                "not_tcp": self.not_tcp_packets,
            },
            "kernel_backend": self.kernel_backend,
        }
        if self.capture_error:
            d["errors"]["capture_error"] = self.capture_error
        return d


def _sec(x: float) -> float:
    return round(x, 9)


def _num(v):
    return v if isinstance(v, int) else float(v)


def _meta_dict(m: MetaFeatures) -> dict:
    return {
        "stream_index": m.stream_index,
        "src_ip": m.src_ip,
        "src_port": m.src_port,
        "dst_ip": m.dst_ip,
        "dst_port": m.dst_port,
        "start_time": _sec(m.start_time),
        "start_time_ns": m.start_time_ns,
        "duration": _sec(m.duration),
        "pcap_name": m.pcap_name,
    }


def _suite_label(code: int) -> str:
    return cipher_suite_name(code) or f"0x{code:04X}"


def _tls_dict(s: TlsSession) -> dict:
    out: dict = {}
    ch = s.client_hello
    if ch is not None:
        d = {}
        if ch.version is not None:
            d["version"] = ch.version
            name = version_name(ch.version)
            if name:
                d["version_name"] = name
        d["cipher_suites"] = ch.cipher_suites
        d["cipher_suite_names"] = [_suite_label(c) for c in ch.cipher_suites]
        d["compression_methods"] = ch.compression_methods
        d["extensions"] = [t for t, _ in ch.extensions]
        d["extension_lengths"] = [len(b) for _, b in ch.extensions]
        if ch.sni is not None:
            d["sni"] = ch.sni
        d["session_id_length"] = len(ch.session_id)
        d["supported_versions"] = ch.supported_versions
        d["supported_groups"] = ch.supported_groups
        d["ec_point_formats"] = ch.ec_point_formats
        d["alpn"] = ch.alpn
        if ch.error:
            d["error"] = ch.error
        out["client_hello"] = d
    sh = s.server_hello
    if sh is not None:
        d = {}
        if sh.version is not None:
            d["version"] = sh.version
        if sh.cipher_suite is not None:
            d["cipher_suite"] = sh.cipher_suite
            d["cipher_suite_name"] = _suite_label(sh.cipher_suite)
        if sh.compression_method is not None:
            d["compression_method"] = sh.compression_method
        d["extensions"] = [t for t, _ in sh.extensions]
        if sh.supported_version is not None:
            d["supported_version"] = sh.supported_version
        if sh.alpn is not None:
            d["alpn"] = sh.alpn
        if sh.error:
            d["error"] = sh.error
        out["server_hello"] = d
    v = s.negotiated_version
    if v is not None:
        out["negotiated_version"] = v
        name = version_name(v)
        if name:
            out["negotiated_version_name"] = name
    out["handshake_types"] = {
        str(t): n for t, n in sorted(s.handshake_counts.items())}
    out["handshake_type_names"] = {
        str(t): HANDSHAKE_NAMES[t] for t in sorted(s.handshake_counts) if t in HANDSHAKE_NAMES}
    out["record_counts"] = {
        "out": s.records[0].complete_records,
        "in": s.records[1].complete_records,
    }
    out["encrypted_handshake_records"] = (s.handshakes[0].encrypted_records
                                          + s.handshakes[1].encrypted_records)
    out["certificate_count"] = len(s.certificates)
    out["flags"] = s.flags
    return out


def emit_stream_json(report: StreamFeatureReport, pretty: bool = False) -> str:
    """Serialize one report as a single JSON line (or indented with ``pretty``)."""
    if pretty:
        return json.dumps(report.to_dict(), indent=2, ensure_ascii=False)
    return json.dumps(report.to_dict(), separators=(",", ":"), ensure_ascii=False)


class CaptureAnalysis:
    """Runs one pcap through flows, dissection and features.

    Iterating yields :class:`StreamFeatureReport` objects for TLS streams in
    stream-index order; ``summary`` is complete once iteration ends.
    """

    def __init__(self, path, options: Options | None = None, name: str | None = None):
        self.path = Path(path)
        self.options = options or Options()
        self.name = name or self.path.name
        self.summary = PcapSummary(self.name)
        self._certs: OrderedDict[bytes, CertificateInfo] = OrderedDict()

    def __iter__(self):
        opts = self.options
        summary = self.summary
        start = time.perf_counter()
        summary.file_bytes = self.path.stat().st_size
        counts = DecodeCounts()
        table = FlowTable(opts.reorder_cap)
        ready: dict[int, StreamFeatureReport | None] = {}
        next_out = 0
        linger_ns = int(opts.linger * 1e9)
        with open_capture(self.path) as reader:
            since_sweep = 0
            for pkt in iter_packets(reader, counts):
                flow, direction, chunks = table.add(pkt)
                sess = flow.attachment
                if sess is None:
                    sess = flow.attachment = TlsSession()
                if chunks and not sess.dead:
                    sess.feed(direction, chunks)
                since_sweep += 1
                if table.retired or since_sweep >= _SWEEP_EVERY:
                    since_sweep = 0
                    done = table.pop_retired()
                    now = pkt.ts_sec * 1_000_000_000 + pkt.ts_nsec
                    for key, f in list(table.active.items()):
                        if f.closed and now - f.last_ts_ns > linger_ns:
                            del table.active[key]
                            done.append(f)
                    for f in done:
                        ready[f.index] = self._finalize(f)
                    while next_out in ready:
                        rep = ready.pop(next_out)
                        next_out += 1
                        if rep is not None:
                            yield rep
            if reader.error is not None:
                summary.capture_error = str(reader.error)
        for f in table.drain():
            ready[f.index] = self._finalize(f)
        for idx in sorted(ready):
            rep = ready[idx]
            if rep is not None:
                yield rep
        summary.tcp_flow_count = table.next_index
        summary.records = counts.records
        summary.tcp_packets = counts.tcp
        summary.not_tcp_packets = counts.not_tcp
        summary.malformed_packets = counts.malformed
        summary.unique_certificates = len(summary.digests)
        summary.analysis_time = time.perf_counter() - start

    def _finalize(self, flow: Flow) -> StreamFeatureReport | None:
        sess: TlsSession = flow.attachment or TlsSession()
        left_out, left_in = flow.finish()
        if not sess.dead:
            sess.feed(0, left_out)
            sess.feed(1, left_in)
        sess.finish()
        s = self.summary
        s.reorder_overflows += flow.streams[0].overflows + flow.streams[1].overflows
        if not sess.is_tls:
            return None
        s.tls_stream_count += 1
        s.truncations += (sess.handshake_truncations + sess.chain_truncations
                          + sess.records[0].trailing_partial + sess.records[1].trailing_partial)
        s.desyncs += sess.records[0].desync + sess.records[1].desync
        s.gapped_streams += bool(sess.records[0].gapped or sess.records[1].gapped)
        certs = [self._parse_cert(der) for der in sess.certificates]
        s.certificates_seen += len(certs)
        for c in certs:
            if c.parsed:
                s.certificates_parsed += 1
                s.digests.add(c.der_digest)
        return StreamFeatureReport(
            compute_meta(flow, self.name),
            compute_stats(flow),
            compute_splt(flow, self.options.splt_cap),
            compute_byte_dist(flow),
            sess,
            certs,
        )

    def _parse_cert(self, der: bytes) -> CertificateInfo:
        cache = self._certs
        info = cache.get(der)
        if info is None:
            info = parse_certificate(der)
            cache[der] = info
            if len(cache) > self.options.cert_cache:
                cache.popitem(last=False)
        else:
            cache.move_to_end(der)
        return info


def analyze_file(path, options: Options | None = None, name: str | None = None):
    """Convenience wrapper returning ``(reports, summary)``."""
    an = CaptureAnalysis(path, options, name)
    reports = list(an)
    return reports, an.summary


def collect_inputs(paths) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(q for q in p.rglob("*")
                              if q.is_file() and q.suffix.lower() in PCAP_SUFFIXES))
        else:
            out.append(p)
    return out


def output_names(files) -> list[str]:
    """Stem per file, disambiguated when the same stem appears more than once."""
    seen: dict[str, int] = {}
    names = []
    for f in files:
        stem = Path(f).name
        for suf in PCAP_SUFFIXES:
            if stem.lower().endswith(suf):
                stem = stem[: -len(suf)]
                break
        n = seen.get(stem, 0) + 1
        seen[stem] = n
        names.append(stem if n == 1 else f"{stem}_{n}")
    return names


def process_file(path, out_dir, name: str, options: Options | None = None,
                 pretty: bool = False) -> dict:
    """Analyze ``path`` and write ``<name>.features.jsonl`` and ``<name>.summary.json``.

    Returns the summary dict plus the list of parsed-certificate digests
    (key ``"_digests"``) for dataset-level aggregation.
    """
    out_dir = Path(out_dir)
    an = CaptureAnalysis(path, options, Path(path).name)
    feat_path = out_dir / f"{name}.features.jsonl"
    with open(feat_path, "w", encoding="utf-8") as fh:
        for rep in an:
            fh.write(emit_stream_json(rep))
            fh.write("\n")
    summary = an.summary.to_dict()
    with open(out_dir / f"{name}.summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2 if pretty else None, ensure_ascii=False)
        fh.write("\n")
    summary["_digests"] = sorted(an.summary.digests)
    return summary


def _process_job(args):
    path, out_dir, name, options, pretty = args
    try:
        return process_file(path, out_dir, name, options, pretty)
    except (OSError, CaptureError) as exc:
        return {"pcap_name": Path(path).name, "error": str(exc)}


def worker_count() -> int:
    raw = os.environ.get("TLSFEAT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer TLSFEAT_THREADS=%r", raw)
    return min(4, os.cpu_count() or 1)


def dataset_summary(results: list[dict], digests: set) -> dict:
    ok = [r for r in results if "error" not in r]
    return {
        "files": len(results),
        "failed_files": [r["pcap_name"] for r in results if "error" in r],
        "analysis_time": _sec(sum(r["analysis_time"] for r in ok)),
        "tcp_flow_count": sum(r["tcp_flow_count"] for r in ok),
        "tls_stream_count": sum(r["tls_stream_count"] for r in ok),
        "certificates_seen": sum(r["certificates_seen"] for r in ok),
        "certificates_parsed": sum(r["certificates_parsed"] for r in ok),
        "unique_certificates": len(digests),
    }


def run(paths, out_dir, options: Options | None = None, pretty: bool = False,
        workers: int | None = None) -> tuple[int, list[dict], dict]:
    """Process every input; returns ``(exit_code, per_file_summaries, dataset_summary)``."""
    files = collect_inputs(paths)
    if not files:
        return 2, [], {}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = output_names(files)
    jobs = [(str(f), str(out_dir), n, options, pretty) for f, n in zip(files, names)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_process_job, jobs))
    else:
        results = [_process_job(j) for j in jobs]
    digests = set()
    for r in results:
        digests.update(r.pop("_digests", ()))
        if "error" in r:
            log.error("%s: %s", r["pcap_name"], r["error"])
    ds = dataset_summary(results, digests)
    with open(out_dir / "dataset.summary.json", "w", encoding="utf-8") as fh:
        json.dump(ds, fh, indent=2 if pretty else None)
        fh.write("\n")
    code = 1 if any("error" in r for r in results) else 0
    return code, results, ds


SUMMARY_COLUMNS = ("pcap_name", "analysis_time", "tcp_flow_count", "tls_stream_count",
                   "certificates_seen", "certificates_parsed", "unique_certificates")


def format_summary(results: list[dict], fmt: str = "table") -> str:
    rows = [[r.get(c, "") if "error" not in r or c == "pcap_name" else "error"
             for c in SUMMARY_COLUMNS] for r in results]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    return _table(SUMMARY_COLUMNS, rows)


def _table(header, rows) -> str:
    cells = [[str(h) for h in header]] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for k, r in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


@dataclass
class BenchRow:
    name: str
    times: list[float]

    @property
    def mean(self) -> float:
        return sum(self.times) / len(self.times)


def benchmark(paths, out_dir, repeats: int = 5, options: Options | None = None) -> list[BenchRow]:
    """Time the full pipeline ``repeats`` times per file (sequentially)."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    files = collect_inputs(paths)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for f, name in zip(files, output_names(files)):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            process_file(f, out_dir, name, options)
            times.append(time.perf_counter() - t0)
        rows.append(BenchRow(name, times))
    return rows


def bench_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pcap", "repeats", "mean_seconds"] + [f"run{i + 1}" for i in
                                                       range(max((len(r.times) for r in rows), default=0))])
    for r in rows:
        w.writerow([r.name, len(r.times), f"{r.mean:.6f}"] + [f"{t:.6f}" for t in r.times])
    w.writerow(["Total", "", f"{sum(r.mean for r in rows):.6f}"])
    return buf.getvalue()


def bench_table(rows: list[BenchRow]) -> str:
    body = [[r.name, len(r.times), f"{r.mean:.3f}s"] for r in rows]
    body.append(["Total", "", f"{sum(r.mean for r in rows):.3f}s"])
    return _table(("pcap", "repeats", "mean time"), body)
