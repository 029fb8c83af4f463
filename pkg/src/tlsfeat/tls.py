"""TLS record-layer parsing, handshake reassembly and hello/certificate dissection.

Everything here works on one flow's reassembled directional byte streams as
released by :mod:`tlsfeat.flows`: chunks of ``bytes`` interleaved with
:class:`~tlsfeat.flows.Gap` markers.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

from .flows import Gap
from .tls_names import HANDSHAKE_NAMES

CHANGE_CIPHER_SPEC = 20
ALERT = 21
HANDSHAKE = 22
APPLICATION_DATA = 23
CONTENT_TYPES = (CHANGE_CIPHER_SPEC, ALERT, HANDSHAKE, APPLICATION_DATA)

CLIENT_HELLO = 1
SERVER_HELLO = 2
CERTIFICATE = 11

MAX_RECORD_LEN = 2 ** 14 + 2048

EXT_SERVER_NAME = 0
EXT_SUPPORTED_GROUPS = 10
EXT_EC_POINT_FORMATS = 11
EXT_ALPN = 16
EXT_SUPPORTED_VERSIONS = 43

TLS13 = 0x0304

_HRR_RANDOM = bytes.fromhex(
    "cf21ad74e59a6111be1d8c021e65b891c2a211167abb8c5e079e09e2c8a8339c")


def detect_tls(first: bytes) -> bool:
    """Content check on the first bytes of a directional stream (needs 6)."""
    if len(first) < 6:
        return False
    return (first[0] in CONTENT_TYPES and first[1] == 3 and first[2] <= 4
            and 1 <= ((first[3] << 8) | first[4]) <= MAX_RECORD_LEN)


def _header_ok(ct: int, major: int, minor: int, length: int) -> bool:
    return ct in CONTENT_TYPES and major == 3 and minor <= 4 and length <= MAX_RECORD_LEN


@dataclass(slots=True)
class TlsRecord:
    content_type: int
    version: int
    length: int
    # None for application data when bodies are not kept
    body: bytes | None
    direction: int = 0

    @property
    def complete(self) -> bool:
        return self.body is None or len(self.body) == self.length


_DETECT, _SYNCED, _RESYNC, _STOPPED = range(4)


class RecordStream:
    """Incremental record-layer parser for one direction.

    ``feed`` accepts chunks in stream order; ``gap`` reports missing bytes.
    Complete records are appended to ``records`` (if ``collect``) and passed to
    ``on_record``. A malformed header stops the direction (``desync``). A gap
    inside a record body keeps alignment; any other gap drops the partial
    record and waits for a plausible header at a later chunk boundary.
    """

    def __init__(self, direction: int = 0, *, keep_app_data: bool = True,
                 collect: bool = True, on_record: Callable[[TlsRecord], None] | None = None):
        self.direction = direction
        self.keep_app_data = keep_app_data
        self.collect = collect
        self.on_record = on_record
        self.records: list[TlsRecord] = []
        self.state = _DETECT
        self.detected: bool | None = None
        self.desync = False
        self.gapped = False
        self.trailing_partial = False
        self.complete_records = 0
        self.discarded_records = 0
        self.type_counts = Counter()
        self._hdr = bytearray()
        self._cur: tuple[int, int, int] | None = None  # (type, version, length)
        self._body: bytearray | None = None
        self._remaining = 0
        self._candidate = bytearray()
        self._bounds: list[int] = []
        self._damaged = False

    @property
    def stopped(self) -> bool:
        return self.state == _STOPPED

    def feed(self, chunk) -> None:
        state = self.state
        if state == _SYNCED:
            self._consume(chunk)
        elif state == _STOPPED:
            return
        elif state == _DETECT:
            self._candidate += chunk
            if len(self._candidate) < 6:
                return
            data = bytes(self._candidate)
            self._candidate.clear()
            if detect_tls(data):
                self.detected = True
                self.state = _SYNCED
                self._consume(data)
            else:
                self.detected = False
                self.state = _STOPPED
        else:
            # resync: a header may only start at a chunk boundary
            if not chunk:
                return
            self._bounds.append(len(self._candidate))
            self._candidate += chunk
            cand = self._candidate
            while self._bounds:
                b = self._bounds[0]
                if len(cand) - b < 6:
                    return
                if detect_tls(bytes(cand[b:b + 6])):
                    data = bytes(cand[b:])
                    cand.clear()
                    self._bounds.clear()
                    self.state = _SYNCED
                    self._consume(data)
                    return
                self._bounds.pop(0)
            cand.clear()

    def feed_many(self, chunks: Iterable) -> None:
        for c in chunks:
            if c.__class__ is Gap:
                self.gap(c.length)
            else:
                self.feed(c)

    def gap(self, length: int) -> None:
        if self.state == _STOPPED:
            return
        self.gapped = True
        if self.state == _SYNCED and self._cur is not None and length <= self._remaining:
            # hole inside a body: the record is lost but framing is still known
            self._damaged = True
            self._remaining -= length
            self._body = None
            if self._remaining == 0:
                self._finish_record()
            return
        if self._cur is not None or self._hdr:
            self.discarded_records += 1
        self._cur = None
        self._hdr.clear()
        self._body = None
        self._damaged = False
        self._candidate.clear()
        self._bounds.clear()
        if self.state == _SYNCED:
            self.state = _RESYNC

    def finish(self) -> None:
        if self.state == _SYNCED and (self._cur is not None or self._hdr):
            self.trailing_partial = True
        elif self.state in (_DETECT, _RESYNC) and self._candidate:
            if self.state == _DETECT:
                self.detected = False
            else:
                self.trailing_partial = True
        self._candidate.clear()

    def _consume(self, chunk) -> None:
        pos = 0
        n = len(chunk)
        while pos < n:
            if self._cur is None:
                hdr = self._hdr
                if not hdr and n - pos >= 5:
                    ct = chunk[pos]
                    major = chunk[pos + 1]
                    minor = chunk[pos + 2]
                    length = (chunk[pos + 3] << 8) | chunk[pos + 4]
                    pos += 5
                else:
                    take = min(5 - len(hdr), n - pos)
                    hdr += chunk[pos:pos + take]
                    pos += take
                    if len(hdr) < 5:
                        return
                    ct, major, minor = hdr[0], hdr[1], hdr[2]
                    length = (hdr[3] << 8) | hdr[4]
                    hdr.clear()
                if not _header_ok(ct, major, minor, length):
                    if self._damaged:
                        self._damaged = False
                        self.state = _RESYNC
                        self.discarded_records += 1
                    else:
                        self.desync = True
                        self.state = _STOPPED
                    return
                self._damaged = False
                self._cur = (ct, (major << 8) | minor, length)
                self._remaining = length
                if ct != APPLICATION_DATA or self.keep_app_data:
                    self._body = bytearray()
                else:
                    self._body = None
                if length == 0:
                    self._finish_record()
            else:
                take = self._remaining if self._remaining <= n - pos else n - pos
                if self._body is not None:
                    self._body += chunk[pos:pos + take]
                pos += take
                self._remaining -= take
                if self._remaining == 0:
                    self._finish_record()

    def _finish_record(self) -> None:
        ct, version, length = self._cur
        self._cur = None
        if self._damaged:
            self.discarded_records += 1
            return
        body = bytes(self._body) if self._body is not None else None
        self._body = None
        self.complete_records += 1
        self.type_counts[ct] += 1
        rec = TlsRecord(ct, version, length, body, self.direction)
        if self.collect:
            self.records.append(rec)
        if self.on_record is not None:
            self.on_record(rec)


class RecordParse(NamedTuple):
    records: list
    trailing_partial: bool
    desync: bool
    gapped: bool


def parse_records(stream, direction: int = 0, *, assume_tls: bool = True) -> RecordParse:
    """Parse a whole directional stream (bytes, or an iterable of chunks/gaps)."""
    rs = RecordStream(direction)
    if assume_tls:
        rs.state = _SYNCED
        rs.detected = True
    if isinstance(stream, (bytes, bytearray, memoryview)):
        rs.feed(bytes(stream))
    else:
        rs.feed_many(stream)
    rs.finish()
    return RecordParse(rs.records, rs.trailing_partial, rs.desync, rs.gapped)


@dataclass(slots=True)
class HandshakeMessage:
    msg_type: int
    body: bytes
    spanned_records: int = 1
    direction: int = 0

    @property
    def length(self) -> int:
        return len(self.body)


class HandshakeAssembler:
    """Rebuilds handshake messages from one direction's handshake records.

    Record bodies are concatenated into a logical stream from which
    ``type(1) length(3) body`` units are cut, so several messages in one
    record and one message across several records are the same case.
    After ChangeCipherSpec further handshake records are encrypted and only
    counted.
    """

    def __init__(self, direction: int = 0):
        self.direction = direction
        self._buf = bytearray()
        self._span = 0
        self.after_ccs = False
        self.encrypted_records = 0
        self.truncated = 0
        self.skipped_records = 0
        self._resync = False

    def add_record(self, record: TlsRecord) -> list[HandshakeMessage]:
        ct = record.content_type
        if ct == CHANGE_CIPHER_SPEC:
            self.after_ccs = True
            return []
        if ct != HANDSHAKE:
            return []
        if self.after_ccs:
            self.encrypted_records += 1
            return []
        body = record.body
        if not body:
            return []
        if self._resync:
            # after lost bytes, only restart on a record that opens with a known message
            if len(body) < 4 or body[0] not in HANDSHAKE_NAMES:
                self.skipped_records += 1
                return []
            self._resync = False
        self._buf += body
        self._span += 1
        out = []
        buf = self._buf
        pos = 0
        while len(buf) - pos >= 4:
            mlen = (buf[pos + 1] << 16) | (buf[pos + 2] << 8) | buf[pos + 3]
            if len(buf) - pos - 4 < mlen:
                break
            out.append(HandshakeMessage(buf[pos], bytes(buf[pos + 4:pos + 4 + mlen]),
                                        self._span, self.direction))
            pos += 4 + mlen
            self._span = 1
        if pos:
            del buf[:pos]
            if not buf:
                self._span = 0
        return out

    def drop_partial(self) -> None:
        """Discard an incomplete message (stream gap or end of data)."""
        if self._buf:
            self.truncated += 1
            self._buf.clear()
        self._span = 0

    def on_gap(self) -> None:
        self.drop_partial()
        self._resync = True

    def finish(self) -> None:
        self.drop_partial()


class HandshakeLog(NamedTuple):
    messages: list
    truncated: int
    encrypted_records: int


def extract_handshakes(records: Iterable[TlsRecord], direction: int = 0) -> HandshakeLog:
    asm = HandshakeAssembler(direction)
    messages = []
    for rec in records:
        messages.extend(asm.add_record(rec))
    asm.finish()
    return HandshakeLog(messages, asm.truncated, asm.encrypted_records)


class _Short(Exception):
    pass


class _Reader:
    __slots__ = ("data", "pos", "end")

    def __init__(self, data, pos=0, end=None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def remaining(self):
        return self.end - self.pos

    def take(self, n):
        if self.pos + n > self.end:
            raise _Short
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        if self.pos + 1 > self.end:
            raise _Short
        self.pos += 1
        return self.data[self.pos - 1]

    def u16(self):
        if self.pos + 2 > self.end:
            raise _Short
        p = self.pos
        self.pos += 2
        return (self.data[p] << 8) | self.data[p + 1]

    def u24(self):
        if self.pos + 3 > self.end:
            raise _Short
        p = self.pos
        self.pos += 3
        return (self.data[p] << 16) | (self.data[p + 1] << 8) | self.data[p + 2]

    def sub(self, n):
        if self.pos + n > self.end:
            raise _Short
        r = _Reader(self.data, self.pos, self.pos + n)
        self.pos += n
        return r


def _u16_list(data: bytes) -> list[int]:
    return [(data[i] << 8) | data[i + 1] for i in range(0, len(data) - 1, 2)]


def _read_extensions(r: _Reader, exts: list) -> None:
    if r.remaining() == 0:
        return
    block = r.sub(r.u16())
    while block.remaining():
        etype = block.u16()
        exts.append((etype, bytes(block.take(block.u16()))))


@dataclass
class ClientHelloInfo:
    version: int | None = None
    random: bytes = b""
    session_id: bytes = b""
    cipher_suites: list[int] = field(default_factory=list)
    compression_methods: list[int] = field(default_factory=list)
    extensions: list[tuple[int, bytes]] = field(default_factory=list)
    sni: str | None = None
    supported_versions: list[int] = field(default_factory=list)
    supported_groups: list[int] = field(default_factory=list)
    ec_point_formats: list[int] = field(default_factory=list)
    alpn: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass
class ServerHelloInfo:
    version: int | None = None
    random: bytes = b""
    session_id: bytes = b""
    cipher_suite: int | None = None
    compression_method: int | None = None
    extensions: list[tuple[int, bytes]] = field(default_factory=list)
    supported_version: int | None = None
    alpn: str | None = None
    error: str | None = None

    @property
    def negotiated_version(self) -> int | None:
        return self.supported_version if self.supported_version is not None else self.version

    @property
    def is_retry_request(self) -> bool:
        return self.random == _HRR_RANDOM


def _parse_sni(data: bytes) -> str | None:
    r = _Reader(data)
    lst = r.sub(r.u16())
    while lst.remaining():
        name_type = lst.u8()
        name = lst.take(lst.u16())
        if name_type == 0:
            return bytes(name).decode("ascii", "replace")
    return None


def _parse_alpn(data: bytes) -> list[str]:
    r = _Reader(data)
    lst = r.sub(r.u16())
    out = []
    while lst.remaining():
        out.append(bytes(lst.take(lst.u8())).decode("ascii", "replace"))
    return out


def parse_client_hello(body: bytes) -> ClientHelloInfo:
    info = ClientHelloInfo()
    r = _Reader(body)
    try:
        info.version = r.u16()
        info.random = bytes(r.take(32))
        info.session_id = bytes(r.take(r.u8()))
        suites = r.take(r.u16())
        if len(suites) % 2:
            raise _Short
        info.cipher_suites = _u16_list(suites)
        info.compression_methods = list(r.take(r.u8()))
        _read_extensions(r, info.extensions)
    except _Short:
        info.error = "client_hello truncated"
    for etype, data in info.extensions:
        try:
            if etype == EXT_SERVER_NAME and info.sni is None:
                info.sni = _parse_sni(data)
            elif etype == EXT_SUPPORTED_VERSIONS and data:
                info.supported_versions = _u16_list(data[1:1 + data[0]])
            elif etype == EXT_SUPPORTED_GROUPS and len(data) >= 2:
                info.supported_groups = _u16_list(data[2:2 + ((data[0] << 8) | data[1])])
            elif etype == EXT_EC_POINT_FORMATS and data:
                info.ec_point_formats = list(data[1:1 + data[0]])
            elif etype == EXT_ALPN:
                info.alpn = _parse_alpn(data)
        except _Short:
            info.error = info.error or f"extension {etype} malformed"
    return info


def parse_server_hello(body: bytes) -> ServerHelloInfo:
    info = ServerHelloInfo()
    r = _Reader(body)
    try:
        info.version = r.u16()
        info.random = bytes(r.take(32))
        info.session_id = bytes(r.take(r.u8()))
        info.cipher_suite = r.u16()
        info.compression_method = r.u8()
        _read_extensions(r, info.extensions)
    except _Short:
        info.error = "server_hello truncated"
    for etype, data in info.extensions:
        if etype == EXT_SUPPORTED_VERSIONS and len(data) >= 2:
            info.supported_version = (data[0] << 8) | data[1]
        elif etype == EXT_ALPN:
            try:
                names = _parse_alpn(data)
            except _Short:
                info.error = info.error or "extension 16 malformed"
            else:
                info.alpn = names[0] if names else None
    return info


class CertificateChain(NamedTuple):
    certificates: list
    truncated: bool


def parse_certificate_msg(body: bytes) -> CertificateChain:
    """Split a (pre-1.3) Certificate message into DER blobs, leaf first."""
    if len(body) < 3:
        return CertificateChain([], True)
    declared = (body[0] << 16) | (body[1] << 8) | body[2]
    truncated = 3 + declared > len(body)
    chain = _Reader(body, 3, min(3 + declared, len(body)))
    certs = []
    while chain.remaining():
        if chain.remaining() < 3:
            truncated = True
            break
        n = chain.u24()
        if n > chain.remaining():
            truncated = True
            break
        certs.append(bytes(chain.take(n)))
    return CertificateChain(certs, truncated)


class TlsSession:
    """Dissection state for both directions of one flow."""

    def __init__(self):
        self.records = (RecordStream(0, keep_app_data=False, collect=False,
                                     on_record=self._on_record_out),
                        RecordStream(1, keep_app_data=False, collect=False,
                                     on_record=self._on_record_in))
        self.handshakes = (HandshakeAssembler(0), HandshakeAssembler(1))
        self.client_hello: ClientHelloInfo | None = None
        self.server_hello: ServerHelloInfo | None = None
        self.certificates: list[bytes] = []
        self.certificate_messages = 0
        self.chain_truncations = 0
        self.handshake_counts = Counter()
        # (direction, type, body length, records spanned) per message, in stream order
        self.handshake_log: list[tuple[int, int, int, int]] = []
        self.errors: list[str] = []
        self.finished = False

    def feed(self, direction: int, chunks: Iterable) -> None:
        rs = self.records[direction]
        if rs.state == _STOPPED:
            return
        for c in chunks:
            if c.__class__ is Gap:
                cur = rs._cur
                if cur is None or cur[0] == HANDSHAKE or c.length > rs._remaining:
                    self.handshakes[direction].on_gap()
                rs.gap(c.length)
            else:
                rs.feed(c)

    @property
    def dead(self) -> bool:
        """Both directions gave up; further bytes need not be fed."""
        return self.records[0].state == _STOPPED and self.records[1].state == _STOPPED

    def finish(self) -> None:
        if self.finished:
            return
        self.finished = True
        for rs in self.records:
            rs.finish()
        for hs in self.handshakes:
            hs.finish()

    def _on_record_out(self, rec: TlsRecord) -> None:
        self._on_record(0, rec)

    def _on_record_in(self, rec: TlsRecord) -> None:
        self._on_record(1, rec)

    def _on_record(self, direction: int, rec: TlsRecord) -> None:
        if rec.content_type not in (HANDSHAKE, CHANGE_CIPHER_SPEC):
            return
        for msg in self.handshakes[direction].add_record(rec):
            self._on_message(msg)

    def _on_message(self, msg: HandshakeMessage) -> None:
        self.handshake_counts[msg.msg_type] += 1
        self.handshake_log.append((msg.direction, msg.msg_type, len(msg.body),
                                   msg.spanned_records))
        t = msg.msg_type
        if t == CLIENT_HELLO:
            if self.client_hello is None:
                self.client_hello = parse_client_hello(msg.body)
                if self.client_hello.error:
                    self.errors.append(self.client_hello.error)
        elif t == SERVER_HELLO:
            if self.server_hello is None or self.server_hello.is_retry_request:
                self.server_hello = parse_server_hello(msg.body)
                if self.server_hello.error:
                    self.errors.append(self.server_hello.error)
        elif t == CERTIFICATE:
            self.certificate_messages += 1
            chain = parse_certificate_msg(msg.body)
            self.certificates.extend(chain.certificates)
            if chain.truncated:
                self.chain_truncations += 1

    @property
    def detected(self) -> bool:
        return bool(self.records[0].detected or self.records[1].detected)

    @property
    def is_tls(self) -> bool:
        """Detected in some direction and at least one complete record parsed."""
        return self.detected and (self.records[0].complete_records
                                  + self.records[1].complete_records) > 0

    @property
    def negotiated_version(self) -> int | None:
        if self.server_hello is not None:
            return self.server_hello.negotiated_version
        return None

    @property
    def handshake_truncations(self) -> int:
        return self.handshakes[0].truncated + self.handshakes[1].truncated

    @property
    def flags(self) -> list[str]:
        out = []
        if self.records[0].desync or self.records[1].desync:
            out.append("desync")
        if self.records[0].gapped or self.records[1].gapped:
            out.append("gapped")
        if (self.records[0].trailing_partial or self.records[1].trailing_partial
                or self.handshake_truncations or self.chain_truncations
                or self.server_hello is None):
            out.append("truncated")
        if self.negotiated_version == TLS13 and self.certificate_messages == 0:
            out.append("certs_encrypted")
        return out
