"""Classic pcap reading/writing and frame decoding down to TCP."""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from ipaddress import ip_address
from typing import BinaryIO, Iterator, NamedTuple

from . import kernels

LINKTYPE_ETHERNET = 1
LINKTYPE_LINUX_SLL = 113
SUPPORTED_LINKTYPES = (LINKTYPE_ETHERNET, LINKTYPE_LINUX_SLL)

# Record sizes above this are treated as file corruption rather than data.
MAX_RECORD_BYTES = 256 * 1024 * 1024

# magic as it appears on disk -> (nanosecond resolution, byte order)
_MAGICS = {
    b"\xa1\xb2\xc3\xd4": (False, "big"),
    b"\xd4\xc3\xb2\xa1": (False, "little"),
    b"\xa1\xb2\x3c\x4d": (True, "big"),
    b"\x4d\x3c\xb2\xa1": (True, "little"),
}

FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10


class CaptureError(Exception):
    """Unreadable or structurally invalid capture file."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class CaptureHeader:
    nanosecond: bool
    byte_order: str  # "big" when the magic reads a1 b2 .. on disk
    version: tuple[int, int]
    snaplen: int
    linktype: int

    @property
    def resolution(self) -> str:
        return "nanosecond" if self.nanosecond else "microsecond"

    @property
    def swapped(self) -> bool:
        """True when the magic is stored byte-reversed (little-endian file)."""
        return self.byte_order == "little"


class RawRecord(NamedTuple):
    ts_sec: int
    ts_nsec: int
    frame: bytes
    wire_len: int


class NotTcp(enum.IntEnum):
    """Outcome of decoding a frame that does not carry a usable TCP segment."""

    OTHER = kernels.NOT_TCP
    MALFORMED = kernels.MALFORMED


@dataclass(slots=True)
class Packet:
    ts_sec: int
    ts_nsec: int
    src_ip: bytes
    dst_ip: bytes
    src_port: int
    dst_port: int
    seq: int
    flags: int
    payload: bytes
    wire_len: int
    ordinal: int
    # TCP payload length per the IP header; exceeds len(payload) on snaplen cuts
    seg_len: int = -1

    def __post_init__(self):
        if self.seg_len < 0:
            self.seg_len = len(self.payload)

    @property
    def timestamp_ns(self) -> int:
        return self.ts_sec * 1_000_000_000 + self.ts_nsec

    @property
    def syn(self) -> bool:
        return bool(self.flags & SYN)

    @property
    def ack(self) -> bool:
        return bool(self.flags & ACK)

    @property
    def fin(self) -> bool:
        return bool(self.flags & FIN)

    @property
    def rst(self) -> bool:
        return bool(self.flags & RST)

    @property
    def src(self) -> tuple[bytes, int]:
        return (self.src_ip, self.src_port)

    @property
    def dst(self) -> tuple[bytes, int]:
        return (self.dst_ip, self.dst_port)


def format_ip(raw: bytes) -> str:
    return str(ip_address(raw))


def parse_header(data: bytes) -> CaptureHeader:
    if len(data) < 4:
        raise CaptureError("truncated global header", 0)
    try:
        nano, order = _MAGICS[bytes(data[:4])]
    except KeyError:
        raise CaptureError(f"bad magic {bytes(data[:4]).hex()}", 0) from None
    if len(data) < 24:
        raise CaptureError("truncated global header", len(data))
    fmt = ">HHiIII" if order == "big" else "<HHiIII"
    major, minor, _tz, _sigfigs, snaplen, linktype = struct.unpack_from(fmt, data, 4)
    if snaplen == 0:
        raise CaptureError("snap length is zero", 16)
    return CaptureHeader(nano, order, (major, minor), snaplen, linktype & 0x0FFFFFFF)


class CaptureReader:
    """Iterates raw records of a classic pcap file in file order.

    A truncated trailing record ends iteration; the problem is left in
    ``error`` (a :class:`CaptureError` carrying the byte offset).
    """

    def __init__(self, fileobj: BinaryIO, *, close: bool = False):
        self._f = fileobj
        self._close = close
        self.header = parse_header(fileobj.read(24))
        if self.header.linktype not in SUPPORTED_LINKTYPES:
            raise CaptureError(f"unsupported link type {self.header.linktype}")
        self._rec = struct.Struct(">IIII" if self.header.byte_order == "big" else "<IIII")
        self.offset = 24
        self.records = 0
        self.error: CaptureError | None = None

    def __iter__(self) -> Iterator[RawRecord]:
        read = self._f.read
        unpack = self._rec.unpack
        scale = 1 if self.header.nanosecond else 1000
        while True:
            head = read(16)
            if not head:
                return
            if len(head) < 16:
                self.error = CaptureError("truncated record header", self.offset)
                return
            sec, frac, incl, orig = unpack(head)
            if incl > MAX_RECORD_BYTES:
                self.error = CaptureError(f"implausible record length {incl}", self.offset)
                return
            frame = read(incl)
            if len(frame) < incl:
                self.error = CaptureError("truncated record body", self.offset)
                return
            self.offset += 16 + incl
            self.records += 1
            nsec = frac * scale
            if nsec >= 1_000_000_000:
                carry, nsec = divmod(nsec, 1_000_000_000)
                sec += carry
            yield RawRecord(sec, nsec, frame, max(orig, incl))

    def close(self):
        if self._close:
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_capture(path) -> CaptureReader:
    """Open ``path`` as a classic pcap; raises :class:`CaptureError` or OSError."""
    f = open(path, "rb", buffering=1 << 20)
    try:
        return CaptureReader(f, close=True)
    except BaseException:
        f.close()
        raise


def decode_packet(frame: bytes, linktype: int, ts_sec: int = 0, ts_nsec: int = 0,
                  wire_len: int | None = None, ordinal: int = 0) -> Packet | NotTcp:
    res = kernels.decode_frame(frame, linktype)
    if res.__class__ is int:
        return NotTcp(res)
    src, dst, sport, dport, seq, flags, start, end, seg_len = res
    return Packet(ts_sec, ts_nsec, src, dst, sport, dport, seq, flags,
                  frame[start:end], len(frame) if wire_len is None else wire_len,
                  ordinal, seg_len)


@dataclass
class DecodeCounts:
    records: int = 0
    tcp: int = 0
    not_tcp: int = 0
    malformed: int = 0


def iter_packets(reader: CaptureReader, counts: DecodeCounts | None = None) -> Iterator[Packet]:
    """Decode every record of ``reader``; classification totals go to ``counts``."""
    if counts is None:
        counts = DecodeCounts()
    decode = kernels.decode_frame
    linktype = reader.header.linktype
    ordinal = -1
    for sec, nsec, frame, wire_len in reader:
        ordinal += 1
        counts.records += 1
        res = decode(frame, linktype)
        if res.__class__ is int:
            if res == kernels.MALFORMED:
                counts.malformed += 1
            else:
                counts.not_tcp += 1
            continue
        src, dst, sport, dport, seq, flags, start, end, seg_len = res
        counts.tcp += 1
        yield Packet(sec, nsec, src, dst, sport, dport, seq, flags,
                     frame[start:end], wire_len, ordinal, seg_len)


class PcapWriter:
    """Minimal classic pcap writer used by fixtures and the synthetic generator."""

    def __init__(self, fileobj: BinaryIO, linktype: int = LINKTYPE_ETHERNET, *,
                 nanosecond: bool = False, byte_order: str = "little",
                 snaplen: int = 262144):
        self._f = fileobj
        self.nanosecond = nanosecond
        e = "<" if byte_order == "little" else ">"
        magic = 0xA1B23C4D if nanosecond else 0xA1B2C3D4
        fileobj.write(struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, snaplen, linktype))
        self._rec = struct.Struct(e + "IIII")

    def write(self, ts_ns: int, frame: bytes, wire_len: int | None = None):
        sec, nsec = divmod(ts_ns, 1_000_000_000)
        frac = nsec if self.nanosecond else nsec // 1000
        n = len(frame)
        self._f.write(self._rec.pack(sec, frac, n, n if wire_len is None else wire_len))
        self._f.write(frame)
