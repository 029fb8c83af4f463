"""Bidirectional TCP flow tracking and per-direction segment reassembly."""
from __future__ import annotations

import enum
from array import array
from bisect import bisect_right, insort
from typing import NamedTuple

from . import kernels
from .capture import ACK, FIN, RST, SYN, Packet

DEFAULT_REORDER_CAP = 8 * 1024 * 1024

_MOD = 1 << 32
_HALF = 1 << 31


class Direction(enum.IntEnum):
    OUTBOUND = 0
    INBOUND = 1


OUTBOUND = Direction.OUTBOUND
INBOUND = Direction.INBOUND


class Gap(NamedTuple):
    """Marker for ``length`` stream bytes that were never captured."""

    length: int


def flow_key(packet: Packet) -> tuple:
    a = (packet.src_ip, packet.src_port)
    b = (packet.dst_ip, packet.dst_port)
    return (a, b) if a <= b else (b, a)


class Reassembler:
    """Orders one direction's TCP payload by sequence number.

    Sequence numbers are unwrapped into an unbounded integer space using the
    usual half-window rule. Overlapping data keeps the bytes that arrived
    first; exact retransmissions are dropped.
    """

    __slots__ = ("next", "isn", "_starts", "_pending", "pending_bytes", "cap",
                 "gapped", "overflows", "duplicates", "released")

    def __init__(self, cap: int = DEFAULT_REORDER_CAP):
        self.next: int | None = None
        self.isn: int | None = None
        self._starts: list[int] = []
        self._pending: dict[int, tuple[int, bytes | None]] = {}
        self.pending_bytes = 0
        self.cap = cap
        self.gapped = False
        self.overflows = 0
        self.duplicates = 0
        self.released = 0

    def ingest(self, seq: int, flags: int, payload: bytes, seg_len: int | None = None) -> list:
        """Accept one segment; return the newly contiguous chunks (bytes or Gap)."""
        if seg_len is None:
            seg_len = len(payload)
        if flags & SYN:
            seq = (seq + 1) % _MOD
            if self.next is None:
                self.isn = seq
        if self.next is None:
            self.next = seq
        nxt = self.next
        start = nxt + (((seq - nxt) % _MOD + _HALF) % _MOD - _HALF)
        if seg_len <= 0:
            return []
        end = start + seg_len
        if end <= nxt:
            self.duplicates += 1
            return []
        if start < nxt:
            payload = payload[nxt - start:]
            start = nxt
        if not self._starts and start == nxt:
            out = []
            if payload:
                out.append(payload)
            if start + len(payload) < end:
                out.append(Gap(end - start - len(payload)))
                self.gapped = True
            self.next = end
            self.released += end - start
            return out
        pieces = [(start, start + len(payload), payload)] if payload else []
        if start + len(payload) < end:
            pieces.append((start + len(payload), end, None))
        for s, e, data in pieces:
            self._insert(s, e, data)
        out = self._drain()
        if self.pending_bytes > self.cap:
            self.overflows += 1
            self.gapped = True
            while self._starts and self.pending_bytes > self.cap:
                out.extend(self._skip_hole())
        return out

    def _insert(self, s: int, e: int, data: bytes | None):
        starts = self._starts
        pending = self._pending
        i = bisect_right(starts, s) - 1
        pos = s
        if i >= 0:
            pos = max(pos, pending[starts[i]][0])
        i += 1
        holes = []
        while pos < e:
            if i < len(starts) and starts[i] < e:
                ps = starts[i]
                if ps > pos:
                    holes.append((pos, ps))
                pos = max(pos, pending[ps][0])
                i += 1
            else:
                holes.append((pos, e))
                break
        for a, b in holes:
            piece = None if data is None else data[a - s:b - s]
            insort(starts, a)
            pending[a] = (b, piece)
            if piece is not None:
                self.pending_bytes += len(piece)

    def _drain(self) -> list:
        out = []
        starts = self._starts
        while starts and starts[0] == self.next:
            s = starts.pop(0)
            e, data = self._pending.pop(s)
            if data is None:
                out.append(Gap(e - s))
                self.gapped = True
            else:
                self.pending_bytes -= len(data)
                out.append(data)
            self.released += e - s
            self.next = e
        return out

    def _skip_hole(self) -> list:
        first = self._starts[0]
        out = []
        if first > self.next:
            out.append(Gap(first - self.next))
            self.gapped = True
            self.next = first
        out.extend(self._drain())
        return out

    def flush(self) -> list:
        """Release everything still buffered, bridging holes with Gap markers."""
        out = []
        while self._starts:
            out.extend(self._skip_hole())
        return out

    @property
    def offset(self) -> int:
        """Bytes of contiguous stream consumed so far (gaps included)."""
        return self.released


class Flow:
    """One TCP connection between fixed initiator and responder endpoints."""

    def __init__(self, index: int, initiator: tuple, responder: tuple, first_ts_ns: int,
                 reorder_cap: int = DEFAULT_REORDER_CAP, retain_streams: bool = False):
        self.index = index
        self.initiator = initiator
        self.responder = responder
        self.first_ts_ns = first_ts_ns
        self.last_ts_ns = first_ts_ns
        # per-packet event log in capture order
        self.ts_ns: list[int] = []
        self.dirs = bytearray()
        self.payload_lens: list[int] = []
        self.wire_lens: list[int] = []
        self.byte_counts = array("Q", bytes(256 * 8))
        self.streams = (Reassembler(reorder_cap), Reassembler(reorder_cap))
        self.retained: tuple[list, list] | None = ([], []) if retain_streams else None
        self.fin_seen = [False, False]
        self.rst_seen = False
        self.attachment = None  # per-flow consumer state (e.g. a TLS session)

    @property
    def closed(self) -> bool:
        return self.rst_seen or (self.fin_seen[0] and self.fin_seen[1])

    @property
    def state(self) -> str:
        return "closed" if self.closed else "open"

    @property
    def packet_count(self) -> int:
        return len(self.ts_ns)

    @property
    def duration(self) -> float:
        return (self.last_ts_ns - self.first_ts_ns) / 1e9

    def direction_of(self, packet: Packet) -> Direction:
        if packet.src_ip == self.initiator[0] and packet.src_port == self.initiator[1]:
            return OUTBOUND
        return INBOUND

    def ingest(self, packet: Packet, direction: Direction | None = None) -> list:
        """Log the packet and return the in-order payload chunks it released."""
        if direction is None:
            direction = self.direction_of(packet)
        ts = packet.ts_sec * 1_000_000_000 + packet.ts_nsec
        self.ts_ns.append(ts)
        if ts > self.last_ts_ns:
            self.last_ts_ns = ts
        elif ts < self.first_ts_ns:
            self.first_ts_ns = ts
        self.dirs.append(direction)
        self.payload_lens.append(packet.seg_len)
        self.wire_lens.append(packet.wire_len)
        payload = packet.payload
        if payload:
            kernels.update_histogram(self.byte_counts, payload)
        flags = packet.flags
        if flags & FIN:
            self.fin_seen[direction] = True
        if flags & RST:
            self.rst_seen = True
        chunks = self.streams[direction].ingest(packet.seq, flags, payload, packet.seg_len)
        if self.retained is not None and chunks:
            self.retained[direction].extend(chunks)
        return chunks

    def finish(self) -> tuple[list, list]:
        """Flush both reassemblers at end of flow; returns leftover chunks per direction."""
        out = (self.streams[0].flush(), self.streams[1].flush())
        if self.retained is not None:
            self.retained[0].extend(out[0])
            self.retained[1].extend(out[1])
        return out

    def stream_bytes(self, direction: Direction) -> bytes:
        """Retained stream content with gaps dropped (requires ``retain_streams``)."""
        if self.retained is None:
            raise ValueError("flow was created without retain_streams")
        return b"".join(c for c in self.retained[direction] if not isinstance(c, Gap))


class FlowTable:
    """Assigns packets to flows with stream indexes in first-seen order."""

    def __init__(self, reorder_cap: int = DEFAULT_REORDER_CAP, retain_streams: bool = False):
        self.reorder_cap = reorder_cap
        self.retain_streams = retain_streams
        self.active: dict[tuple, Flow] = {}
        self.retired: list[Flow] = []
        self.next_index = 0
        self.packets = 0

    def assign_stream_index(self, key) -> int:
        index = self.next_index
        self.next_index += 1
        return index

    def lookup(self, packet: Packet) -> tuple[Flow, Direction]:
        """Find or create the flow for ``packet`` and report its direction."""
        key = flow_key(packet)
        flow = self.active.get(key)
        flags = packet.flags
        if flow is not None and flags & SYN and not flags & ACK and (
                flow.rst_seen or flow.fin_seen[0] or flow.fin_seen[1]):
            # port reuse after close: a fresh connection gets a fresh index
            self.retired.append(flow)
            flow = None
        if flow is None:
            if flags & SYN and flags & ACK:
                initiator, responder = packet.dst, packet.src
            else:
                initiator, responder = packet.src, packet.dst
            ts = packet.ts_sec * 1_000_000_000 + packet.ts_nsec
            flow = Flow(self.assign_stream_index(key), initiator, responder, ts,
                        self.reorder_cap, self.retain_streams)
            self.active[key] = flow
        return flow, flow.direction_of(packet)

    def add(self, packet: Packet) -> tuple[Flow, Direction, list]:
        self.packets += 1
        flow, direction = self.lookup(packet)
        return flow, direction, flow.ingest(packet, direction)

    def pop_retired(self) -> list[Flow]:
        out, self.retired = self.retired, []
        return out

    def drain(self) -> list[Flow]:
        """All remaining flows (retired and active), ordered by stream index."""
        flows = self.retired + list(self.active.values())
        self.retired = []
        self.active = {}
        flows.sort(key=lambda f: f.index)
        return flows


def direction_of(flow: Flow, packet: Packet) -> Direction:
    return flow.direction_of(packet)
