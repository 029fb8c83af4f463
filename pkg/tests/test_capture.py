import io
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlsfeat.capture import (ACK, LINKTYPE_LINUX_SLL, CaptureError, CaptureReader, DecodeCounts,
                             NotTcp, Packet, PcapWriter, decode_packet, iter_packets,
                             open_capture, parse_header)
from tlsfeat.synth import (ETH_IPV6, ethernet_frame, ipv4_packet, ipv6_packet, tcp_frame,
                           tcp_segment, udp_frame)

from conftest import pcap_bytes


def _header(magic: bytes, order="<", snaplen=65535, linktype=1):
    return magic + struct.pack(order + "HHiIII", 2, 4, 0, 0, snaplen, linktype)


@pytest.mark.parametrize("magic,nano,order", [
    (b"\xa1\xb2\xc3\xd4", False, "big"),
    (b"\xd4\xc3\xb2\xa1", False, "little"),
    (b"\xa1\xb2\x3c\x4d", True, "big"),
    (b"\x4d\x3c\xb2\xa1", True, "little"),
])
def test_magic_variants(magic, nano, order):
    h = parse_header(_header(magic, ">" if order == "big" else "<"))
    assert h.nanosecond is nano
    assert h.byte_order == order
    assert h.snaplen == 65535 and h.linktype == 1


def test_magic_examples():
    h = parse_header(_header(b"\xa1\xb2\xc3\xd4", ">"))
    assert h.resolution == "microsecond" and not h.swapped
    h = parse_header(_header(b"\x4d\x3c\xb2\xa1"))
    assert h.resolution == "nanosecond" and h.swapped


def test_bad_magic():
    with pytest.raises(CaptureError, match="bad magic"):
        parse_header(b"\0\0\0\0" + bytes(20))


def test_truncated_header_and_zero_snaplen():
    with pytest.raises(CaptureError, match="truncated"):
        parse_header(b"\xd4\xc3\xb2\xa1" + bytes(4))
    with pytest.raises(CaptureError, match="snap length"):
        parse_header(_header(b"\xd4\xc3\xb2\xa1", snaplen=0))


def test_unsupported_linktype_names_code():
    data = _header(b"\xd4\xc3\xb2\xa1", linktype=105)
    with pytest.raises(CaptureError, match="105"):
        list(CaptureReader(io.BytesIO(data)))


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        open_capture(tmp_path / "nope.pcap")


def test_truncated_record_stops_with_offset():
    frame = tcp_frame("10.0.0.1", "10.0.0.2", 1, 2, 0, 0, ACK, b"abc")
    data = pcap_bytes([(10**9, frame), (2 * 10**9, frame)])
    reader = CaptureReader(io.BytesIO(data[:-5]))
    recs = list(reader)
    assert len(recs) == 1
    assert reader.error is not None and reader.error.offset is not None
    reader = CaptureReader(io.BytesIO(data[:24 + 16 + len(frame) + 7]))
    assert len(list(reader)) == 1
    assert "record header" in str(reader.error)


def test_ipv4_tcp_three_payload_bytes():
    frame = tcp_frame("10.0.0.1", "10.0.0.2", 1234, 443, 7, 0, ACK, b"xyz")
    p = decode_packet(frame, 1, 5, 6, len(frame), 0)
    assert isinstance(p, Packet)
    assert p.payload == b"xyz"
    assert (p.src_port, p.dst_port, p.seq) == (1234, 443, 7)
    assert p.timestamp_ns == 5 * 10**9 + 6


def test_arp_and_udp_are_not_tcp():
    arp = ethernet_frame(bytes(28), 0x0806)
    assert decode_packet(arp, 1, 0, 0, len(arp), 0) is NotTcp.OTHER
    udp = udp_frame("10.0.0.1", "10.0.0.2", 53, 53, b"q")
    assert decode_packet(udp, 1, 0, 0, len(udp), 0) is NotTcp.OTHER


def test_ipv4_options_shift_tcp_header():
    seg = tcp_segment(5555, 443, 1, 0, ACK, b"hi")
    ip = ipv4_packet("192.0.2.1", "192.0.2.2", 6, seg, options=b"\x01\x01\x01\x01")
    frame = ethernet_frame(ip)
    # independent oracle: IHL nibble, then ports at ip_start + 4*IHL
    ihl = frame[14] & 0x0F
    assert ihl == 6
    sport, dport = struct.unpack_from("!HH", frame, 14 + 24)
    p = decode_packet(frame, 1, 0, 0, len(frame), 0)
    assert (p.src_port, p.dst_port) == (sport, dport) == (5555, 443)
    assert p.payload == b"hi"


def test_vlan_and_ipv6_and_sll():
    f = tcp_frame("10.0.0.1", "10.0.0.2", 1, 2, 0, 0, ACK, b"v", vlan=42)
    assert decode_packet(f, 1, 0, 0, len(f), 0).payload == b"v"
    f6 = tcp_frame("2001:db8::1", "2001:db8::2", 1, 2, 0, 0, ACK, b"six")
    p = decode_packet(f6, 1, 0, 0, len(f6), 0)
    assert p.payload == b"six" and len(p.src_ip) == 16
    # hop-by-hop extension header before TCP
    seg = tcp_segment(1, 2, 0, 0, ACK, b"ext")
    hbh = bytes([6, 0]) + bytes(6)
    f6e = ethernet_frame(ipv6_packet("2001:db8::1", "2001:db8::2", 6, seg, ext=hbh, ext_proto=0),
                         ETH_IPV6)
    assert decode_packet(f6e, 1, 0, 0, len(f6e), 0).payload == b"ext"
    ip = f[18:]
    sll = struct.pack("!HHH8sH", 0, 1, 6, bytes(8), 0x0800) + ip
    assert decode_packet(sll, LINKTYPE_LINUX_SLL, 0, 0, len(sll), 0).payload == b"v"


def test_malformed_headers_counted_not_raised():
    good = tcp_frame("10.0.0.1", "10.0.0.2", 1, 2, 0, 0, ACK, b"abc")
    bad_doff = bytearray(good)
    bad_doff[14 + 20 + 12] = 0xF0  # data offset 60 > segment
    frag = bytearray(good)
    frag[14 + 7] = 5  # fragment offset 5 -> non-first fragment
    frames = [good, good[:30], bytes(bad_doff), bytes(frag), good[:14 + 20 + 10]]
    for f in frames[1:]:
        assert decode_packet(f, 1, 0, 0, len(f), 0) is NotTcp.MALFORMED
    data = pcap_bytes([(i, f) for i, f in enumerate(frames)])
    counts = DecodeCounts()
    pkts = list(iter_packets(CaptureReader(io.BytesIO(data)), counts))
    assert len(pkts) == 1
    assert counts.records == 5 and counts.malformed == 4
    assert counts.tcp + counts.not_tcp + counts.malformed == counts.records


def test_snaplen_cut_keeps_declared_length():
    frame = tcp_frame("10.0.0.1", "10.0.0.2", 1, 2, 0, 0, ACK, b"x" * 100)
    cut = frame[:-40]
    p = decode_packet(cut, 1, 0, 0, len(frame), 0)
    assert len(p.payload) == 60 and p.seg_len == 100
    assert len(p.payload) <= p.wire_len


def test_ordinals_strictly_increase_and_include_non_tcp():
    t = tcp_frame("10.0.0.1", "10.0.0.2", 1, 2, 0, 0, ACK, b"a")
    u = udp_frame("10.0.0.1", "10.0.0.2", 1, 2, b"b")
    data = pcap_bytes([(1, t), (2, u), (3, t)])
    pkts = list(iter_packets(CaptureReader(io.BytesIO(data))))
    assert [p.ordinal for p in pkts] == [0, 2]


frame_spec = st.tuples(
    st.integers(0, 2**32 - 1), st.integers(0, 10**9 - 1),
    st.integers(1, 65535), st.integers(1, 65535), st.integers(0, 2**32 - 1),
    st.binary(max_size=200), st.booleans())


@settings(max_examples=60, deadline=None)
@given(st.lists(frame_spec, max_size=12), st.sampled_from(["little", "big"]))
def test_roundtrip_and_resolution_equivalence(specs, order):
    frames = []
    for sec, nsec, sp, dp, seq, payload, v6 in specs:
        nsec -= nsec % 1000  # representable at microsecond resolution
        src, dst = ("2001:db8::1", "2001:db8::2") if v6 else ("10.1.1.1", "10.2.2.2")
        frames.append((sec * 10**9 + nsec, tcp_frame(src, dst, sp, dp, seq, 0, ACK, payload)))
    results = []
    for nano in (False, True):
        data = pcap_bytes(frames, nanosecond=nano, byte_order=order)
        pkts = list(iter_packets(CaptureReader(io.BytesIO(data))))
        results.append([(p.timestamp_ns, p.src_port, p.dst_port, p.seq, p.payload) for p in pkts])
    expected = [(ts, s[2], s[3], s[4], s[5]) for (ts, _), s in zip(frames, specs)]
    assert results[0] == results[1] == expected


def test_writer_reader_wire_len():
    buf = io.BytesIO()
    w = PcapWriter(buf, nanosecond=True)
    w.write(123, b"\0" * 20, wire_len=1500)
    rec = next(iter(CaptureReader(io.BytesIO(buf.getvalue()))))
    assert rec.wire_len == 1500 and rec.ts_nsec == 123
