"""Synthetic traffic builder for fixtures, tests and throughput runs.

Everything here is deterministic given a seed. Frames are well-formed
Ethernet/IP/TCP; TLS content is structurally valid but carries no real
cryptography, and certificates are DER with a dummy signature.
"""
from __future__ import annotations

import random
import struct
from datetime import datetime, timezone
from ipaddress import ip_address
from pathlib import Path

from .capture import ACK, FIN, PSH, RST, SYN, PcapWriter

# ---------------------------------------------------------------- frames

ETH_IPV4 = 0x0800
ETH_IPV6 = 0x86DD
ETH_VLAN = 0x8100


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\0"
    s = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def tcp_segment(sport, dport, seq, ack, flags, payload=b"", window=65535, options=b""):
    if len(options) % 4:
        options += b"\0" * (4 - len(options) % 4)
    doff = (20 + len(options)) // 4
    hdr = struct.pack("!HHIIBBHHH", sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                      doff << 4, flags, window, 0, 0)
    return hdr + options + payload


def ipv4_packet(src, dst, proto, payload, *, ttl=64, ident=0, options=b"", flags_frag=0x4000):
    if len(options) % 4:
        options += b"\0" * (4 - len(options) % 4)
    ihl = (20 + len(options)) // 4
    hdr = struct.pack("!BBHHHBBH4s4s", 0x40 | ihl, 0, 4 * ihl + len(payload), ident & 0xFFFF,
                      flags_frag, ttl, proto, 0, ip_address(src).packed, ip_address(dst).packed)
    hdr += options
    csum = _checksum(hdr)
    return hdr[:10] + struct.pack("!H", csum) + hdr[12:] + payload


def ipv6_packet(src, dst, proto, payload, *, hop_limit=64, ext=b"", ext_proto=None):
    """``ext`` is a pre-built chain of extension headers; ``proto`` is its first next-header."""
    nxt = proto if not ext else ext_proto
    hdr = struct.pack("!IHBB16s16s", 6 << 28, len(ext) + len(payload), nxt, hop_limit,
                      ip_address(src).packed, ip_address(dst).packed)
    return hdr + ext + payload


def ethernet_frame(payload, ethertype=ETH_IPV4, *, vlan=None,
                   src_mac=b"\x02\0\0\0\0\x01", dst_mac=b"\x02\0\0\0\0\x02"):
    tag = b"" if vlan is None else struct.pack("!HH", ETH_VLAN, vlan & 0x0FFF)
    return dst_mac + src_mac + tag + struct.pack("!H", ethertype) + payload


def tcp_frame(src, dst, sport, dport, seq, ack, flags, payload=b"", *, vlan=None):
    seg = tcp_segment(sport, dport, seq, ack, flags, payload)
    if ip_address(src).version == 6:
        return ethernet_frame(ipv6_packet(src, dst, 6, seg), ETH_IPV6, vlan=vlan)
    return ethernet_frame(ipv4_packet(src, dst, 6, seg), vlan=vlan)


def udp_frame(src, dst, sport, dport, payload):
    udp = struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload
    return ethernet_frame(ipv4_packet(src, dst, 17, udp))


# ------------------------------------------------------------------- TLS

def tls_record(content_type: int, body: bytes, version: int = 0x0303) -> bytes:
    return struct.pack("!BHH", content_type, version, len(body)) + body


def handshake_msg(msg_type: int, body: bytes) -> bytes:
    return struct.pack("!B", msg_type) + len(body).to_bytes(3, "big") + body


def _vec(data: bytes, width: int) -> bytes:
    return len(data).to_bytes(width, "big") + data


def extension(ext_type: int, data: bytes) -> bytes:
    return struct.pack("!HH", ext_type, len(data)) + data


def sni_extension(host: str) -> bytes:
    name = host.encode("ascii")
    entry = b"\0" + _vec(name, 2)
    return extension(0, _vec(entry, 2))


def alpn_extension(protocols) -> bytes:
    body = b"".join(_vec(p.encode(), 1) for p in protocols)
    return extension(16, _vec(body, 2))


def supported_versions_client(versions) -> bytes:
    return extension(43, _vec(b"".join(struct.pack("!H", v) for v in versions), 1))


def supported_groups_extension(groups) -> bytes:
    return extension(10, _vec(b"".join(struct.pack("!H", g) for g in groups), 2))


def ec_point_formats_extension(formats=(0,)) -> bytes:
    return extension(11, _vec(bytes(formats), 1))


DEFAULT_SUITES = (0x1301, 0x1302, 0xC02B, 0xC02F, 0xC030, 0x009C, 0x002F)


def client_hello(*, sni: str | None = "example.com", suites=DEFAULT_SUITES,
                 version=0x0303, random_bytes=None, session_id=b"",
                 extensions: list[bytes] | None = None, alpn=None,
                 supported_versions=None, groups=(29, 23, 24)) -> bytes:
    """ClientHello handshake message (including the 4-byte handshake header)."""
    rnd = random_bytes if random_bytes is not None else bytes(range(32))
    if extensions is None:
        extensions = []
        if sni is not None:
            extensions.append(sni_extension(sni))
        if groups:
            extensions.append(supported_groups_extension(groups))
            extensions.append(ec_point_formats_extension())
        if alpn:
            extensions.append(alpn_extension(alpn))
        if supported_versions:
            extensions.append(supported_versions_client(supported_versions))
    body = (struct.pack("!H", version) + rnd + _vec(session_id, 1)
            + _vec(b"".join(struct.pack("!H", s) for s in suites), 2)
            + _vec(b"\0", 1))
    if extensions:
        body += _vec(b"".join(extensions), 2)
    return handshake_msg(1, body)


def server_hello(*, suite=0xC02F, version=0x0303, random_bytes=None, session_id=b"",
                 supported_version: int | None = None, alpn: str | None = None,
                 extensions: list[bytes] | None = None) -> bytes:
    rnd = random_bytes if random_bytes is not None else bytes(range(32, 64))
    if extensions is None:
        extensions = []
        if supported_version is not None:
            extensions.append(extension(43, struct.pack("!H", supported_version)))
        if alpn is not None:
            extensions.append(alpn_extension([alpn]))
    body = (struct.pack("!H", version) + rnd + _vec(session_id, 1)
            + struct.pack("!HB", suite, 0))
    if extensions:
        body += _vec(b"".join(extensions), 2)
    return handshake_msg(2, body)


def certificate_msg(chain) -> bytes:
    """TLS 1.2 Certificate message carrying the DER blobs in ``chain``."""
    entries = b"".join(_vec(bytes(c), 3) for c in chain)
    return handshake_msg(11, _vec(entries, 3))


def server_hello_done() -> bytes:
    return handshake_msg(14, b"")


def records_for(content_type: int, data: bytes, max_len: int = 16384,
                version: int = 0x0303) -> bytes:
    """Fragment ``data`` across as many records as needed."""
    out = bytearray()
    for i in range(0, max(len(data), 1), max_len):
        out += tls_record(content_type, data[i:i + max_len], version)
    return bytes(out)


# ------------------------------------------------------------------- DER

def _der_len(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    raw = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(raw)]) + raw


def der_tlv(tag: int, value: bytes) -> bytes:
    return bytes([tag]) + _der_len(len(value)) + value


def der_seq(*items: bytes) -> bytes:
    return der_tlv(0x30, b"".join(items))


def der_set(*items: bytes) -> bytes:
    return der_tlv(0x31, b"".join(items))


def der_int(v: int) -> bytes:
    n = max(1, (v.bit_length() + 8) // 8)
    return der_tlv(0x02, v.to_bytes(n, "big", signed=True))


def der_oid(dotted: str) -> bytes:
    arcs = [int(a) for a in dotted.split(".")]
    out = bytearray()
    for i, a in enumerate([arcs[0] * 40 + arcs[1]] + arcs[2:]):
        chunk = [a & 0x7F]
        a >>= 7
        while a:
            chunk.append(0x80 | (a & 0x7F))
            a >>= 7
        out += bytes(reversed(chunk))
    return der_tlv(0x06, bytes(out))


def der_bitstring(data: bytes) -> bytes:
    return der_tlv(0x03, b"\0" + data)


def der_time(dt: datetime) -> bytes:
    if 1950 <= dt.year < 2050:
        return der_tlv(0x17, dt.strftime("%y%m%d%H%M%SZ").encode())
    return der_tlv(0x18, dt.strftime("%Y%m%d%H%M%SZ").encode())


def der_name(attrs) -> bytes:
    """``attrs`` is a sequence of ``(oid, value)``; values are UTF8String."""
    return der_seq(*(der_set(der_seq(der_oid(oid), der_tlv(0x0C, v.encode())))
                     for oid, v in attrs))


def build_certificate(*, serial: int = 1, subject_cn: str = "test.example",
                      issuer_cn: str = "Test CA", bits: int = 2048, version: int = 3,
                      not_before: datetime | None = None, not_after: datetime | None = None,
                      rng: random.Random | None = None) -> bytes:
    """Structurally valid X.509 certificate with an RSA key of ``bits`` bits.

    The signature is random bytes; nothing here is verifiable.
    """
    rng = rng or random.Random(serial)
    nb = not_before or datetime(2024, 1, 1, tzinfo=timezone.utc)
    na = not_after or datetime(2026, 1, 1, tzinfo=timezone.utc)
    modulus = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
    spki = der_seq(
        der_seq(der_oid("1.2.840.113549.1.1.1"), der_tlv(0x05, b"")),
        der_bitstring(der_seq(der_int(modulus), der_int(65537))),
    )
    sig_alg = der_seq(der_oid("1.2.840.113549.1.1.11"), der_tlv(0x05, b""))
    fields = []
    if version != 1:
        fields.append(der_tlv(0xA0, der_int(version - 1)))
    fields += [
        der_int(serial),
        sig_alg,
        der_name([("2.5.4.3", issuer_cn)]),
        der_seq(der_time(nb), der_time(na)),
        der_name([("2.5.4.3", subject_cn)]),
        spki,
    ]
    if version == 3:
        bc = der_seq(der_oid("2.5.29.19"), der_tlv(0x04, der_seq()))
        fields.append(der_tlv(0xA3, der_seq(bc)))
    tbs = der_seq(*fields)
    return der_seq(tbs, sig_alg, der_bitstring(rng.randbytes(bits // 8)))


# ----------------------------------------------------------- conversations

class TcpConversation:
    """Scripted TCP connection that records frames with timestamps.

    ``send`` splits data into segments of ``mss`` bytes (or explicit sizes).
    Frames accumulate in ``frames`` as ``(ts_ns, frame)``.
    """

    def __init__(self, client=("10.0.0.1", 40000), server=("10.0.0.2", 443), *,
                 start_ns: int = 1_700_000_000 * 10**9, isn=(1000, 5000),
                 step_ns: int = 1_000_000, mss: int = 1460, vlan=None):
        self.ends = (client, server)
        self.seq = list(isn)
        self.t = start_ns
        self.step = step_ns
        self.mss = mss
        self.vlan = vlan
        self.frames: list[tuple[int, bytes]] = []

    def _emit(self, direction, flags, payload=b"", seq=None):
        (sip, sport), (dip, dport) = self.ends[direction], self.ends[1 - direction]
        s = self.seq[direction] if seq is None else seq
        ack = self.seq[1 - direction] if flags & ACK else 0
        self.frames.append((self.t, tcp_frame(sip, dip, sport, dport, s, ack, flags,
                                              payload, vlan=self.vlan)))
        self.t += self.step

    def handshake(self):
        self._emit(0, SYN)
        self.seq[0] += 1
        self._emit(1, SYN | ACK)
        self.seq[1] += 1
        self._emit(0, ACK)
        return self

    def send(self, direction: int, data: bytes, sizes=None):
        """Send ``data`` from ``direction`` (0 client, 1 server)."""
        if sizes is None:
            sizes = []
            left = len(data)
            while left > 0:
                sizes.append(min(self.mss, left))
                left -= sizes[-1]
        pos = 0
        for n in sizes:
            chunk = data[pos:pos + n]
            self._emit(direction, ACK | PSH, chunk)
            self.seq[direction] += len(chunk)
            pos += n
        if pos < len(data):
            raise ValueError("segment sizes do not cover the data")
        return self

    def close(self, rst: bool = False):
        if rst:
            self._emit(0, RST | ACK)
            return self
        self._emit(0, FIN | ACK)
        self.seq[0] += 1
        self._emit(1, FIN | ACK)
        self.seq[1] += 1
        self._emit(0, ACK)
        return self


def tls12_session(conv: TcpConversation, *, chain=(), sni="example.com",
                  app_data=(), server_flight_sizes=None, combine_server_flight=True):
    """Script a TLS 1.2 style handshake (plus optional app data) onto ``conv``.

    With ``combine_server_flight`` the ServerHello, Certificate and
    ServerHelloDone share one record (split across records only if larger
    than 16 KiB). Returns the conversation.
    """
    conv.send(0, tls_record(22, client_hello(sni=sni), 0x0301))
    sh = server_hello()
    done = server_hello_done()
    msgs = [sh] + ([certificate_msg(chain)] if chain else []) + [done]
    if combine_server_flight:
        flight = records_for(22, b"".join(msgs))
    else:
        flight = b"".join(records_for(22, m) for m in msgs)
    conv.send(1, flight, server_flight_sizes)
    conv.send(0, tls_record(22, handshake_msg(16, bytes(33))) + tls_record(20, b"\x01")
              + tls_record(22, bytes(40)))
    conv.send(1, tls_record(20, b"\x01") + tls_record(22, bytes(40)))
    for direction, data in app_data:
        conv.send(direction, records_for(23, data))
    return conv


def tls13_session(conv: TcpConversation, *, sni="example.com", app_bytes=2000):
    conv.send(0, tls_record(22, client_hello(sni=sni, supported_versions=(0x0304, 0x0303)),
                            0x0301))
    conv.send(1, tls_record(22, server_hello(suite=0x1301, supported_version=0x0304))
              + tls_record(20, b"\x01") + tls_record(23, bytes(app_bytes)))
    conv.send(0, tls_record(20, b"\x01") + tls_record(23, bytes(53)))
    return conv


def write_pcap(path, frames, *, nanosecond=False, byte_order="little"):
    """Write ``(ts_ns, frame)`` pairs (sorted by timestamp, stable) to ``path``."""
    frames = sorted(frames, key=lambda f: f[0])
    with open(path, "wb") as fh:
        w = PcapWriter(fh, nanosecond=nanosecond, byte_order=byte_order)
        for ts, frame in frames:
            w.write(ts, frame)
    return Path(path)


def scripted_corpus(k: int, *, chains=None, seed: int = 0, start_ns=1_700_000_000 * 10**9):
    """Frames for ``k`` TLS sessions plus some non-TLS noise.

    ``chains[i]`` is the certificate list of session ``i`` (default: cycle
    through 0..3 certificates). Returns ``(frames, chains)``.
    """
    rng = random.Random(seed)
    if chains is None:
        chains = []
        for i in range(k):
            n = i % 4
            chains.append([build_certificate(serial=seed * 1000 + i * 10 + j,
                                             subject_cn=f"host{i}-{j}.example",
                                             bits=1024, rng=rng) for j in range(n)])
    frames = []
    t = start_ns
    for i in range(k):
        conv = TcpConversation(("10.0.%d.%d" % (i // 200, i % 200 + 1), 40000 + i),
                               ("192.0.2.%d" % (i % 250 + 1), 443), start_ns=t)
        conv.handshake()
        tls12_session(conv, chain=chains[i], sni=f"s{i}.example",
                      app_data=[(0, rng.randbytes(300)), (1, rng.randbytes(900))])
        conv.close()
        frames += conv.frames
        t += 500_000
    # plaintext HTTP and UDP noise
    http = TcpConversation(("10.9.0.1", 50000), ("10.9.0.2", 80), start_ns=start_ns + 7)
    http.handshake().send(0, b"GET / HTTP/1.1\r\nHost: x\r\n\r\n").send(1, b"HTTP/1.1 200 OK\r\n\r\n" + bytes(500)).close()
    frames += http.frames
    frames.append((start_ns + 11, udp_frame("10.9.0.1", "10.9.0.53", 5353, 53, b"\0" * 30)))
    return frames, chains


def generate_mixed_pcap(path, target_bytes: int = 200 * 1024 * 1024, *, seed: int = 1,
                        tls_fraction: float = 0.6) -> dict:
    """Write a large mixed TLS/non-TLS capture of at least ``target_bytes``.

    Sessions are interleaved a few at a time so the flow table holds several
    concurrent connections. Returns counts of what was generated.
    """
    rng = random.Random(seed)
    certs = [build_certificate(serial=i + 1, subject_cn=f"bulk{i}.example",
                               bits=rng.choice((1024, 2048)), rng=rng) for i in range(16)]
    blob = rng.randbytes(1 << 20)
    text = (b"GET /index.html HTTP/1.1\r\nHost: www.example.org\r\n"
            b"User-Agent: synth\r\nAccept: */*\r\n\r\n") * 64
    stats = {"tls_sessions": 0, "other_sessions": 0, "frames": 0}
    t = 1_700_000_000 * 10**9
    i = 0
    with open(path, "wb") as fh:
        w = PcapWriter(fh)
        while fh.tell() < target_bytes:
            batch = []
            for _ in range(8):
                i += 1
                conv = TcpConversation(("10.%d.%d.%d" % (i >> 16 & 255, i >> 8 & 255, i & 255 or 1),
                                        1024 + i % 60000),
                                       ("198.51.100.%d" % (i % 200 + 1), 443 if i % 5 else 8443),
                                       start_ns=t + rng.randrange(1_000_000), step_ns=200_000)
                conv.handshake()
                size = rng.randrange(20_000, 400_000)
                off = rng.randrange(len(blob) - size)
                if rng.random() < tls_fraction:
                    chain = rng.sample(certs, rng.randrange(1, 4))
                    tls12_session(conv, chain=chain, sni=f"bulk{i}.example",
                                  app_data=[(0, blob[off:off + 500]), (1, blob[off:off + size])])
                    stats["tls_sessions"] += 1
                else:
                    conv.send(0, text[:rng.randrange(100, len(text))])
                    conv.send(1, blob[off:off + size])
                    stats["other_sessions"] += 1
                conv.close()
                batch += conv.frames
            batch.sort(key=lambda f: f[0])
            for ts, frame in batch:
                w.write(ts, frame)
            stats["frames"] += len(batch)
            t = batch[-1][0] + 1_000_000
        stats["bytes"] = fh.tell()
    return stats
