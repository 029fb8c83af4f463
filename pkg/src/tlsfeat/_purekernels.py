"""Pure-Python hot kernels.

Reference implementations of the routines in ``_ckernels.pyx``. Both modules
expose the same names and must return identical results; ``tlsfeat.kernels``
picks one at import.
"""
from collections import Counter
from math import sqrt
from struct import unpack_from

NOT_TCP = 0
MALFORMED = 1

LINKTYPE_ETHERNET = 1
LINKTYPE_LINUX_SLL = 113

_IPV6_EXT_HEADERS = (0, 43, 60)
_VLAN_TYPES = (0x8100, 0x88A8, 0x9100)


def decode_frame(frame, linktype):
    """Decode a link-layer frame down to TCP.

    Returns ``NOT_TCP`` or ``MALFORMED`` for frames that do not yield a TCP
    segment, otherwise a tuple
    ``(src, dst, sport, dport, seq, flags, payload_start, payload_end, seg_len)``
    where ``src``/``dst`` are raw address bytes and ``seg_len`` is the TCP
    payload length declared by the IP header (may exceed the captured bytes).
    """
    n = len(frame)
    if linktype == LINKTYPE_ETHERNET:
        if n < 14:
            return MALFORMED
        off = 12
        etype = (frame[12] << 8) | frame[13]
        while etype in _VLAN_TYPES:
            off += 4
            if n < off + 2:
                return MALFORMED
            etype = (frame[off] << 8) | frame[off + 1]
        off += 2
    elif linktype == LINKTYPE_LINUX_SLL:
        if n < 16:
            return MALFORMED
        etype = (frame[14] << 8) | frame[15]
        off = 16
    else:
        return MALFORMED

    if etype == 0x0800:
        if n < off + 20:
            return MALFORMED
        vihl = frame[off]
        if vihl >> 4 != 4:
            return MALFORMED
        ihl = (vihl & 0x0F) * 4
        if ihl < 20 or n < off + ihl:
            return MALFORMED
        total = (frame[off + 2] << 8) | frame[off + 3]
        if frame[off + 9] != 6:
            return NOT_TCP
        frag = ((frame[off + 6] << 8) | frame[off + 7]) & 0x1FFF
        if frag:
            return MALFORMED
        if total == 0:
            # segmentation offload captures leave the length zeroed
            total = n - off
        elif total < ihl:
            return MALFORMED
        end = off + total
        if end > n:
            end_cap = n
        else:
            end_cap = end
        src = frame[off + 12:off + 16]
        dst = frame[off + 16:off + 20]
        tcp = off + ihl
    elif etype == 0x86DD:
        if n < off + 40:
            return MALFORMED
        if frame[off] >> 4 != 6:
            return MALFORMED
        plen = (frame[off + 4] << 8) | frame[off + 5]
        nxt = frame[off + 6]
        src = frame[off + 8:off + 24]
        dst = frame[off + 24:off + 40]
        tcp = off + 40
        end = tcp + plen if plen else n
        while nxt in _IPV6_EXT_HEADERS or nxt == 44:
            if n < tcp + 8:
                return MALFORMED
            if nxt == 44:
                if ((frame[tcp + 2] << 8) | frame[tcp + 3]) & 0xFFF8:
                    return MALFORMED
                hlen = 8
            else:
                hlen = (frame[tcp + 1] + 1) * 8
            nxt = frame[tcp]
            tcp += hlen
        if nxt != 6:
            return NOT_TCP
        if end < tcp:
            return MALFORMED
        end_cap = end if end <= n else n
    else:
        return NOT_TCP

    if end_cap < tcp + 20:
        return MALFORMED
    sport, dport, seq = unpack_from("!HHI", frame, tcp)
    doff = (frame[tcp + 12] >> 4) * 4
    if doff < 20 or end_cap < tcp + doff:
        return MALFORMED
    flags = frame[tcp + 13]
    start = tcp + doff
    return (src, dst, sport, dport, seq, flags, start, end_cap, end - start)


def update_histogram(counts, data):
    """Add the byte-value occurrences of ``data`` into ``counts`` (256 slots)."""
    for value, c in Counter(data).items():
        counts[value] += c


def describe(values):
    """Return ``(sum, max, min, mean, std)`` with population std; zeros if empty."""
    n = len(values)
    if n == 0:
        return (0.0, 0.0, 0.0, 0.0, 0.0)
    total = 0.0
    hi = lo = float(values[0])
    for v in values:
        total += v
        if v > hi:
            hi = v
        elif v < lo:
            lo = v
    mean = total / n
    # rounding can push the mean of identical values past the extremes
    if mean > hi:
        mean = float(hi)
    elif mean < lo:
        mean = float(lo)
    acc = 0.0
    for v in values:
        d = v - mean
        acc += d * d
    return (total, float(hi), float(lo), mean, sqrt(acc / n))
