# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors ``_purekernels`` name for name."""
from libc.math cimport sqrt

cdef enum:
    NOT_TCP_CODE = 0
    MALFORMED_CODE = 1

NOT_TCP = NOT_TCP_CODE
MALFORMED = MALFORMED_CODE

LINKTYPE_ETHERNET = 1
LINKTYPE_LINUX_SLL = 113


cdef inline unsigned int _u16(const unsigned char[:] b, Py_ssize_t i) nogil:
    return (b[i] << 8) | b[i + 1]


def decode_frame(const unsigned char[:] frame, int linktype):
    cdef Py_ssize_t n = frame.shape[0]
    cdef Py_ssize_t off, tcp, end, end_cap, ihl, total, plen, hlen, doff, start
    cdef unsigned int etype, nxt, seq
    if linktype == 1:
        if n < 14:
            return MALFORMED_CODE
        off = 12
        etype = _u16(frame, 12)
        while etype == 0x8100 or etype == 0x88A8 or etype == 0x9100:
            off += 4
            if n < off + 2:
                return MALFORMED_CODE
            etype = _u16(frame, off)
        off += 2
    elif linktype == 113:
        if n < 16:
            return MALFORMED_CODE
        etype = _u16(frame, 14)
        off = 16
    else:
        return MALFORMED_CODE

    if etype == 0x0800:
        if n < off + 20:
            return MALFORMED_CODE
        if frame[off] >> 4 != 4:
            return MALFORMED_CODE
        ihl = (frame[off] & 0x0F) * 4
        if ihl < 20 or n < off + ihl:
            return MALFORMED_CODE
        total = _u16(frame, off + 2)
        if frame[off + 9] != 6:
            return NOT_TCP_CODE
        if _u16(frame, off + 6) & 0x1FFF:
            return MALFORMED_CODE
        if total == 0:
            total = n - off
        elif total < ihl:
            return MALFORMED_CODE
        end = off + total
        end_cap = end if end <= n else n
        src = bytes(frame[off + 12:off + 16])
        dst = bytes(frame[off + 16:off + 20])
        tcp = off + ihl
    elif etype == 0x86DD:
        if n < off + 40:
            return MALFORMED_CODE
        if frame[off] >> 4 != 6:
            return MALFORMED_CODE
        plen = _u16(frame, off + 4)
        nxt = frame[off + 6]
        src = bytes(frame[off + 8:off + 24])
        dst = bytes(frame[off + 24:off + 40])
        tcp = off + 40
        end = tcp + plen if plen else n
        while nxt == 0 or nxt == 43 or nxt == 60 or nxt == 44:
            if n < tcp + 8:
                return MALFORMED_CODE
            if nxt == 44:
                if _u16(frame, tcp + 2) & 0xFFF8:
                    return MALFORMED_CODE
                hlen = 8
            else:
                hlen = (frame[tcp + 1] + 1) * 8
            nxt = frame[tcp]
            tcp += hlen
        if nxt != 6:
            return NOT_TCP_CODE
        if end < tcp:
            return MALFORMED_CODE
        end_cap = end if end <= n else n
    else:
        return NOT_TCP_CODE

    if end_cap < tcp + 20:
        return MALFORMED_CODE
    doff = (frame[tcp + 12] >> 4) * 4
    if doff < 20 or end_cap < tcp + doff:
        return MALFORMED_CODE
    seq = ((<unsigned int>frame[tcp + 4] << 24) | (frame[tcp + 5] << 16)
           | (frame[tcp + 6] << 8) | frame[tcp + 7])
    start = tcp + doff
    return (src, dst, _u16(frame, tcp), _u16(frame, tcp + 2), seq,
            frame[tcp + 13], start, end_cap, end - start)


def update_histogram(unsigned long long[:] counts, const unsigned char[:] data):
    cdef Py_ssize_t i, n = data.shape[0]
    if counts.shape[0] < 256:
        raise ValueError("counts needs 256 slots")
    with nogil:
        for i in range(n):
            counts[data[i]] += 1


def describe(values):
    cdef Py_ssize_t i, n = len(values)
    cdef double total = 0.0, hi, lo, mean, acc = 0.0, v, d
    if n == 0:
        return (0.0, 0.0, 0.0, 0.0, 0.0)
    cdef double[::1] buf = _as_doubles(values, n)
    hi = lo = buf[0]
    for i in range(n):
        v = buf[i]
        total += v
        if v > hi:
            hi = v
        elif v < lo:
            lo = v
    mean = total / n
    if mean > hi:
        mean = hi
    elif mean < lo:
        mean = lo
    for i in range(n):
        d = buf[i] - mean
        acc += d * d
    return (total, hi, lo, mean, sqrt(acc / n))


cdef double[::1] _as_doubles(values, Py_ssize_t n):
    from array import array
    cdef double[::1] out = array("d", values)
    return out
