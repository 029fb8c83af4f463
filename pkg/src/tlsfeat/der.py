"""Minimal definite-length DER decoding."""
from __future__ import annotations

from typing import Iterator, NamedTuple

UNIVERSAL = 0
APPLICATION = 1
CONTEXT = 2
PRIVATE = 3

BOOLEAN = 0x01
INTEGER = 0x02
BIT_STRING = 0x03
OCTET_STRING = 0x04
NULL = 0x05
OID = 0x06
UTF8_STRING = 0x0C
SEQUENCE = 0x10
SET = 0x11
NUMERIC_STRING = 0x12
PRINTABLE_STRING = 0x13
T61_STRING = 0x14
IA5_STRING = 0x16
UTC_TIME = 0x17
GENERALIZED_TIME = 0x18
VISIBLE_STRING = 0x1A
UNIVERSAL_STRING = 0x1C
BMP_STRING = 0x1E


class DerError(ValueError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} at offset {offset}")
        self.offset = offset


class DerNode(NamedTuple):
    tag_class: int
    tag: int
    constructed: bool
    offset: int  # start of the identifier octet
    header_len: int
    length: int

    @property
    def start(self) -> int:
        """Offset of the first value octet."""
        return self.offset + self.header_len

    @property
    def end(self) -> int:
        return self.offset + self.header_len + self.length

    def is_universal(self, tag: int) -> bool:
        return self.tag_class == UNIVERSAL and self.tag == tag

    def is_context(self, tag: int) -> bool:
        return self.tag_class == CONTEXT and self.tag == tag

    def value(self, data) -> bytes:
        return bytes(data[self.start:self.end])


def parse_der_node(data, offset: int = 0, limit: int | None = None) -> DerNode:
    """Decode the TLV header at ``offset``; the value must fit before ``limit``."""
    end = len(data) if limit is None else limit
    if offset >= end:
        raise DerError("no data", offset)
    pos = offset
    ident = data[pos]
    pos += 1
    tag_class = ident >> 6
    constructed = bool(ident & 0x20)
    tag = ident & 0x1F
    if tag == 0x1F:
        tag = 0
        for i in range(5):
            if pos >= end:
                raise DerError("truncated tag", offset)
            if i == 4:
                raise DerError("tag number too long", offset)
            b = data[pos]
            pos += 1
            tag = (tag << 7) | (b & 0x7F)
            if not b & 0x80:
                break
    if pos >= end:
        raise DerError("truncated length", offset)
    first = data[pos]
    pos += 1
    if first < 0x80:
        length = first
    elif first == 0x80:
        raise DerError("indefinite length", offset)
    else:
        n = first & 0x7F
        if n > 4:
            raise DerError("length field too long", offset)
        if pos + n > end:
            raise DerError("truncated length", offset)
        length = int.from_bytes(bytes(data[pos:pos + n]), "big")
        pos += n
    if pos + length > end:
        raise DerError("length overruns buffer", offset)
    return DerNode(tag_class, tag, constructed, offset, pos - offset, length)


def children(data, node: DerNode) -> Iterator[DerNode]:
    """Iterate the nodes that tile a constructed node's value exactly."""
    pos = node.start
    end = node.end
    while pos < end:
        child = parse_der_node(data, pos, end)
        yield child
        pos = child.end


def child_list(data, node: DerNode) -> list[DerNode]:
    return list(children(data, node))


def decode_oid(raw: bytes) -> str:
    if not raw:
        raise DerError("empty OID")
    if raw[-1] & 0x80:
        raise DerError("truncated OID")
    arcs = []
    value = 0
    for b in raw:
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            arcs.append(value)
            value = 0
    first = arcs[0]
    if first < 40:
        head = [0, first]
    elif first < 80:
        head = [1, first - 40]
    else:
        head = [2, first - 80]
    return ".".join(str(a) for a in head + arcs[1:])


def decode_integer(raw: bytes) -> int:
    if not raw:
        raise DerError("empty INTEGER")
    return int.from_bytes(raw, "big", signed=True)
