"""X.509 certificate field extraction on top of :mod:`tlsfeat.der`."""
from __future__ import annotations

import base64
import binascii
import hashlib
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone

from . import der
from .der import DerError, DerNode, child_list, decode_oid, parse_der_node

OID_RSA = "1.2.840.113549.1.1.1"
OID_RSA_PSS = "1.2.840.113549.1.1.10"
OID_EC = "1.2.840.10045.2.1"
OID_DSA = "1.2.840.10040.4.1"

CURVE_BITS = {
    "1.2.840.10045.3.1.1": 192,   # P-192
    "1.3.132.0.33": 224,          # P-224
    "1.2.840.10045.3.1.7": 256,   # P-256
    "1.3.132.0.34": 384,          # P-384
    "1.3.132.0.35": 521,          # P-521
    "1.3.132.0.10": 256,          # secp256k1
    "1.3.36.3.3.2.8.1.1.7": 256,  # brainpoolP256r1
    "1.3.36.3.3.2.8.1.1.11": 384,  # brainpoolP384r1
    "1.3.36.3.3.2.8.1.1.13": 512,  # brainpoolP512r1
}

# key sizes for algorithms whose size is fixed by the OID
FIXED_KEY_BITS = {
    "1.3.101.110": 253,  # X25519
    "1.3.101.111": 448,  # X448
    "1.3.101.112": 256,  # Ed25519
    "1.3.101.113": 456,  # Ed448
}

ATTRIBUTE_NAMES = {
    "2.5.4.3": "CN",
    "2.5.4.4": "SN",
    "2.5.4.5": "serialNumber",
    "2.5.4.6": "C",
    "2.5.4.7": "L",
    "2.5.4.8": "ST",
    "2.5.4.9": "street",
    "2.5.4.10": "O",
    "2.5.4.11": "OU",
    "2.5.4.12": "title",
    "2.5.4.42": "GN",
    "2.5.4.15": "businessCategory",
    "2.5.4.17": "postalCode",
    "1.2.840.113549.1.9.1": "emailAddress",
    "0.9.2342.19200300.100.1.25": "DC",
    "0.9.2342.19200300.100.1.1": "UID",
    "1.3.6.1.4.1.311.60.2.1.3": "jurisdictionC",
}

SIGNATURE_NAMES = {
    "1.2.840.113549.1.1.4": "md5WithRSAEncryption",
    "1.2.840.113549.1.1.5": "sha1WithRSAEncryption",
    "1.2.840.113549.1.1.10": "rsassaPss",
    "1.2.840.113549.1.1.11": "sha256WithRSAEncryption",
    "1.2.840.113549.1.1.12": "sha384WithRSAEncryption",
    "1.2.840.113549.1.1.13": "sha512WithRSAEncryption",
    "1.2.840.113549.1.1.14": "sha224WithRSAEncryption",
    "1.2.840.10045.4.1": "ecdsa-with-SHA1",
    "1.2.840.10045.4.3.2": "ecdsa-with-SHA256",
    "1.2.840.10045.4.3.3": "ecdsa-with-SHA384",
    "1.2.840.10045.4.3.4": "ecdsa-with-SHA512",
    "1.2.840.10040.4.3": "dsa-with-sha1",
    "2.16.840.1.101.3.4.3.2": "dsa_with_SHA256",
    "1.3.101.112": "ED25519",
    "1.3.101.113": "ED448",
}

_LATIN1_TAGS = (der.T61_STRING,)
_ASCII_TAGS = (der.PRINTABLE_STRING, der.IA5_STRING, der.VISIBLE_STRING, der.NUMERIC_STRING)

_TIME_TAIL = rb"(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})?(?:[.,](\d+))?(Z|[+-]\d{4})?$"
_UTC_RE = re.compile(rb"^(\d{2})" + _TIME_TAIL)
_GEN_RE = re.compile(rb"^(\d{4})" + _TIME_TAIL)


def cert_digest(data: bytes) -> str:
    return hashlib.sha256(bytes(data)).hexdigest()


@dataclass
class CertificateInfo:
    der_digest: str
    der_length: int
    parsed: bool = False
    version: int | None = None
    serial: str | None = None
    signature_algorithm: str | None = None
    issuer: list[tuple[str, str]] = field(default_factory=list)
    subject: list[tuple[str, str]] = field(default_factory=list)
    not_before: datetime | None = None
    not_after: datetime | None = None
    not_before_raw: str | None = None
    not_after_raw: str | None = None
    public_key_type: str | None = None
    public_key_bits: int | None = None
    extension_count: int = 0
    parse_warnings: list[str] = field(default_factory=list)
    error: str | None = None

    @property
    def signature_algorithm_name(self) -> str | None:
        return SIGNATURE_NAMES.get(self.signature_algorithm or "")

    def to_dict(self) -> dict:
        """JSON-ready mapping; absent values are omitted."""
        out = {"der_digest": self.der_digest, "der_length": self.der_length,
               "parsed": self.parsed}
        d = asdict(self)
        for key in ("version", "serial", "signature_algorithm"):
            if d[key] is not None:
                out[key] = d[key]
        if self.signature_algorithm_name:
            out["signature_algorithm_name"] = self.signature_algorithm_name
        for key in ("issuer", "subject"):
            out[key] = [_attr_dict(oid, value) for oid, value in getattr(self, key)]
        for key in ("not_before", "not_after"):
            ts = getattr(self, key)
            if ts is not None:
                out[key] = ts.strftime("%Y-%m-%dT%H:%M:%SZ")
            elif getattr(self, key + "_raw") is not None:
                out[key + "_raw"] = getattr(self, key + "_raw")
        if self.public_key_type is not None:
            out["public_key_type"] = self.public_key_type
        if self.public_key_bits is not None:
            out["public_key_bits"] = self.public_key_bits
        out["extension_count"] = self.extension_count
        out["parse_warnings"] = list(self.parse_warnings)
        if self.error is not None:
            out["error"] = self.error
        return out


def _attr_dict(oid: str, value: str) -> dict:
    d = {"oid": oid}
    name = ATTRIBUTE_NAMES.get(oid)
    if name:
        d["name"] = name
    d["value"] = value
    return d


def parse_time(node: DerNode, raw: bytes) -> datetime:
    """Decode a UTCTime or GeneralizedTime into an aware UTC datetime."""
    utc = node.tag == der.UTC_TIME
    m = (_UTC_RE if utc else _GEN_RE).match(raw)
    if m is None:
        raise ValueError(f"bad {'UTCTime' if utc else 'GeneralizedTime'} {raw!r}")
    year_s, mon, day, hour, minute, sec, frac, tz = m.groups()
    year = int(year_s)
    if utc:
        year += 2000 if year < 50 else 1900
    ts = datetime(year, int(mon), int(day), int(hour), int(minute),
                  int(sec or 0), tzinfo=timezone.utc)
    if frac:
        ts += timedelta(microseconds=int(frac[:6].ljust(6, b"0")))
    if tz and tz != b"Z":
        sign = 1 if tz[:1] == b"+" else -1
        ts -= sign * timedelta(hours=int(tz[1:3]), minutes=int(tz[3:5]))
    return ts


def _decode_string(node: DerNode, raw: bytes, warnings: list) -> str:
    tag = node.tag if node.tag_class == der.UNIVERSAL else -1
    if tag == der.UTF8_STRING:
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            warnings.append("invalid UTF8String")
            return raw.decode("utf-8", "replace")
    if tag in _ASCII_TAGS:
        try:
            return raw.decode("ascii")
        except UnicodeDecodeError:
            warnings.append("non-ASCII byte in ASCII string type")
            return raw.decode("latin-1")
    if tag in _LATIN1_TAGS:
        return raw.decode("latin-1")
    if tag == der.BMP_STRING:
        warnings.append("BMPString transcoded")
        return raw.decode("utf-16-be", "replace")
    if tag == der.UNIVERSAL_STRING:
        warnings.append("UniversalString transcoded")
        return raw.decode("utf-32-be", "replace")
    warnings.append(f"unsupported string tag {node.tag_class}:{node.tag}")
    return raw.hex()


def _parse_name(data, node: DerNode, warnings: list) -> list[tuple[str, str]]:
    if not node.is_universal(der.SEQUENCE):
        raise DerError("Name is not a SEQUENCE", node.offset)
    out = []
    for rdn in der.children(data, node):
        if not rdn.is_universal(der.SET):
            raise DerError("RDN is not a SET", rdn.offset)
        for atv in der.children(data, rdn):
            parts = child_list(data, atv)
            if len(parts) != 2 or not parts[0].is_universal(der.OID):
                raise DerError("malformed AttributeTypeAndValue", atv.offset)
            oid = decode_oid(parts[0].value(data))
            out.append((oid, _decode_string(parts[1], parts[1].value(data), warnings)))
    return out


def _serial_hex(raw: bytes, warnings: list) -> str:
    if not raw:
        raise DerError("empty serial")
    if raw[0] & 0x80:
        warnings.append("negative serial number")
    elif raw[0] == 0 and len(raw) > 1:
        raw = raw[1:]
    if len(raw) > 20:
        warnings.append(f"serial number is {len(raw)} octets")
    return raw.hex()


def _public_key(data, spki: DerNode, info: CertificateInfo) -> None:
    parts = child_list(data, spki)
    if len(parts) != 2 or not parts[1].is_universal(der.BIT_STRING):
        raise DerError("malformed SubjectPublicKeyInfo", spki.offset)
    alg = child_list(data, parts[0])
    if not alg or not alg[0].is_universal(der.OID):
        raise DerError("malformed key AlgorithmIdentifier", parts[0].offset)
    oid = decode_oid(alg[0].value(data))
    params = alg[1] if len(alg) > 1 else None
    bits = parts[1].value(data)
    if not bits:
        raise DerError("empty public key BIT STRING", parts[1].offset)
    key = bits[1:]
    if oid in (OID_RSA, OID_RSA_PSS):
        info.public_key_type = "rsa"
        seq = parse_der_node(key, 0)
        ints = child_list(key, seq)
        if not ints or not ints[0].is_universal(der.INTEGER):
            raise DerError("malformed RSAPublicKey", parts[1].offset)
        modulus = ints[0].value(key).lstrip(b"\x00")
        info.public_key_bits = int.from_bytes(modulus, "big").bit_length()
    elif oid == OID_EC:
        info.public_key_type = "ec"
        curve = None
        if params is not None and params.is_universal(der.OID):
            curve = decode_oid(params.value(data))
        if curve in CURVE_BITS:
            info.public_key_bits = CURVE_BITS[curve]
        else:
            info.parse_warnings.append(f"unknown EC curve {curve or 'explicit parameters'}")
            if key and key[0] == 4:
                info.public_key_bits = (len(key) - 1) // 2 * 8
    elif oid == OID_DSA:
        info.public_key_type = "dsa"
        if params is None or not params.is_universal(der.SEQUENCE):
            info.parse_warnings.append("DSA parameters absent")
        else:
            pqg = child_list(data, params)
            if not pqg or not pqg[0].is_universal(der.INTEGER):
                raise DerError("malformed DSA parameters", params.offset)
            p = pqg[0].value(data).lstrip(b"\x00")
            info.public_key_bits = int.from_bytes(p, "big").bit_length()
    else:
        info.public_key_type = f"other:{oid}"
        info.public_key_bits = FIXED_KEY_BITS.get(oid, (len(bits) - 1) * 8 - bits[0])


def parse_certificate(data: bytes) -> CertificateInfo:
    """Extract certificate features; structural failures leave ``parsed`` False.

    Fields decoded before a failure are kept, and ``error`` says what broke.
    """
    data = bytes(data)
    info = CertificateInfo(cert_digest(data), len(data))
    w = info.parse_warnings
    try:
        cert = parse_der_node(data, 0)
        if not cert.is_universal(der.SEQUENCE):
            raise DerError("Certificate is not a SEQUENCE", 0)
        if cert.end != len(data):
            w.append(f"{len(data) - cert.end} trailing bytes after certificate")
        top = child_list(data, cert)
        if len(top) != 3 or not top[0].is_universal(der.SEQUENCE):
            raise DerError("Certificate must hold tbsCertificate, algorithm, signature", 0)
        tbs = child_list(data, top[0])
        i = 0
        version = 0
        if tbs and tbs[0].is_context(0):
            inner = child_list(data, tbs[0])
            if len(inner) != 1 or not inner[0].is_universal(der.INTEGER):
                raise DerError("malformed version", tbs[0].offset)
            version = der.decode_integer(inner[0].value(data))
            i = 1
        if version in (0, 1, 2):
            info.version = version + 1
        else:
            w.append(f"unknown version value {version}")
        if len(tbs) < i + 6:
            raise DerError("tbsCertificate too short", top[0].offset)
        serial, sig, issuer, validity, subject, spki = tbs[i:i + 6]
        if not serial.is_universal(der.INTEGER):
            raise DerError("serial is not an INTEGER", serial.offset)
        info.serial = _serial_hex(serial.value(data), w)
        sig_parts = child_list(data, sig)
        if not sig_parts or not sig_parts[0].is_universal(der.OID):
            raise DerError("malformed signature AlgorithmIdentifier", sig.offset)
        inner_sig = info.signature_algorithm = decode_oid(sig_parts[0].value(data))
        info.issuer = _parse_name(data, issuer, w)
        times = child_list(data, validity)
        if len(times) != 2:
            raise DerError("Validity must hold two times", validity.offset)
        for t, attr in zip(times, ("not_before", "not_after")):
            if not (t.is_universal(der.UTC_TIME) or t.is_universal(der.GENERALIZED_TIME)):
                raise DerError(f"{attr} is not a time", t.offset)
            raw = t.value(data)
            setattr(info, attr + "_raw", raw.decode("latin-1"))
            try:
                setattr(info, attr, parse_time(t, raw))
            except (ValueError, OverflowError) as exc:
                w.append(f"{attr}: {exc}")
        if info.not_before and info.not_after and info.not_before > info.not_after:
            w.append("not_before is after not_after")
        info.subject = _parse_name(data, subject, w)
        _public_key(data, spki, info)
        for extra in tbs[i + 6:]:
            if extra.is_context(3):
                exts = child_list(data, extra)
                if len(exts) != 1 or not exts[0].is_universal(der.SEQUENCE):
                    raise DerError("malformed extensions", extra.offset)
                info.extension_count = sum(1 for _ in der.children(data, exts[0]))
        outer = child_list(data, top[1])
        if not outer or not outer[0].is_universal(der.OID):
            raise DerError("malformed signatureAlgorithm", top[1].offset)
        info.signature_algorithm = decode_oid(outer[0].value(data))
        if info.signature_algorithm != inner_sig:
            w.append("signature algorithm differs from tbsCertificate.signature")
        if not top[2].is_universal(der.BIT_STRING):
            raise DerError("signature is not a BIT STRING", top[2].offset)
        info.parsed = True
    except (DerError, ValueError, IndexError, OverflowError) as exc:
        info.error = str(exc)
    return info


_PEM_RE = re.compile(rb"-----BEGIN [A-Z0-9 ]+-----(.*?)-----END [A-Z0-9 ]+-----", re.S)


def load_certificate_bytes(raw: bytes) -> bytes:
    """Accept DER, PEM, or bare base64 and return DER bytes."""
    if raw[:1] == b"\x30":
        return raw
    m = _PEM_RE.search(raw)
    body = m.group(1) if m else raw
    try:
        return base64.b64decode(b"".join(body.split()), validate=True)
    except (binascii.Error, ValueError):
        return raw
