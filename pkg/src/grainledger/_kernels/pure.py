"""Pure-Python digest kernels: canonical serialization, merkle trees, CRC-16.

This is the reference implementation. A compiled twin lives in
``_speedups.pyx``; the two must produce byte-identical output for every
input (enforced by the parity tests).

Canonical form: UTF-8 JSON, map keys sorted by code point (equivalently by
UTF-8 bytes), no insignificant whitespace, decimals rendered without
trailing zeros or exponents.
"""
from __future__ import annotations

import hashlib
import math
import re
from decimal import Decimal

from grainledger.errors import EmptyBatch, NonCanonicalizable

_NEEDS_ESCAPE = re.compile(r'["\\\x00-\x1f]')

_SHORT_ESCAPES = {
    '"': '\\"',
    "\\": "\\\\",
    "\b": "\\b",
    "\f": "\\f",
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _escape_string(s: str) -> str:
    if _NEEDS_ESCAPE.search(s) is None:
        return '"' + s + '"'
    out = ['"']
    for ch in s:
        esc = _SHORT_ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ch < "\x20":
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def decimal_text(d: Decimal) -> str:
    """Render a Decimal without trailing zeros or an exponent."""
    if not d.is_finite():
        raise NonCanonicalizable("non-finite decimal %r" % d)
    if d == 0:
        return "0"
    return format(d.normalize(), "f")


def _float_text(f: float) -> str:
    if math.isnan(f) or math.isinf(f):
        raise NonCanonicalizable("non-finite float %r" % f)
    return decimal_text(Decimal(repr(f)))


def _write(value, parts: list) -> None:
    if value is None:
        parts.append("null")
    elif value is True:
        parts.append("true")
    elif value is False:
        parts.append("false")
    elif isinstance(value, str):
        parts.append(_escape_string(value))
    elif isinstance(value, int):
        parts.append(repr(value))
    elif isinstance(value, Decimal):
        parts.append(decimal_text(value))
    elif isinstance(value, float):
        parts.append(_float_text(value))
    elif isinstance(value, dict):
        parts.append("{")
        first = True
        for key in sorted(value.keys()):
            if not isinstance(key, str):
                raise NonCanonicalizable("map key %r is not a string" % (key,))
            if not first:
                parts.append(",")
            first = False
            parts.append(_escape_string(key))
            parts.append(":")
            _write(value[key], parts)
        parts.append("}")
    elif isinstance(value, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(value):
            if i:
                parts.append(",")
            _write(item, parts)
        parts.append("]")
    else:
        raise NonCanonicalizable("unsupported type %s" % type(value).__name__)


def canonical_dumps(doc) -> bytes:
    """Serialize a document to deterministic canonical JSON bytes."""
    parts: list = []
    try:
        _write(doc, parts)
    except TypeError as exc:  # unorderable mixed-type keys
        raise NonCanonicalizable(str(exc)) from exc
    return "".join(parts).encode("utf-8")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def merkle_root(leaves) -> bytes:
    """Binary merkle root; an odd node at any level is paired with itself."""
    if not leaves:
        raise EmptyBatch("merkle root of an empty batch")
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            hashlib.sha256(level[i] + level[i + 1]).digest()
            for i in range(0, len(level), 2)
        ]
    return level[0]


def crc16_ccitt(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc
