# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled digest kernels; byte-identical twin of ``pure.py``."""

import hashlib
from decimal import Decimal

from grainledger.errors import EmptyBatch, NonCanonicalizable

cimport cython

cdef object _sha256 = hashlib.sha256


cdef str _escape_string(str s):
    cdef Py_ssize_t i, n = len(s)
    cdef Py_UCS4 ch
    cdef bint clean = True
    for i in range(n):
        ch = s[i]
        if ch == u'"' or ch == u'\\' or ch < 0x20:
            clean = False
            break
    if clean:
        return '"' + s + '"'
    out = ['"']
    for i in range(n):
        ch = s[i]
        if ch == u'"':
            out.append('\\"')
        elif ch == u'\\':
            out.append('\\\\')
        elif ch >= 0x20:
            out.append(s[i])
        elif ch == u'\n':
            out.append('\\n')
        elif ch == u'\t':
            out.append('\\t')
        elif ch == u'\r':
            out.append('\\r')
        elif ch == u'\b':
            out.append('\\b')
        elif ch == u'\f':
            out.append('\\f')
        else:
            out.append('\\u%04x' % <int>ch)
    out.append('"')
    return "".join(out)


cdef str _decimal_text(object d):
    if not d.is_finite():
        raise NonCanonicalizable("non-finite decimal %r" % d)
    if d == 0:
        return "0"
    return format(d.normalize(), "f")


cdef str _float_text(double f):
    if f != f or f in (float("inf"), float("-inf")):
        raise NonCanonicalizable("non-finite float %r" % f)
    return _decimal_text(Decimal(repr(f)))


cdef void _write(object value, list parts) except *:
    cdef Py_ssize_t i
    if value is None:
        parts.append("null")
    elif value is True:
        parts.append("true")
    elif value is False:
        parts.append("false")
    elif isinstance(value, str):
        parts.append(_escape_string(<str>value))
    elif isinstance(value, int):
        parts.append(repr(value))
    elif isinstance(value, Decimal):
        parts.append(_decimal_text(value))
    elif isinstance(value, float):
        parts.append(_float_text(<double>value))
    elif isinstance(value, dict):
        parts.append("{")
        first = True
        for key in sorted((<dict>value).keys()):
            if not isinstance(key, str):
                raise NonCanonicalizable("map key %r is not a string" % (key,))
            if not first:
                parts.append(",")
            first = False
            parts.append(_escape_string(<str>key))
            parts.append(":")
            _write((<dict>value)[key], parts)
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


def canonical_dumps(doc):
    """Serialize a document to deterministic canonical JSON bytes."""
    cdef list parts = []
    try:
        _write(doc, parts)
    except TypeError as exc:
        raise NonCanonicalizable(str(exc)) from exc
    return "".join(parts).encode("utf-8")


def sha256(data):
    return _sha256(data).digest()


def merkle_root(leaves):
    """Binary merkle root; an odd node at any level is paired with itself."""
    if not leaves:
        raise EmptyBatch("merkle root of an empty batch")
    cdef list level = list(leaves)
    cdef Py_ssize_t i, n
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[len(level) - 1])
        n = len(level)
        nxt = []
        for i in range(0, n, 2):
            nxt.append(_sha256(level[i] + level[i + 1]).digest())
        level = nxt
    return level[0]


@cython.cdivision(True)
def crc16_ccitt(data):
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    cdef const unsigned char[:] view = data
    cdef unsigned int crc = 0xFFFF
    cdef Py_ssize_t i, n = view.shape[0]
    cdef int bit
    for i in range(n):
        crc ^= (<unsigned int>view[i]) << 8
        for bit in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc
