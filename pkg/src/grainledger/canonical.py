"""Canonical document serialization and digest helpers.

All on-ledger bytes flow through here: envelopes, blocks, world-state
snapshots and receipts. ``canonical_loads`` parses numbers back to
``int``/``Decimal`` so a dump/load round trip is byte-stable.
"""
from __future__ import annotations

import json
from decimal import Decimal

from grainledger._kernels import (
    BACKEND,
    canonical_dumps,
    crc16_ccitt,
    decimal_text,
    merkle_root,
    sha256,
)
from grainledger.errors import NonCanonicalizable

ZERO_DIGEST = "0" * 64


def _reject_duplicate_keys(pairs):
    doc = {}
    for key, value in pairs:
        if key in doc:
            raise NonCanonicalizable("duplicate map key %r" % key)
        doc[key] = value
    return doc


def canonical_loads(data):
    """Parse canonical JSON bytes (or str); floats come back as Decimal."""
    try:
        if isinstance(data, (bytes, bytearray)):
            data = data.decode("utf-8")
        return json.loads(
            data,
            parse_float=Decimal,
            object_pairs_hook=_reject_duplicate_keys,
        )
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise NonCanonicalizable("invalid JSON: %s" % exc) from exc


def sha256_hex(data: bytes) -> str:
    return sha256(data).hex()


def doc_digest(doc) -> str:
    """Lowercase-hex SHA-256 of a document's canonical bytes."""
    return sha256(canonical_dumps(doc)).hex()


__all__ = [
    "BACKEND",
    "ZERO_DIGEST",
    "canonical_dumps",
    "canonical_loads",
    "crc16_ccitt",
    "decimal_text",
    "doc_digest",
    "merkle_root",
    "sha256",
    "sha256_hex",
]
