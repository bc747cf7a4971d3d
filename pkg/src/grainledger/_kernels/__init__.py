"""Backend selection for the digest kernels.

Imports the compiled extension when present, falling back to the pure
implementation. ``GRAINLEDGER_PURE=1`` forces the fallback (used by the
parity tests and the benchmark).
"""
import os

from grainledger._kernels import pure

if os.environ.get("GRAINLEDGER_PURE") == "1":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from grainledger._kernels import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

canonical_dumps = _impl.canonical_dumps
sha256 = _impl.sha256
merkle_root = _impl.merkle_root
crc16_ccitt = _impl.crc16_ccitt
decimal_text = pure.decimal_text

__all__ = [
    "BACKEND",
    "canonical_dumps",
    "sha256",
    "merkle_root",
    "crc16_ccitt",
    "decimal_text",
]
