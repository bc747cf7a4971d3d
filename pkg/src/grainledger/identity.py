"""Consortium identities: Ed25519 signing keys, participant records, ACL.

Participants, identities and ACL rules are plain documents because they
live in world state on the governance channel; this module owns their
shape, the signature scheme and the first-match ACL evaluation.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from grainledger.canonical import canonical_dumps
from grainledger.errors import RevokedIdentity, Unauthorized

ORGS = ("cooperative", "warehouse", "bank", "trading", "food_processor")
ROLES = (
    "producer",
    "qa_operator",
    "warehouse_operator",
    "trader",
    "bank_agent",
    "admin",
)
SCHEME_ED25519 = "ed25519"


@dataclass(frozen=True)
class KeyPair:
    """An Ed25519 keypair; hex at rest, deterministic signatures."""

    private_hex: str
    public_hex: str

    @classmethod
    def generate(cls) -> "KeyPair":
        key = Ed25519PrivateKey.generate()
        return cls._from_private(key)

    @classmethod
    def from_seed(cls, seed: str | bytes) -> "KeyPair":
        """Deterministic keypair for fixtures. Not for production keys."""
        if isinstance(seed, str):
            seed = seed.encode("utf-8")
        key = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())
        return cls._from_private(key)

    @classmethod
    def from_private_hex(cls, private_hex: str) -> "KeyPair":
        key = Ed25519PrivateKey.from_private_bytes(bytes.fromhex(private_hex))
        return cls._from_private(key)

    @classmethod
    def _from_private(cls, key: Ed25519PrivateKey) -> "KeyPair":
        from cryptography.hazmat.primitives import serialization

        priv = key.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        )
        pub = key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return cls(private_hex=priv.hex(), public_hex=pub.hex())

    def sign(self, data: bytes) -> str:
        key = Ed25519PrivateKey.from_private_bytes(bytes.fromhex(self.private_hex))
        return key.sign(data).hex()


def verify_signature(public_hex: str, signature_hex: str, data: bytes) -> bool:
    try:
        key = Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_hex))
        key.verify(bytes.fromhex(signature_hex), data)
        return True
    except (InvalidSignature, ValueError):
        return False


def make_participant(participant_id: str, org: str, role: str,
                     display_name: str = "") -> dict:
    if org not in ORGS:
        raise Unauthorized("unknown org %r" % org)
    if role not in ROLES:
        raise Unauthorized("unknown role %r" % role)
    return {
        "participant_id": participant_id,
        "org": org,
        "role": role,
        "display_name": display_name or participant_id,
    }


def make_identity(participant_id: str, public_hex: str, issued_at: int,
                  scheme: str = SCHEME_ED25519, revoked: bool = False) -> dict:
    return {
        "participant_id": participant_id,
        "public_key": public_hex,
        "scheme": scheme,
        "issued_at": issued_at,
        "revoked": revoked,
    }


def envelope_signing_bytes(envelope: dict) -> bytes:
    """Canonical bytes of an envelope with tx_id and signature excluded."""
    body = {k: v for k, v in envelope.items() if k not in ("tx_id", "signature")}
    return canonical_dumps(body)


def sign_envelope(envelope: dict, keypair: KeyPair,
                  identity_doc: dict | None = None) -> str:
    """Deterministic signature over the envelope's signing bytes.

    When the caller holds the signer's on-ledger identity record, passing it
    enforces the active-identity precondition.
    """
    if identity_doc is not None and identity_doc.get("revoked"):
        raise RevokedIdentity(
            "identity for %s is revoked" % identity_doc.get("participant_id")
        )
    return keypair.sign(envelope_signing_bytes(envelope))


def verify_envelope_signature(envelope: dict, public_hex: str) -> bool:
    sig = envelope.get("signature", {})
    if not isinstance(sig, dict) or sig.get("scheme") != SCHEME_ED25519:
        return False
    return verify_signature(
        public_hex, sig.get("value", ""), envelope_signing_bytes(envelope)
    )


class AccessControlList:
    """Ordered allow/deny rules; first match wins, implicit final deny."""

    def __init__(self, rules: list[dict] | None = None):
        self.rules = list(rules or [])

    @staticmethod
    def rule(role: str, contract_id: str, operation: str, allow: bool) -> dict:
        return {
            "role": role,
            "contract_id": contract_id,
            "operation": operation,
            "allow": allow,
        }

    @staticmethod
    def _op_matches(pattern: str, operation: str) -> bool:
        # only a trailing * wildcard is supported
        if pattern.endswith("*"):
            return operation.startswith(pattern[:-1])
        return operation == pattern

    def check(self, role: str, contract_id: str, operation: str) -> bool:
        for rule in self.rules:
            if rule["role"] != role and rule["role"] != "*":
                continue
            if rule["contract_id"] not in ("*", contract_id):
                continue
            if not self._op_matches(rule["operation"], operation):
                continue
            return bool(rule["allow"])
        return False

    def to_doc(self) -> dict:
        return {"rules": self.rules}

    @classmethod
    def from_doc(cls, doc: dict | None) -> "AccessControlList":
        return cls((doc or {}).get("rules", []))


def default_acl_rules() -> list[dict]:
    """Bootstrap ACL: admins govern, warehouse runs the facility, QA does intake."""
    r = AccessControlList.rule
    return [
        r("admin", "*", "*", True),
        r("warehouse_operator", "grain", "*", True),
        r("qa_operator", "grain", "record_*", True),
        r("qa_operator", "grain", "compute_discounts", True),
        r("qa_operator", "grain", "assign_silo", True),
        r("qa_operator", "grain", "register_silo", True),
    ]
