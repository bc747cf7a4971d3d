"""Append-only hash-chained block store over a versioned world state.

Documents all the way down: envelopes, read-write sets and blocks are
canonical-JSON documents so every digest is reproducible from bytes on
disk. Versions are (block-height, tx-index) pairs; multi-version
validation happens at commit, with invalid transactions retained in the
block under a validity flag.
"""
from __future__ import annotations

import os
import struct
from typing import Iterable, Iterator

from grainledger import identity as ids
from grainledger.canonical import (
    ZERO_DIGEST,
    canonical_dumps,
    canonical_loads,
    doc_digest,
    merkle_root,
    sha256_hex,
)
from grainledger.errors import (
    BadHeight,
    BadPrevHash,
    GrainLedgerError,
    NonCanonicalizable,
)

Version = tuple[int, int]

# height-0 operations that predate any endorsement infrastructure
GENESIS_OPERATIONS = ("bootstrap", "channel_config", "deploy")


# --- envelopes ---------------------------------------------------------------

def build_envelope(channel_id: str, contract_id: str, operation: str, args,
                   submitter: str, timestamp: int) -> dict:
    return {
        "channel_id": channel_id,
        "contract_id": contract_id,
        "operation": operation,
        "args": args,
        "submitter": submitter,
        "timestamp": timestamp,
    }


def compute_tx_id(envelope: dict) -> str:
    return sha256_hex(ids.envelope_signing_bytes(envelope))


def finalize_envelope(envelope: dict, keypair: ids.KeyPair,
                      identity_doc: dict | None = None) -> dict:
    """Sign and id the envelope; returns the same dict, completed."""
    signature = ids.sign_envelope(envelope, keypair, identity_doc)
    envelope["tx_id"] = compute_tx_id(envelope)
    envelope["signature"] = {"scheme": ids.SCHEME_ED25519, "value": signature}
    return envelope


# --- read-write sets ----------------------------------------------------------

def rwset_digest(rwset: dict) -> str:
    return doc_digest(rwset)


def endorsement_signing_bytes(digest_hex: str) -> bytes:
    return digest_hex.encode("ascii")


def make_endorsement(node_id: str, org: str, rwset: dict,
                     keypair: ids.KeyPair) -> dict:
    digest = rwset_digest(rwset)
    return {
        "node_id": node_id,
        "org": org,
        "rwset_digest": digest,
        "signature": keypair.sign(endorsement_signing_bytes(digest)),
    }


# --- blocks --------------------------------------------------------------------

def make_tx_record(envelope: dict, rwset: dict, endorsements: list[dict]) -> dict:
    return {
        "envelope": envelope,
        "rwset": rwset,
        "endorsements": endorsements,
        "valid": None,
        "reason": None,
    }


def transactions_merkle_root(tx_records: list[dict]) -> str:
    leaves = [bytes.fromhex(t["envelope"]["tx_id"]) for t in tx_records]
    return merkle_root(leaves).hex()


def build_block(height: int, prev_hash: str, channel_id: str,
                tx_records: list[dict], created_at: int) -> dict:
    return {
        "height": height,
        "prev_hash": prev_hash,
        "merkle_root": transactions_merkle_root(tx_records),
        "channel_id": channel_id,
        "transactions": tx_records,
        "created_at": created_at,
    }


def block_digest(block: dict) -> str:
    body = {k: v for k, v in block.items() if k != "digest"}
    return doc_digest(body)


def seal_block(block: dict) -> dict:
    block["digest"] = block_digest(block)
    return block


# --- world state -----------------------------------------------------------------

class WorldState:
    """Versioned key-value state for one channel."""

    def __init__(self):
        self.entries: dict[str, tuple[object, Version]] = {}

    def get(self, key: str):
        return self.entries.get(key)

    def get_value(self, key: str):
        entry = self.entries.get(key)
        return entry[0] if entry else None

    def put(self, key: str, value, version: Version) -> None:
        self.entries[key] = (value, version)

    def version_of(self, key: str) -> Version | None:
        entry = self.entries.get(key)
        return entry[1] if entry else None

    def scan(self, prefix: str) -> Iterator[tuple[str, object]]:
        for key in sorted(self.entries):
            if key.startswith(prefix):
                yield key, self.entries[key][0]

    def to_snapshot_doc(self) -> dict:
        return {
            "entries": {
                key: {"value": value, "version": list(version)}
                for key, (value, version) in self.entries.items()
            }
        }

    def export_snapshot(self) -> bytes:
        return canonical_dumps(self.to_snapshot_doc())

    def state_hash(self) -> str:
        return sha256_hex(self.export_snapshot())


# --- validation -------------------------------------------------------------------

class GovernanceView:
    """Read-only identity/ACL lookups backed by the governance world state."""

    REG_PARTICIPANT = "com.gebn.Participant"
    REG_IDENTITY = "com.gebn.Identity"
    REG_NODE = "com.gebn.Node"
    REG_CHANNEL = "com.gebn.Channel"
    REG_POLICY = "com.gebn.Policy"
    ACL_KEY = "com.gebn.Acl#main"

    def __init__(self, state: WorldState):
        self._state = state

    def participant(self, participant_id: str) -> dict | None:
        return self._state.get_value(self.REG_PARTICIPANT + "#" + participant_id)

    def identity_record(self, participant_id: str) -> dict | None:
        return self._state.get_value(self.REG_IDENTITY + "#" + participant_id)

    def node_record(self, node_id: str) -> dict | None:
        return self._state.get_value(self.REG_NODE + "#" + node_id)

    def channel_config(self, channel_id: str) -> dict | None:
        return self._state.get_value(self.REG_CHANNEL + "#" + channel_id)

    def policy_rule(self, policy_id: str) -> str | None:
        doc = self._state.get_value(self.REG_POLICY + "#" + policy_id)
        return doc["rule"] if doc else None

    def acl(self) -> ids.AccessControlList:
        return ids.AccessControlList.from_doc(self._state.get_value(self.ACL_KEY))


def _bootstrap_public_key(envelope: dict) -> str | None:
    for ident in envelope["args"].get("identities", []):
        if ident.get("participant_id") == envelope.get("submitter"):
            return ident.get("public_key")
    return None


def _endorsement_policy_met(rule: str, endorsing_orgs: set[str],
                            member_orgs: list[str]) -> bool:
    members = set(member_orgs)
    if not endorsing_orgs or not endorsing_orgs.issubset(members):
        return False
    if rule == "ANY_ONE":
        return len(endorsing_orgs) >= 1
    if rule == "MAJORITY_ORGS":
        return len(endorsing_orgs) >= len(members) // 2 + 1
    if rule == "ALL_ORGS":
        return endorsing_orgs == members
    return False


def _is_genesis_config_tx(block: dict, envelope: dict) -> bool:
    return block["height"] == 0 and envelope["operation"] in GENESIS_OPERATIONS


def validate_transaction(state: WorldState, block: dict, tx_record: dict,
                         gov: GovernanceView, channel_conf: dict | None) -> str | None:
    """Returns None when VALID, else the invalidity reason."""
    envelope = tx_record["envelope"]

    if compute_tx_id(envelope) != envelope.get("tx_id"):
        return "TxIdMismatch"

    genesis_tx = _is_genesis_config_tx(block, envelope)
    if genesis_tx and envelope["operation"] == "bootstrap":
        public_key = _bootstrap_public_key(envelope)
    else:
        ident = gov.identity_record(envelope["submitter"])
        if ident is None:
            return "UnknownIdentity"
        if ident.get("revoked"):
            return "RevokedIdentity"
        public_key = ident["public_key"]
    if not public_key or not ids.verify_envelope_signature(envelope, public_key):
        return "BadSignature"

    if not genesis_tx:
        if channel_conf is None:
            return "UnknownChannel"
        rule = gov.policy_rule(channel_conf["endorsement_policy"])
        if rule is None:
            return "UnknownPolicy"
        digest = rwset_digest(tx_record["rwset"])
        orgs = set()
        for end in tx_record["endorsements"]:
            if end["rwset_digest"] != digest:
                return "EndorsementDigestMismatch"
            node = gov.node_record(end["node_id"])
            if node is None or node["org"] != end["org"]:
                return "UnknownEndorser"
            if not ids.verify_signature(
                node["public_key"], end["signature"],
                endorsement_signing_bytes(digest),
            ):
                return "BadEndorsementSignature"
            orgs.add(end["org"])
        if not _endorsement_policy_met(rule, orgs, channel_conf["member_orgs"]):
            return "PolicyNotMet"

    for key, version in tx_record["rwset"]["reads"]:
        current = state.version_of(key)
        recorded = tuple(version) if version is not None else None
        if current != recorded:
            return "MvccConflict"
    return None


def validate_and_commit(state: WorldState, block: dict, gov: GovernanceView,
                        channel_conf: dict | None):
    """Apply a block in order; returns (flags, events of VALID transactions).

    flags is a list of (valid, reason) per transaction. Writes of INVALID
    transactions are skipped; written versions become (height, tx_index).
    """
    flags: list[tuple[bool, str | None]] = []
    events: list[dict] = []
    for index, tx_record in enumerate(block["transactions"]):
        reason = validate_transaction(state, block, tx_record, gov, channel_conf)
        if reason is None:
            for key, value in tx_record["rwset"]["writes"]:
                state.put(key, value, (block["height"], index))
            for event in tx_record["rwset"]["events"]:
                events.append({
                    "event_name": event["event_name"],
                    "payload": event["payload"],
                    "tx_id": tx_record["envelope"]["tx_id"],
                    "block_height": block["height"],
                    "tx_index": index,
                })
            flags.append((True, None))
        else:
            flags.append((False, reason))
    return flags, events


def seal_flags(block: dict, flags: list[tuple[bool, str | None]]) -> dict:
    for tx_record, (valid, reason) in zip(block["transactions"], flags):
        tx_record["valid"] = valid
        tx_record["reason"] = reason
    return seal_block(block)


# --- persistence --------------------------------------------------------------------

_LEN = struct.Struct(">I")


class BlockRecordError(GrainLedgerError):
    """A persisted block record failed to parse."""


def append_block_record(path: str, block: dict) -> None:
    data = canonical_dumps(block)
    with open(path, "ab") as fh:
        fh.write(_LEN.pack(len(data)))
        fh.write(data)


def iter_block_records(path: str) -> Iterator[dict]:
    """Stream persisted blocks; raises BlockRecordError on a corrupt record."""
    if not os.path.exists(path):
        return
    with open(path, "rb") as fh:
        index = 0
        while True:
            header = fh.read(4)
            if not header:
                return
            if len(header) < 4:
                raise BlockRecordError("record %d: truncated length prefix" % index)
            (length,) = _LEN.unpack(header)
            data = fh.read(length)
            if len(data) < length:
                raise BlockRecordError("record %d: truncated body" % index)
            try:
                block = canonical_loads(data)
            except NonCanonicalizable as exc:
                raise BlockRecordError("record %d: %s" % (index, exc)) from exc
            if not isinstance(block, dict):
                raise BlockRecordError("record %d: not a block document" % index)
            yield block
            index += 1


class BlockStore:
    """Per-channel chain: in-memory list plus an append-only record file."""

    def __init__(self, path: str | None = None):
        self.path = path
        self.blocks: list[dict] = []
        if path and os.path.exists(path):
            for block in iter_block_records(path):
                self._check_link(block)
                self.blocks.append(block)

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def tip_digest(self) -> str:
        if not self.blocks:
            return ZERO_DIGEST
        return self.blocks[-1]["digest"]

    def get(self, height: int) -> dict:
        return self.blocks[height]

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)

    def _check_link(self, block: dict) -> None:
        expected_height = self.height + 1
        if block["height"] != expected_height:
            raise BadHeight(
                "expected height %d, got %d" % (expected_height, block["height"])
            )
        expected_prev = self.tip_digest if self.blocks else ZERO_DIGEST
        if block["prev_hash"] != expected_prev:
            raise BadPrevHash("block %d prev_hash mismatch" % block["height"])

    def append(self, block: dict) -> None:
        self._check_link(block)
        self.blocks.append(block)
        if self.path:
            append_block_record(self.path, block)


# --- audit ------------------------------------------------------------------------

def _verify_block(block: dict, height: int, prev_digest: str,
                  gov: GovernanceView | None, failures: list[dict]) -> str:
    def fail(kind: str, detail: str, tx_id: str | None = None) -> None:
        entry = {"height": height, "kind": kind, "detail": detail}
        if tx_id:
            entry["tx_id"] = tx_id
        failures.append(entry)

    if block.get("height") != height:
        fail("height", "expected %d, stored %r" % (height, block.get("height")))
    if block.get("prev_hash") != prev_digest:
        fail("prev_hash", "link to previous block broken")
    stored_digest = block.get("digest", "")
    recomputed = block_digest(block)
    if recomputed != stored_digest:
        fail("digest", "stored digest does not match block content")
    try:
        expected_merkle = transactions_merkle_root(block["transactions"])
    except (KeyError, TypeError, ValueError, GrainLedgerError) as exc:
        fail("merkle", "cannot recompute merkle root: %s" % exc)
        expected_merkle = None
    if expected_merkle is not None and block.get("merkle_root") != expected_merkle:
        fail("merkle", "merkle root mismatch")

    for tx_record in block.get("transactions", []):
        envelope = tx_record.get("envelope", {})
        tx_id = envelope.get("tx_id")
        try:
            if compute_tx_id(envelope) != tx_id:
                fail("tx_id", "tx_id does not match envelope content", tx_id)
                continue
        except (NonCanonicalizable, TypeError) as exc:
            fail("tx_id", "envelope not canonicalizable: %s" % exc, tx_id)
            continue
        if gov is None:
            continue
        if (block.get("height") == 0
                and envelope.get("operation") == "bootstrap"):
            public_key = _bootstrap_public_key(envelope)
        else:
            ident = gov.identity_record(envelope.get("submitter", ""))
            public_key = ident["public_key"] if ident else None
        if not public_key:
            fail("signature", "no identity for submitter %r"
                 % envelope.get("submitter"), tx_id)
        elif not ids.verify_envelope_signature(envelope, public_key):
            fail("signature", "envelope signature does not verify", tx_id)
        for end in tx_record.get("endorsements", []):
            node = gov.node_record(end.get("node_id", ""))
            if node is None:
                fail("endorsement", "unknown endorsing node %r"
                     % end.get("node_id"), tx_id)
            elif not ids.verify_signature(
                node["public_key"], end.get("signature", ""),
                endorsement_signing_bytes(end.get("rwset_digest", "")),
            ):
                fail("endorsement", "endorsement signature does not verify", tx_id)
    return stored_digest


def verify_chain(blocks: Iterable[dict], gov: GovernanceView | None = None) -> dict:
    """Full integrity audit: digests, links, merkle roots, signatures.

    ``blocks`` may be a BlockStore, a list, or the iterator from
    ``iter_block_records`` (parse failures are reported, not raised).
    """
    failures: list[dict] = []
    prev_digest = ZERO_DIGEST
    height = 0
    try:
        for block in blocks:
            prev_digest = _verify_block(block, height, prev_digest, gov, failures)
            height += 1
    except BlockRecordError as exc:
        failures.append({"height": height, "kind": "record", "detail": str(exc)})
    if failures:
        return {
            "status": "failed",
            "first_bad_height": min(f["height"] for f in failures),
            "blocks_checked": height,
            "failures": failures,
        }
    return {
        "status": "intact",
        "first_bad_height": None,
        "blocks_checked": height,
        "failures": [],
    }
