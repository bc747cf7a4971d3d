"""Deterministic smart-contract execution.

Contracts are compiled-in procedures registered by id; a deploy
transaction records id, version and a manifest hash on the channel so
invocation is gated by on-ledger state. Execution happens against a
committed snapshot through a transaction context that records every read
(with version) and buffers writes and events into a read-write set.
"""
from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal

from grainledger import identity as ids
from grainledger.canonical import doc_digest
from grainledger.errors import (
    AclDenied,
    AssetNotFound,
    ContractAbort,
    DuplicateAsset,
    DuplicateChannel,
    DuplicateId,
    StaleVersion,
    UnknownContract,
    UnknownOperation,
)
from grainledger.ledger import GovernanceView, WorldState

LIFECYCLE_CONTRACT = "_lifecycle"
CONTRACT_STATE_PREFIX = "_contracts"

_Q4 = Decimal("0.0001")


def q4(value) -> Decimal:
    """Exact decimal with half-even rounding to 4 fractional digits."""
    return Decimal(value).quantize(_Q4, rounding=ROUND_HALF_EVEN)


class TransactionContext:
    """Recorded view of state handed to contract procedures.

    Reads hit the committed snapshot exactly once per key and are recorded
    with the version seen; writes are buffered (read-your-writes) and
    events queued, so the whole effect of an invocation is the resulting
    read-write set.
    """

    def __init__(self, channel_id: str, submitter: dict, args, timestamp: int,
                 state: WorldState):
        self.channel_id = channel_id
        self.submitter = submitter
        self.args = args
        self.timestamp = timestamp
        self._state = state
        self._reads: dict[str, list | None] = {}
        self._writes: dict[str, object] = {}
        self._events: list[dict] = []

    # raw keyed access -------------------------------------------------

    def get_state(self, key: str):
        if key in self._writes:
            return self._writes[key]
        if key not in self._reads:
            entry = self._state.get(key)
            self._reads[key] = list(entry[1]) if entry else None
        entry = self._state.get(key)
        return entry[0] if entry else None

    def put_state(self, key: str, value) -> None:
        self._writes[key] = value

    # registry access ----------------------------------------------------

    @staticmethod
    def state_key(registry_id: str, asset_key: str) -> str:
        return registry_id + "#" + asset_key

    def registry_get_optional(self, registry_id: str, asset_key: str):
        return self.get_state(self.state_key(registry_id, asset_key))

    def registry_get(self, registry_id: str, asset_key: str):
        value = self.registry_get_optional(registry_id, asset_key)
        if value is None:
            raise AssetNotFound("asset not found: %s#%s" % (registry_id, asset_key))
        return value

    def registry_add(self, registry_id: str, asset_key: str, value) -> None:
        if self.registry_get_optional(registry_id, asset_key) is not None:
            raise DuplicateAsset(
                "asset exists: %s#%s" % (registry_id, asset_key)
            )
        self.put_state(self.state_key(registry_id, asset_key), value)

    def registry_update(self, registry_id: str, asset_key: str, value) -> None:
        if self.registry_get_optional(registry_id, asset_key) is None:
            raise AssetNotFound("asset not found: %s#%s" % (registry_id, asset_key))
        self.put_state(self.state_key(registry_id, asset_key), value)

    def emit(self, event_name: str, payload) -> None:
        self._events.append({"event_name": event_name, "payload": payload})

    def rwset(self) -> dict:
        return {
            "reads": [[key, version] for key, version in self._reads.items()],
            "writes": [[key, value] for key, value in self._writes.items()],
            "events": list(self._events),
        }


# --- contract library -------------------------------------------------------

class ContractLibrary:
    """In-process table of contract procedures, keyed by contract id."""

    def __init__(self):
        self._contracts: dict[str, dict] = {}

    def register(self, contract_id: str, operations: dict) -> None:
        self._contracts[contract_id] = dict(operations)

    def operations(self, contract_id: str) -> dict | None:
        return self._contracts.get(contract_id)


def contract_manifest(contract_id: str, version: int, operations: list[str],
                      endorsement_policy_ref: str) -> dict:
    return {
        "contract_id": contract_id,
        "version": version,
        "operations": sorted(operations),
        "endorsement_policy_ref": endorsement_policy_ref,
    }


class Engine:
    """Stateless executor: snapshot + envelope in, read-write set out."""

    def __init__(self, library: ContractLibrary):
        self.library = library

    def simulate(self, envelope: dict, state: WorldState,
                 gov: GovernanceView) -> dict:
        contract_id = envelope["contract_id"]
        operation = envelope["operation"]
        submitter = gov.participant(envelope["submitter"]) or {
            "participant_id": envelope["submitter"],
            "role": "admin" if envelope["operation"] == "bootstrap" else "",
            "org": "",
        }

        if not gov.acl().check(submitter.get("role", ""), contract_id, operation):
            if not self._is_bootstrap(envelope):
                raise AclDenied(
                    "role %r may not call %s.%s"
                    % (submitter.get("role"), contract_id, operation)
                )

        ctx = TransactionContext(
            envelope["channel_id"], submitter, envelope["args"],
            envelope["timestamp"], state,
        )

        if contract_id == LIFECYCLE_CONTRACT:
            procedures = LIFECYCLE_OPERATIONS
        else:
            deployed = ctx.registry_get_optional(CONTRACT_STATE_PREFIX, contract_id)
            if deployed is None and not self._is_bootstrap(envelope):
                raise UnknownContract("contract %r not deployed" % contract_id)
            procedures = self.library.operations(contract_id)
            if procedures is None:
                raise UnknownContract("contract %r has no registered code"
                                      % contract_id)
        proc = procedures.get(operation)
        if proc is None:
            raise UnknownOperation(
                "contract %r has no operation %r" % (contract_id, operation)
            )
        proc(ctx, envelope["args"])
        return ctx.rwset()

    @staticmethod
    def _is_bootstrap(envelope: dict) -> bool:
        return (envelope["contract_id"] == "governance"
                and envelope["operation"] == "bootstrap")


# --- lifecycle contract ---------------------------------------------------------

def deploy_contract_op(ctx: TransactionContext, args) -> None:
    """Record a contract manifest on the channel; versions move forward only."""
    manifest = contract_manifest(
        args["contract_id"], args["version"], args["operations"],
        args.get("endorsement_policy_ref", "default"),
    )
    existing = ctx.registry_get_optional(CONTRACT_STATE_PREFIX, args["contract_id"])
    if existing is not None and args["version"] <= existing["version"]:
        raise StaleVersion(
            "contract %s version %s already deployed"
            % (args["contract_id"], existing["version"])
        )
    record = dict(manifest)
    record["manifest_hash"] = doc_digest(manifest)
    ctx.put_state(
        TransactionContext.state_key(CONTRACT_STATE_PREFIX, args["contract_id"]),
        record,
    )
    for key, value in args.get("config", {}).items():
        ctx.put_state("_config#" + key, value)


def channel_config_op(ctx: TransactionContext, args) -> None:
    """Genesis record making each channel's chain self-describing."""
    ctx.put_state("_channel#config", args["channel"])


LIFECYCLE_OPERATIONS = {
    "deploy": deploy_contract_op,
    "channel_config": channel_config_op,
}


# --- governance contract -----------------------------------------------------------

def _register_participant(ctx: TransactionContext, participant: dict,
                          identity_doc: dict | None) -> None:
    pid = participant["participant_id"]
    record = ids.make_participant(
        pid, participant["org"], participant["role"],
        participant.get("display_name", ""),
    )
    if ctx.registry_get_optional(GovernanceView.REG_PARTICIPANT, pid) is not None:
        raise DuplicateId("participant %r already registered" % pid)
    ctx.registry_add(GovernanceView.REG_PARTICIPANT, pid, record)
    if identity_doc is not None:
        ctx.put_state(
            TransactionContext.state_key(GovernanceView.REG_IDENTITY, pid),
            identity_doc,
        )


def bootstrap_op(ctx: TransactionContext, args) -> None:
    """Genesis-only: founding participants, identities, nodes, ACL, policies,
    channels, and the governance contract's own manifest."""
    identities = {i["participant_id"]: i for i in args.get("identities", [])}
    for participant in args.get("participants", []):
        _register_participant(
            ctx, participant, identities.get(participant["participant_id"])
        )
    for node in args.get("nodes", []):
        ctx.registry_add(GovernanceView.REG_NODE, node["node_id"], node)
    for policy in args.get("policies", []):
        ctx.registry_add(GovernanceView.REG_POLICY, policy["policy_id"], policy)
    for channel in args.get("channels", []):
        ctx.registry_add(GovernanceView.REG_CHANNEL, channel["channel_id"], channel)
    ctx.put_state(GovernanceView.ACL_KEY, {"rules": args.get("acl_rules", [])})
    deploy_contract_op(ctx, {
        "contract_id": "governance",
        "version": 1,
        "operations": sorted(GOVERNANCE_OPERATIONS),
        "endorsement_policy_ref": "default",
    })


def register_participant_op(ctx: TransactionContext, args) -> None:
    identity_doc = args.get("identity")
    if identity_doc is not None:
        identity_doc = ids.make_identity(
            args["participant"]["participant_id"],
            identity_doc["public_key"],
            identity_doc.get("issued_at", ctx.timestamp),
        )
    _register_participant(ctx, args["participant"], identity_doc)


def revoke_identity_op(ctx: TransactionContext, args) -> None:
    pid = args["participant_id"]
    record = ctx.registry_get(GovernanceView.REG_IDENTITY, pid)
    updated = dict(record)
    updated["revoked"] = True
    ctx.registry_update(GovernanceView.REG_IDENTITY, pid, updated)


def add_acl_rule_op(ctx: TransactionContext, args) -> None:
    doc = ctx.get_state(GovernanceView.ACL_KEY) or {"rules": []}
    rules = list(doc["rules"])
    rule = args["rule"]
    if args.get("prepend"):
        rules.insert(0, rule)
    else:
        rules.append(rule)
    ctx.put_state(GovernanceView.ACL_KEY, {"rules": rules})


def register_node_op(ctx: TransactionContext, args) -> None:
    node = {
        "node_id": args["node_id"],
        "org": args["org"],
        "public_key": args["public_key"],
    }
    ctx.registry_add(GovernanceView.REG_NODE, node["node_id"], node)


def create_channel_op(ctx: TransactionContext, args) -> None:
    channel = args["channel"]
    cid = channel["channel_id"]
    if ctx.registry_get_optional(GovernanceView.REG_CHANNEL, cid) is not None:
        raise DuplicateChannel("channel %r exists" % cid)
    ctx.registry_add(GovernanceView.REG_CHANNEL, cid, channel)


GOVERNANCE_OPERATIONS = {
    "bootstrap": bootstrap_op,
    "register_participant": register_participant_op,
    "revoke_identity": revoke_identity_op,
    "add_acl_rule": add_acl_rule_op,
    "register_node": register_node_op,
    "create_channel": create_channel_op,
}


def base_library() -> ContractLibrary:
    library = ContractLibrary()
    library.register("governance", GOVERNANCE_OPERATIONS)
    return library
