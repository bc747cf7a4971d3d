"""Multi-node execute-order-validate pipeline over a simulated network.

Endorsing peers simulate transactions on their committed state, a single
orderer cuts FIFO blocks per channel, and every member node validates and
commits. The message bus is in-process with per-link delay and drop
probability; it runs either on a virtual clock (deterministic, seeded) or
on real threads. Dropped block deliveries recover through pull-based
catch-up against the orderer.
"""
from __future__ import annotations

import heapq
import itertools
import os
import random
import threading
import time

from grainledger import contracts, grain, identity as ids, ledger
from grainledger.canonical import canonical_dumps, canonical_loads
from grainledger.errors import (
    AclDenied,
    ContractAbort,
    DuplicateChannel,
    EndorsementMismatch,
    GrainLedgerError,
    NotChannelMember,
    PolicyNotMet,
    SimulationFailed,
    Unauthorized,
)

GOVERNANCE_CHANNEL = "governance"

DEFAULT_TOPOLOGY = {
    "seed": 42,
    "nodes": [
        {
            "node_id": "coop-node",
            "org": "cooperative",
            "endpoint": "coop-node.gebn",
            "channels": ["governance", "gebn-main"],
            "is_orderer": False,
            "listen_addr": "127.0.0.1:8101",
        },
        {
            "node_id": "warehouse-node",
            "org": "warehouse",
            "endpoint": "warehouse-node.gebn",
            "channels": ["governance", "gebn-main", "credit"],
            "is_orderer": True,
            "listen_addr": "127.0.0.1:8102",
        },
        {
            "node_id": "bank-node",
            "org": "bank",
            "endpoint": "bank-node.gebn",
            "channels": ["governance", "gebn-main", "credit"],
            "is_orderer": False,
            "listen_addr": "127.0.0.1:8103",
        },
    ],
    "channels": [
        {
            "channel_id": "governance",
            "member_orgs": ["bank", "cooperative", "warehouse"],
            "endorsement_policy": "default",
            "batch_max_tx": 10,
            "batch_timeout_ms": 250,
            "contracts": [],
        },
        {
            "channel_id": "gebn-main",
            "member_orgs": ["bank", "cooperative", "warehouse"],
            "endorsement_policy": "default",
            "batch_max_tx": 10,
            "batch_timeout_ms": 250,
            "contracts": ["grain"],
        },
        {
            "channel_id": "credit",
            "member_orgs": ["bank", "warehouse"],
            "endorsement_policy": "default",
            "batch_max_tx": 10,
            "batch_timeout_ms": 250,
            "contracts": [],
        },
    ],
    "policies": [
        {"policy_id": "default", "rule": "MAJORITY_ORGS"},
        {"policy_id": "any", "rule": "ANY_ONE"},
        {"policy_id": "all", "rule": "ALL_ORGS"},
    ],
    "participants": [
        {"participant_id": "admin", "org": "warehouse", "role": "admin",
         "display_name": "Network administrator"},
        {"participant_id": "p-qa-01", "org": "warehouse", "role": "qa_operator",
         "display_name": "QA operator"},
        {"participant_id": "p-wh-01", "org": "warehouse",
         "role": "warehouse_operator", "display_name": "Warehouse operator"},
        {"participant_id": "p-prod-01", "org": "cooperative", "role": "producer",
         "display_name": "Producer"},
        {"participant_id": "p-bank-01", "org": "bank", "role": "bank_agent",
         "display_name": "Bank agent"},
    ],
}

_POLICY_REQUIRED = {
    "ANY_ONE": lambda n: 1,
    "MAJORITY_ORGS": lambda n: n // 2 + 1,
    "ALL_ORGS": lambda n: n,
}


# --- schedulers -----------------------------------------------------------------

class DeterministicScheduler:
    """Virtual-time event loop; fully ordered by (due time, sequence)."""

    def __init__(self):
        self.now_ms = 0
        self._heap: list = []
        self._seq = itertools.count()

    def schedule(self, delay_ms: float, fn) -> None:
        heapq.heappush(self._heap, (self.now_ms + delay_ms, next(self._seq), fn))

    def run_until_idle(self) -> None:
        while self._heap:
            due, _seq, fn = heapq.heappop(self._heap)
            self.now_ms = max(self.now_ms, due)
            fn()


class ThreadedScheduler:
    """Real-time scheduling on daemon timers, for live nodes."""

    def __init__(self):
        self._lock = threading.Lock()
        self._stopped = False

    @property
    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def schedule(self, delay_ms: float, fn) -> None:
        with self._lock:
            if self._stopped:
                return
        timer = threading.Timer(delay_ms / 1000.0, fn)
        timer.daemon = True
        timer.start()

    def stop(self) -> None:
        with self._lock:
            self._stopped = True


class MessageBus:
    """Point-to-point delivery with seeded per-link delay and drop."""

    def __init__(self, scheduler, seed: int = 0, delay_ms=(1, 5),
                 drop_probability: float = 0.0):
        self.scheduler = scheduler
        self.rng = random.Random(seed)
        self.delay_ms = delay_ms
        self.drop_probability = drop_probability
        self.dropped = 0
        self._handlers: dict[str, object] = {}
        self._lock = threading.Lock()

    def register(self, node_id: str, handler) -> None:
        self._handlers[node_id] = handler

    def send(self, src: str, dst: str, message: dict) -> None:
        # only block deliveries are lossy; submissions and fetches model
        # synchronous RPCs, while dropped blocks recover via catch-up
        droppable = message.get("type") in ("block", "blocks")
        with self._lock:
            if (droppable and self.drop_probability
                    and self.rng.random() < self.drop_probability):
                self.dropped += 1
                return
            low, high = self.delay_ms
            delay = self.rng.uniform(low, high) if high > low else low
        handler = self._handlers[dst]
        self.scheduler.schedule(delay, lambda: handler(message))


# --- node -----------------------------------------------------------------------

class ChannelLedger:
    def __init__(self, path: str | None):
        self.store = ledger.BlockStore(path)
        self.state = ledger.WorldState()


class Node:
    """One organization's peer: per-channel chain, state, and event log."""

    def __init__(self, config: dict, network: "Network"):
        self.config = config
        self.node_id = config["node_id"]
        self.org = config["org"]
        self.network = network
        self.lock = threading.RLock()
        self.channels: dict[str, ChannelLedger] = {}
        self.tx_status: dict[str, dict] = {}
        self.event_log: list[dict] = []
        self.event_subscribers: list = []
        self._pending_blocks: dict[str, dict[int, dict]] = {}
        self.data_dir: str | None = None

    # setup ----------------------------------------------------------------

    def _channel_path(self, channel_id: str) -> str | None:
        if not self.data_dir:
            return None
        channel_dir = os.path.join(self.data_dir, "channels", channel_id)
        os.makedirs(channel_dir, exist_ok=True)
        return os.path.join(channel_dir, "blocks.log")

    def attach_storage(self, data_dir: str | None) -> None:
        """Open per-channel stores and replay any persisted chains.

        Replay is cross-channel, ordered by block creation time with
        governance first on ties, so identity state is current when
        dependent channels validate.
        """
        self.data_dir = data_dir
        channel_ids = set(self.config["channels"])
        if data_dir and os.path.isdir(os.path.join(data_dir, "channels")):
            channel_ids.update(os.listdir(os.path.join(data_dir, "channels")))
        for channel_id in sorted(channel_ids):
            self.channels[channel_id] = ChannelLedger(self._channel_path(channel_id))
        pending = []
        for channel_id, channel in self.channels.items():
            for block in channel.store:
                rank = 0 if channel_id == GOVERNANCE_CHANNEL else 1
                pending.append(
                    (block["created_at"], rank, block["height"], channel_id, block)
                )
        for _ts, _rank, _height, channel_id, block in sorted(
            pending, key=lambda item: item[:4]
        ):
            self._apply_block(channel_id, self.channels[channel_id], block,
                              replay=True)

    @property
    def gov(self) -> ledger.GovernanceView:
        return ledger.GovernanceView(self.channels[GOVERNANCE_CHANNEL].state)

    def channel_conf(self, channel_id: str) -> dict | None:
        return self.gov.channel_config(channel_id)

    def is_member(self, channel_id: str) -> bool:
        return channel_id in self.channels

    def ensure_channel(self, channel_id: str) -> ChannelLedger:
        if channel_id not in self.channels:
            self.channels[channel_id] = ChannelLedger(self._channel_path(channel_id))
            if channel_id not in self.config["channels"]:
                self.config["channels"].append(channel_id)
        return self.channels[channel_id]

    # consensus ------------------------------------------------------------------

    def endorse(self, envelope: dict) -> dict:
        """Simulate on committed state and sign the read-write set digest.

        The returned endorsement carries the simulated read-write set under
        the transient ``_rwset`` key; it is stripped before ordering.
        """
        channel_id = envelope["channel_id"]
        with self.lock:
            if not self.is_member(channel_id):
                raise NotChannelMember(
                    "%s is not a member of %s" % (self.node_id, channel_id)
                )
            channel = self.channels[channel_id]
            try:
                rwset = self.network.engine.simulate(
                    envelope, channel.state, self.gov
                )
            except GrainLedgerError as exc:
                raise SimulationFailed("%s: %s" % (exc.code, exc)) from exc
            endorsement = ledger.make_endorsement(
                self.node_id, self.org, rwset,
                self.network.node_keys[self.node_id],
            )
            endorsement["_rwset"] = rwset
            return endorsement

    def handle_message(self, message: dict) -> None:
        kind = message["type"]
        if kind == "block":
            self.receive_block(message["channel_id"], message["block"])
        elif kind == "blocks":
            for block in message["blocks"]:
                self.receive_block(message["channel_id"], block)
        elif kind in ("fetch", "submit"):
            orderer = self.network.orderer
            if orderer.node.node_id != self.node_id:
                return
            if kind == "fetch":
                orderer.handle_fetch(message)
            else:
                orderer.enqueue(message)

    def receive_block(self, channel_id: str, block: dict) -> None:
        with self.lock:
            if not self.is_member(channel_id):
                return
            channel = self.channels[channel_id]
            if block["height"] <= channel.store.height:
                return
            pending = self._pending_blocks.setdefault(channel_id, {})
            pending[block["height"]] = block
            while channel.store.height + 1 in pending:
                self._apply_block(
                    channel_id, channel, pending.pop(channel.store.height + 1)
                )
            if pending:
                self._request_catchup(channel_id, channel.store.height + 1)

    def _apply_block(self, channel_id: str, channel: ChannelLedger,
                     block: dict, replay: bool = False) -> None:
        conf = self._conf_for_validation(channel_id, block)
        flags, events = ledger.validate_and_commit(
            channel.state, block, self.gov, conf
        )
        sealed = [(t["valid"], t["reason"]) for t in block["transactions"]]
        if flags != sealed:
            raise GrainLedgerError(
                "validity divergence on %s at height %d (node %s)"
                % (channel_id, block["height"], self.node_id)
            )
        if not replay:
            channel.store.append(block)
        for tx_record in block["transactions"]:
            self.tx_status[tx_record["envelope"]["tx_id"]] = {
                "status": "VALID" if tx_record["valid"] else "INVALID",
                "reason": tx_record["reason"],
                "block_height": block["height"],
                "channel_id": channel_id,
            }
        for event in events:
            event = dict(event)
            event["channel_id"] = channel_id
            event["seq"] = len(self.event_log)
            self.event_log.append(event)
            for subscriber in list(self.event_subscribers):
                subscriber(event)

    def _conf_for_validation(self, channel_id: str, block: dict) -> dict | None:
        conf = self.channel_conf(channel_id)
        if conf is None and block["height"] == 0:
            # governance genesis validates before any channel registry exists
            return None
        return conf

    def _request_catchup(self, channel_id: str, from_height: int) -> None:
        self.network.bus.send(self.node_id, self.network.orderer.node.node_id, {
            "type": "fetch",
            "channel_id": channel_id,
            "from_height": from_height,
            "reply_to": self.node_id,
        })

    def sync_all(self) -> None:
        with self.lock:
            for channel_id, channel in self.channels.items():
                self._request_catchup(channel_id, channel.store.height + 1)

    # queries ---------------------------------------------------------------------

    def _member_channel(self, channel_id: str) -> ChannelLedger:
        if not self.is_member(channel_id):
            raise NotChannelMember(
                "%s is not a member of %s" % (self.node_id, channel_id)
            )
        return self.channels[channel_id]

    def get_asset(self, channel_id: str, registry_id: str, key: str):
        with self.lock:
            return self._member_channel(channel_id).state.get_value(
                registry_id + "#" + key
            )

    def filter_assets(self, channel_id: str, registry_id: str,
                      filters: dict, limit: int | None = None) -> list:
        with self.lock:
            results = []
            for _key, value in self._member_channel(channel_id).state.scan(
                registry_id + "#"
            ):
                if not isinstance(value, dict):
                    continue
                if all(_matches(value.get(f), want) for f, want in filters.items()):
                    results.append(value)
                    if limit is not None and len(results) >= limit:
                        break
            return results

    def trace_lot(self, channel_id: str, lot_id: str) -> dict:
        with self.lock:
            channel = self._member_channel(channel_id)
            return grain.trace_lot_provenance(channel.store, channel.state, lot_id)

    def ingest_receipt(self, channel_id: str, invoice: str,
                       signer_id: str, keypair: ids.KeyPair) -> dict:
        with self.lock:
            channel = self._member_channel(channel_id)
            return grain.issue_ingest_receipt(
                channel.store, channel.state, invoice, signer_id, keypair
            )

    def events_since(self, last_seq: int | None) -> list[dict]:
        with self.lock:
            start = 0 if last_seq is None else last_seq + 1
            return list(self.event_log[start:])


def _matches(value, want: str) -> bool:
    if value is None:
        return False
    if isinstance(value, str):
        return value == want
    try:
        return canonical_dumps(value).decode("utf-8") == want
    except GrainLedgerError:
        return False


# --- orderer ------------------------------------------------------------------------

class Orderer:
    """Single ordering service: FIFO queues, batch cutting, block broadcast."""

    def __init__(self, node: Node, network: "Network"):
        self.node = node
        self.network = network
        self.queues: dict[str, list[dict]] = {}
        self._timer_pending: set[str] = set()
        self.lock = threading.RLock()

    def enqueue(self, message: dict) -> None:
        channel_id = message["channel_id"]
        with self.lock:
            conf = self.node.channel_conf(channel_id)
            if conf is None:
                return
            queue = self.queues.setdefault(channel_id, [])
            queue.append(message)
            if len(queue) >= conf["batch_max_tx"]:
                self._cut(channel_id)
            else:
                self._arm_timer(channel_id, conf)

    def _arm_timer(self, channel_id: str, conf: dict) -> None:
        if channel_id in self._timer_pending:
            return
        self._timer_pending.add(channel_id)
        self.network.scheduler.schedule(
            conf["batch_timeout_ms"], lambda: self._on_timeout(channel_id)
        )

    def _on_timeout(self, channel_id: str) -> None:
        with self.lock:
            self._timer_pending.discard(channel_id)
            if self.queues.get(channel_id):
                self._cut(channel_id)

    def _cut(self, channel_id: str) -> None:
        conf = self.node.channel_conf(channel_id)
        queue = self.queues.get(channel_id, [])
        batch, self.queues[channel_id] = (
            queue[: conf["batch_max_tx"]],
            queue[conf["batch_max_tx"]:],
        )
        if not batch:
            return
        records = [
            ledger.make_tx_record(m["envelope"], m["rwset"], m["endorsements"])
            for m in batch
        ]
        self._seal_and_broadcast(channel_id, records)
        if self.queues[channel_id]:
            self._arm_timer(channel_id, conf)

    def _seal_and_broadcast(self, channel_id: str, records: list[dict]) -> None:
        node = self.node
        with node.lock:
            channel = node.channels[channel_id]
            block = ledger.build_block(
                channel.store.height + 1,
                channel.store.tip_digest,
                channel_id,
                records,
                int(self.network.scheduler.now_ms),
            )
            conf = node._conf_for_validation(channel_id, block)
            flags, _events = ledger.validate_and_commit(
                _StatePreview(channel.state), block, node.gov, conf
            )
            ledger.seal_flags(block, flags)
            node._apply_block(channel_id, channel, block)
        member_orgs = set(self.node.channel_conf(channel_id)["member_orgs"])
        for other in self.network.nodes.values():
            if other.node_id == node.node_id:
                continue
            if other.org in member_orgs and other.is_member(channel_id):
                self.network.bus.send(node.node_id, other.node_id, {
                    "type": "block",
                    "channel_id": channel_id,
                    "block": block,
                })

    def handle_fetch(self, message: dict) -> None:
        channel_id = message["channel_id"]
        with self.node.lock:
            if not self.node.is_member(channel_id):
                return
            store = self.node.channels[channel_id].store
            blocks = [
                store.get(h)
                for h in range(message["from_height"], store.height + 1)
            ]
        if blocks:
            self.network.bus.send(self.node.node_id, message["reply_to"], {
                "type": "blocks",
                "channel_id": channel_id,
                "blocks": blocks,
            })

    def has_backlog(self) -> bool:
        with self.lock:
            return any(self.queues.values())


class _StatePreview:
    """Overlay over committed state so sealing does not double-apply writes."""

    def __init__(self, state: ledger.WorldState):
        self._base = state
        self._overlay: dict = {}

    def version_of(self, key: str):
        if key in self._overlay:
            return self._overlay[key][1]
        return self._base.version_of(key)

    def put(self, key: str, value, version) -> None:
        self._overlay[key] = (value, version)


# --- network harness ----------------------------------------------------------------

class Network:
    """All nodes of one deployment plus the bus, keys and contract engine."""

    def __init__(self, topology: dict | None = None, root_dir: str | None = None,
                 mode: str = "deterministic", delay_ms=(1, 5),
                 drop_probability: float = 0.0, seed: int | None = None):
        import copy

        self.topology = copy.deepcopy(topology or DEFAULT_TOPOLOGY)
        self.root_dir = root_dir
        self.seed = self.topology.get("seed", 0) if seed is None else seed
        if mode == "deterministic":
            self.scheduler = DeterministicScheduler()
        elif mode == "threaded":
            self.scheduler = ThreadedScheduler()
        else:
            raise ValueError("mode must be deterministic or threaded")
        self.mode = mode
        self.bus = MessageBus(self.scheduler, seed=self.seed,
                              delay_ms=delay_ms, drop_probability=drop_probability)
        library = contracts.base_library()
        grain.register_grain(library)
        self.engine = contracts.Engine(library)

        self.nodes: dict[str, Node] = {}
        self.node_keys: dict[str, ids.KeyPair] = {}
        self.participant_keys: dict[str, ids.KeyPair] = {}
        orderer_node = None
        for node_conf in self.topology["nodes"]:
            node = Node(node_conf, self)
            self.nodes[node.node_id] = node
            self.bus.register(node.node_id, node.handle_message)
            if node_conf.get("is_orderer"):
                if orderer_node is not None:
                    raise ValueError("exactly one orderer is supported")
                orderer_node = node
        if orderer_node is None:
            raise ValueError("topology has no orderer")
        for channel in self.topology["channels"]:
            self._check_orderer_membership(orderer_node, channel)
        self.orderer = Orderer(orderer_node, self)
        self._generate_keys()

    @staticmethod
    def _check_orderer_membership(orderer_node: Node, channel: dict) -> None:
        if orderer_node.org not in channel["member_orgs"]:
            raise ValueError(
                "orderer org %r must be a member of channel %r"
                % (orderer_node.org, channel["channel_id"])
            )

    def _generate_keys(self) -> None:
        def keypair(tag: str) -> ids.KeyPair:
            return ids.KeyPair.from_seed("%s:%s" % (self.seed, tag))

        for node_conf in self.topology["nodes"]:
            self.node_keys[node_conf["node_id"]] = keypair(
                "node:" + node_conf["node_id"]
            )
        for participant in self.topology.get("participants", []):
            self.participant_keys[participant["participant_id"]] = keypair(
                "participant:" + participant["participant_id"]
            )

    # --- bootstrap -------------------------------------------------------------

    def bootstrap(self) -> None:
        """Create genesis blocks on a fresh deployment, or replay from disk."""
        for node in self.nodes.values():
            data_dir = (
                os.path.join(self.root_dir, node.node_id) if self.root_dir else None
            )
            if data_dir:
                os.makedirs(data_dir, exist_ok=True)
            node.attach_storage(data_dir)
        gov_store = self.orderer.node.channels[GOVERNANCE_CHANNEL].store
        if len(gov_store) == 0:
            self._create_genesis_blocks()

    def _bootstrap_args(self) -> dict:
        participants = self.topology.get("participants", [])
        identities = [
            ids.make_identity(p["participant_id"],
                              self.participant_keys[p["participant_id"]].public_hex,
                              issued_at=0)
            for p in participants
        ]
        nodes = [
            {"node_id": n["node_id"], "org": n["org"],
             "public_key": self.node_keys[n["node_id"]].public_hex}
            for n in self.topology["nodes"]
        ]
        channels = [
            {k: v for k, v in channel.items() if k != "contracts"}
            for channel in self.topology["channels"]
        ]
        return {
            "participants": participants,
            "identities": identities,
            "nodes": nodes,
            "policies": self.topology["policies"],
            "channels": channels,
            "acl_rules": self.topology.get("acl_rules", ids.default_acl_rules()),
        }

    def _genesis_record(self, channel_id: str, contract_id: str, operation: str,
                        args, state: ledger.WorldState,
                        gov: ledger.GovernanceView) -> dict:
        envelope = ledger.build_envelope(
            channel_id, contract_id, operation, args, "admin", 0
        )
        ledger.finalize_envelope(envelope, self.participant_keys["admin"])
        rwset = self.engine.simulate(envelope, state, gov)
        return ledger.make_tx_record(envelope, rwset, [])

    def _create_genesis_blocks(self) -> None:
        sim_state = ledger.WorldState()
        gov = ledger.GovernanceView(sim_state)
        records = [self._genesis_record(
            GOVERNANCE_CHANNEL, "governance", "bootstrap",
            self._bootstrap_args(), sim_state, gov,
        )]
        genesis = ledger.build_block(
            0, ledger.ZERO_DIGEST, GOVERNANCE_CHANNEL, records, 0
        )
        gov_channel = next(
            c for c in self.topology["channels"]
            if c["channel_id"] == GOVERNANCE_CHANNEL
        )
        self._commit_genesis(GOVERNANCE_CHANNEL, gov_channel["member_orgs"], genesis)
        for channel in self.topology["channels"]:
            if channel["channel_id"] != GOVERNANCE_CHANNEL:
                self._materialize_channel(channel)

    def _materialize_channel(self, channel: dict) -> None:
        channel_id = channel["channel_id"]
        gov = self.orderer.node.gov
        sim_state = ledger.WorldState()
        conf_doc = {k: v for k, v in channel.items() if k != "contracts"}
        records = [self._genesis_record(
            channel_id, contracts.LIFECYCLE_CONTRACT, "channel_config",
            {"channel": conf_doc}, sim_state, gov,
        )]
        for key, value in records[0]["rwset"]["writes"]:
            sim_state.put(key, value, (0, 0))
        for contract_id in channel.get("contracts", []):
            if contract_id == grain.GRAIN_CONTRACT:
                args = grain.grain_manifest_args()
            else:
                raise ValueError("unknown contract %r in topology" % contract_id)
            record = self._genesis_record(
                channel_id, contracts.LIFECYCLE_CONTRACT, "deploy",
                args, sim_state, gov,
            )
            for key, value in record["rwset"]["writes"]:
                sim_state.put(key, value, (0, len(records)))
            records.append(record)
        genesis = ledger.build_block(0, ledger.ZERO_DIGEST, channel_id, records, 0)
        self._commit_genesis(channel_id, channel["member_orgs"], genesis)

    def _commit_genesis(self, channel_id: str, member_orgs: list[str],
                        genesis: dict) -> None:
        members = set(member_orgs)
        sealed = None
        for node in self.nodes.values():
            if node.org not in members:
                continue
            with node.lock:
                channel = node.ensure_channel(channel_id)
                if sealed is None:
                    flags, _ = ledger.validate_and_commit(
                        _StatePreview(channel.state), genesis, node.gov,
                        node._conf_for_validation(channel_id, genesis),
                    )
                    sealed = ledger.seal_flags(genesis, flags)
                    bad = [r for r in sealed["transactions"] if not r["valid"]]
                    if bad:
                        raise GrainLedgerError(
                            "genesis tx invalid on %s: %s"
                            % (channel_id, bad[0]["reason"])
                        )
                node._apply_block(channel_id, channel, sealed)

    # --- client side -------------------------------------------------------------

    def required_endorsements(self, conf: dict, gov: ledger.GovernanceView) -> int:
        rule = gov.policy_rule(conf["endorsement_policy"])
        if rule not in _POLICY_REQUIRED:
            raise PolicyNotMet("unknown endorsement policy rule %r" % rule)
        return _POLICY_REQUIRED[rule](len(conf["member_orgs"]))

    def gather_endorsements(self, envelope: dict) -> list[dict]:
        """Simulate on one node per member org until the policy is satisfied."""
        channel_id = envelope["channel_id"]
        gov = self.orderer.node.gov
        conf = gov.channel_config(channel_id)
        if conf is None:
            raise NotChannelMember("unknown channel %r" % channel_id)
        required = self.required_endorsements(conf, gov)
        endorsements: list[dict] = []
        first_failure: Exception | None = None
        for org in sorted(conf["member_orgs"]):
            if len(endorsements) >= required:
                break
            node = self._first_member_node(org, channel_id)
            if node is None:
                continue
            try:
                endorsements.append(node.endorse(envelope))
            except SimulationFailed as exc:
                if first_failure is None:
                    first_failure = exc
        if len(endorsements) < required:
            if first_failure is not None:
                raise first_failure
            raise PolicyNotMet(
                "needed %d endorsing orgs, reached %d"
                % (required, len(endorsements))
            )
        return endorsements

    def _first_member_node(self, org: str, channel_id: str) -> Node | None:
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.org == org and node.is_member(channel_id):
                return node
        return None

    def submit(self, via_node_id: str, envelope: dict,
               endorsements: list[dict]) -> str:
        """Policy and digest checks, then FIFO-queue at the orderer."""
        via = self.nodes[via_node_id]
        conf = via.channel_conf(envelope["channel_id"])
        if conf is None or not via.is_member(envelope["channel_id"]):
            raise NotChannelMember(
                "%s is not a member of %s" % (via_node_id, envelope["channel_id"])
            )
        digests = {e["rwset_digest"] for e in endorsements}
        if len(digests) != 1:
            raise EndorsementMismatch(
                "read-write sets diverge across endorsements"
            )
        orgs = {e["org"] for e in endorsements}
        required = self.required_endorsements(conf, via.gov)
        if len(orgs) < required or not orgs.issubset(set(conf["member_orgs"])):
            raise PolicyNotMet(
                "endorsements from %s do not satisfy policy" % sorted(orgs)
            )
        rwset = None
        for endorsement in endorsements:
            rwset = endorsement.get("_rwset", rwset)
        if rwset is None:
            raise EndorsementMismatch("endorsements carry no read-write set")
        message = {
            "type": "submit",
            "channel_id": envelope["channel_id"],
            "envelope": envelope,
            "rwset": rwset,
            "endorsements": [
                {k: v for k, v in e.items() if k != "_rwset"}
                for e in endorsements
            ],
        }
        via.tx_status.setdefault(envelope["tx_id"], {
            "status": "PENDING", "reason": None,
            "block_height": None, "channel_id": envelope["channel_id"],
        })
        self.bus.send(via_node_id, self.orderer.node.node_id, message)
        return envelope["tx_id"]

    def client_submit(self, via_node_id: str, envelope: dict) -> str:
        endorsements = self.gather_endorsements(envelope)
        return self.submit(via_node_id, envelope, endorsements)

    # --- channel lifecycle ------------------------------------------------------------

    def create_channel(self, channel: dict, submitter: str = "admin",
                       timestamp: int | None = None) -> str:
        """Admin transaction on governance, then a genesis on member nodes."""
        self._check_orderer_membership(self.orderer.node, channel)
        if self.orderer.node.gov.channel_config(channel["channel_id"]) is not None:
            raise DuplicateChannel("channel %r exists" % channel["channel_id"])
        envelope = ledger.build_envelope(
            GOVERNANCE_CHANNEL, "governance", "create_channel",
            {"channel": {k: v for k, v in channel.items() if k != "contracts"}},
            submitter,
            int(self.scheduler.now_ms) if timestamp is None else timestamp,
        )
        key = self.participant_keys.get(submitter)
        if key is None:
            raise Unauthorized("no signing key for %r" % submitter)
        ledger.finalize_envelope(envelope, key)
        try:
            tx_id = self.client_submit(self.orderer.node.node_id, envelope)
        except SimulationFailed as exc:
            if isinstance(exc.__cause__, (AclDenied, ContractAbort)):
                raise Unauthorized(str(exc)) from exc
            raise
        self.await_tx(self.orderer.node.node_id, tx_id)
        status = self.orderer.node.tx_status.get(tx_id, {})
        if status.get("status") != "VALID":
            raise Unauthorized("create_channel rejected: %s" % status.get("reason"))
        self.topology["channels"].append(dict(channel))
        for node in self.nodes.values():
            if node.org in set(channel["member_orgs"]):
                with node.lock:
                    node.ensure_channel(channel["channel_id"])
        self._materialize_channel(channel)
        return tx_id

    # --- convergence ------------------------------------------------------------------

    def await_tx(self, node_id: str, tx_id: str, timeout_s: float = 10.0) -> dict:
        node = self.nodes[node_id]
        if self.mode == "deterministic":
            self.drain()
            return node.tx_status.get(tx_id, {"status": "UNKNOWN"})
        deadline = time.time() + timeout_s
        while time.time() < deadline:
            status = node.tx_status.get(tx_id)
            if status and status["status"] != "PENDING":
                return status
            time.sleep(0.02)
        return node.tx_status.get(tx_id, {"status": "UNKNOWN"})

    def drain(self, max_rounds: int = 60) -> None:
        if self.mode != "deterministic":
            raise RuntimeError("drain applies to deterministic mode")
        self.scheduler.run_until_idle()
        rounds = 0
        while not self.converged() and rounds < max_rounds:
            for node in self.nodes.values():
                node.sync_all()
            self.scheduler.run_until_idle()
            rounds += 1
        if not self.converged():
            raise GrainLedgerError("network failed to converge after drain")

    def member_nodes(self, channel_id: str) -> list[Node]:
        members = None
        for channel in self.topology["channels"]:
            if channel["channel_id"] == channel_id:
                members = set(channel["member_orgs"])
        return [
            n for n in self.nodes.values()
            if members is not None and n.org in members and n.is_member(channel_id)
        ]

    def converged(self) -> bool:
        if self.orderer.has_backlog():
            return False
        for channel in self.topology["channels"]:
            channel_id = channel["channel_id"]
            tips = {
                n.channels[channel_id].store.tip_digest
                for n in self.member_nodes(channel_id)
            }
            if len(tips) > 1:
                return False
        return True

    def channel_report(self, channel_id: str) -> list[dict]:
        report = []
        for node in self.member_nodes(channel_id):
            channel = node.channels[channel_id]
            report.append({
                "node_id": node.node_id,
                "height": channel.store.height,
                "tip_digest": channel.store.tip_digest,
                "state_hash": channel.state.state_hash(),
            })
        return report

    def stop(self) -> None:
        if isinstance(self.scheduler, ThreadedScheduler):
            self.scheduler.stop()


# --- topology io -------------------------------------------------------------------

def load_topology(path: str) -> dict:
    with open(path, "rb") as fh:
        return canonical_loads(fh.read())


def dump_topology(topology: dict, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(canonical_dumps(topology))
