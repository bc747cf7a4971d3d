"""Execute-order-validate pipeline: batching, policies, convergence, isolation."""
import time
from decimal import Decimal

import pytest

from grainledger import contracts, identity as ids, ledger, network
from grainledger.errors import (
    DuplicateChannel,
    EndorsementMismatch,
    NotChannelMember,
    PolicyNotMet,
    SimulationFailed,
    Unauthorized,
)
from grainledger.ledger import _endorsement_policy_met
from tests.conftest import Client


class TestBatching:
    def test_blocks_of_ten_ten_five(self, mem_net):
        client = Client(mem_net)
        for n in range(25):
            env = client.envelope("register_silo", {"silo_id": "S%02d" % n})
            mem_net.client_submit("warehouse-node", env)
        mem_net.drain()
        store = mem_net.nodes["warehouse-node"].channels["gebn-main"].store
        sizes = [len(b["transactions"]) for b in store if b["height"] > 0]
        assert sizes == [10, 10, 5]

    def test_single_tx_block_on_timeout(self, mem_net):
        client = Client(mem_net)
        env = client.envelope("register_silo", {"silo_id": "LONELY"})
        mem_net.client_submit("warehouse-node", env)
        mem_net.drain()
        store = mem_net.nodes["warehouse-node"].channels["gebn-main"].store
        assert len(store.get(1)["transactions"]) == 1

    def test_timeout_respects_configured_delay(self, mem_net):
        client = Client(mem_net)
        env = client.envelope("register_silo", {"silo_id": "S"})
        start = mem_net.scheduler.now_ms
        mem_net.client_submit("warehouse-node", env)
        mem_net.drain()
        store = mem_net.nodes["warehouse-node"].channels["gebn-main"].store
        cut_at = store.get(1)["created_at"]
        assert cut_at >= start + 250


class TestEndorsementPolicy:
    @pytest.mark.parametrize("rule,orgs,members,expected", [
        ("ANY_ONE", {"a"}, ["a", "b", "c"], True),
        ("ANY_ONE", set(), ["a", "b", "c"], False),
        ("MAJORITY_ORGS", {"a", "b"}, ["a", "b", "c"], True),
        ("MAJORITY_ORGS", {"a"}, ["a", "b", "c"], False),
        ("MAJORITY_ORGS", {"a"}, ["a", "b"], False),
        ("MAJORITY_ORGS", {"a", "b"}, ["a", "b"], True),
        ("MAJORITY_ORGS", {"a"}, ["a"], True),
        ("ALL_ORGS", {"a", "b", "c"}, ["a", "b", "c"], True),
        ("ALL_ORGS", {"a", "b"}, ["a", "b", "c"], False),
        ("ALL_ORGS", {"a", "x"}, ["a", "b"], False),
    ])
    def test_policy_truth_table(self, rule, orgs, members, expected):
        assert _endorsement_policy_met(rule, orgs, members) is expected

    def test_one_org_under_majority_rejected(self, mem_net):
        client = Client(mem_net)
        env = client.envelope("register_silo", {"silo_id": "S1"})
        single = [mem_net.nodes["warehouse-node"].endorse(env)]
        with pytest.raises(PolicyNotMet):
            mem_net.submit("warehouse-node", env, single)

    def test_two_orgs_under_majority_accepted(self, mem_net):
        client = Client(mem_net)
        env = client.envelope("register_silo", {"silo_id": "S1"})
        endorsements = [
            mem_net.nodes["warehouse-node"].endorse(env),
            mem_net.nodes["bank-node"].endorse(env),
        ]
        tx_id = mem_net.submit("warehouse-node", env, endorsements)
        status = mem_net.await_tx("warehouse-node", tx_id)
        assert status["status"] == "VALID"

    def test_mismatched_digests_rejected(self, mem_net):
        client = Client(mem_net)
        env = client.envelope("register_silo", {"silo_id": "S1"})
        endorsements = [
            mem_net.nodes["warehouse-node"].endorse(env),
            mem_net.nodes["bank-node"].endorse(env),
        ]
        endorsements[1]["rwset_digest"] = "00" * 32
        with pytest.raises(EndorsementMismatch):
            mem_net.submit("warehouse-node", env, endorsements)

    def test_insync_nodes_equal_digests(self, mem_net):
        client = Client(mem_net)
        env = client.envelope("register_silo", {"silo_id": "S1"})
        digests = {
            mem_net.nodes[node_id].endorse(env)["rwset_digest"]
            for node_id in ("warehouse-node", "bank-node", "coop-node")
        }
        assert len(digests) == 1

    def test_endorse_on_non_member_node(self, mem_net):
        client = Client(mem_net)
        env = client.envelope("register_silo", {"silo_id": "S1"},
                              channel="credit", contract="_lifecycle")
        with pytest.raises(NotChannelMember):
            mem_net.nodes["coop-node"].endorse(env)


class TestStaleness:
    def test_stale_endorser_digest_mismatch_surfaces(self, mem_net):
        client = Client(mem_net)
        client.submit("register_silo", {"silo_id": "S1"})
        # cut off block delivery so peers fall behind the orderer
        mem_net.bus.drop_probability = 1.0
        env = client.envelope("record_weigh_in", {
            "Invoice_Number": "INV-1", "producer_id": "p",
            "gross_kg": 2000, "tare_kg": 1000,
        })
        tx = mem_net.client_submit("warehouse-node", env)
        mem_net.scheduler.run_until_idle()
        orderer_height = mem_net.nodes[
            "warehouse-node"].channels["gebn-main"].store.height
        coop_height = mem_net.nodes[
            "coop-node"].channels["gebn-main"].store.height
        assert orderer_height > coop_height
        # read-dependent tx: stale and fresh nodes see different state
        env2 = client.envelope("record_extrinsic", {
            "Invoice_Number": "INV-1", "Sample_Number": "s",
            "Moisture_Percent": 14, "Impurity_Percent": 1,
            "Broken_Percent": 1, "Greenish_Percent": 1, "Damaged_Percent": 1,
        })
        fresh = mem_net.nodes["warehouse-node"].endorse(env2)
        assert fresh["rwset_digest"]
        with pytest.raises(SimulationFailed):
            # the stale node has not seen the weigh ticket yet
            mem_net.nodes["coop-node"].endorse(env2)
        # once delivery resumes and the node catches up, digests agree
        mem_net.bus.drop_probability = 0.0
        mem_net.drain()
        again = mem_net.nodes["coop-node"].endorse(env2)
        assert again["rwset_digest"] == \
            mem_net.nodes["warehouse-node"].endorse(env2)["rwset_digest"]

    def test_catchup_after_dropped_blocks(self, mem_net):
        client = Client(mem_net)
        mem_net.bus.drop_probability = 0.7
        for n in range(20):
            env = client.envelope("register_silo", {"silo_id": "S%02d" % n})
            mem_net.client_submit("warehouse-node", env)
        mem_net.drain()
        assert mem_net.bus.dropped > 0
        report = mem_net.channel_report("gebn-main")
        assert len({r["tip_digest"] for r in report}) == 1
        assert len({r["state_hash"] for r in report}) == 1


class TestConvergence:
    def test_convergence_under_load_with_delays(self):
        net = network.Network(delay_ms=(1, 20))
        net.bootstrap()
        client = Client(net)
        for n in range(50):
            env = client.envelope("register_silo", {"silo_id": "S%03d" % n})
            net.client_submit("warehouse-node", env)
        net.drain()
        for channel_id in ("gebn-main", "governance", "credit"):
            report = net.channel_report(channel_id)
            assert len({r["tip_digest"] for r in report}) == 1
            assert len({r["state_hash"] for r in report}) == 1

    def test_total_order_identical_across_nodes(self, mem_net):
        client = Client(mem_net)
        for n in range(30):
            env = client.envelope("register_silo", {"silo_id": "S%03d" % n})
            mem_net.client_submit("warehouse-node", env)
        mem_net.drain()
        sequences = []
        for node_id in ("coop-node", "warehouse-node", "bank-node"):
            store = mem_net.nodes[node_id].channels["gebn-main"].store
            sequences.append([
                t["envelope"]["tx_id"] for b in store
                for t in b["transactions"]
            ])
        assert sequences[0] == sequences[1] == sequences[2]

    def test_identical_seeds_identical_chains(self):
        def run():
            net = network.Network(delay_ms=(1, 10))
            net.bootstrap()
            client = Client(net)
            for n in range(20):
                env = client.envelope("register_silo",
                                      {"silo_id": "S%02d" % n})
                net.client_submit("warehouse-node", env)
            net.drain()
            report = net.channel_report("gebn-main")
            return report[0]["tip_digest"], report[0]["state_hash"]

        assert run() == run()

    def test_replay_matches_live_state(self, net):
        client = Client(net)
        client.submit("register_silo", {"silo_id": "S1"})
        client.intake("INV-1")
        live = {
            channel_id: net.nodes["warehouse-node"].channels[
                channel_id].state.state_hash()
            for channel_id in ("governance", "gebn-main", "credit")
        }
        reloaded = network.Network(root_dir=net.root_dir)
        reloaded.bootstrap()
        for channel_id, expected in live.items():
            assert reloaded.nodes["warehouse-node"].channels[
                channel_id].state.state_hash() == expected


class TestChannelIsolation:
    def test_credit_channel_invisible_to_coop(self, net):
        admin_client = Client(net)
        tx = admin_client.submit(
            "deploy", {
                "contract_id": "grain", "version": 2,
                "operations": ["record_weigh_in"],
            },
            submitter="admin", channel="credit", contract="_lifecycle",
        )
        ticket_tx = admin_client.submit("record_weigh_in", {
            "Invoice_Number": "CR-1", "producer_id": "p-bank-01",
            "gross_kg": 1000, "tare_kg": 500,
        }, submitter="admin", channel="credit", contract="grain")
        coop = net.nodes["coop-node"]
        assert not coop.is_member("credit")
        with pytest.raises(NotChannelMember):
            coop.get_asset("credit", "com.agritech.Weigh_Ticket", "CR-1#incoming")
        # no credit key leaked into any coop-held state
        for channel_id, channel in coop.channels.items():
            for key, _value in channel.state.scan(""):
                assert "CR-1" not in key
        import os

        coop_channels = os.listdir(
            os.path.join(net.root_dir, "coop-node", "channels")
        )
        assert "credit" not in coop_channels

    def test_member_nodes_see_credit_data(self, net):
        client = Client(net)
        client.submit("deploy", {
            "contract_id": "grain", "version": 2, "operations": ["x"],
        }, submitter="admin", channel="credit", contract="_lifecycle")
        client.submit("record_weigh_in", {
            "Invoice_Number": "CR-2", "producer_id": "p-bank-01",
            "gross_kg": 1000, "tare_kg": 400,
        }, submitter="admin", channel="credit", contract="grain")
        for node_id in ("warehouse-node", "bank-node"):
            ticket = net.nodes[node_id].get_asset(
                "credit", "com.agritech.Weigh_Ticket", "CR-2#incoming"
            )
            assert ticket["net_kg"] == Decimal(600)


class TestChannelLifecycle:
    def _channel(self, channel_id="audit"):
        return {
            "channel_id": channel_id,
            "member_orgs": ["warehouse", "bank"],
            "endorsement_policy": "default",
            "batch_max_tx": 5,
            "batch_timeout_ms": 100,
            "contracts": [],
        }

    def test_create_channel_live_on_members_only(self, mem_net):
        mem_net.create_channel(self._channel())
        assert mem_net.nodes["warehouse-node"].is_member("audit")
        assert mem_net.nodes["bank-node"].is_member("audit")
        assert not mem_net.nodes["coop-node"].is_member("audit")
        conf = mem_net.nodes["bank-node"].channel_conf("audit")
        assert conf["member_orgs"] == ["warehouse", "bank"]

    def test_duplicate_channel_rejected(self, mem_net):
        mem_net.create_channel(self._channel())
        with pytest.raises(DuplicateChannel):
            mem_net.create_channel(self._channel())

    def test_non_admin_cannot_create(self, mem_net):
        with pytest.raises(Unauthorized):
            mem_net.create_channel(self._channel("rogue"),
                                   submitter="p-prod-01")

    def test_orderer_must_be_member(self, mem_net):
        bad = self._channel("no-orderer")
        bad["member_orgs"] = ["bank", "cooperative"]
        with pytest.raises(ValueError):
            mem_net.create_channel(bad)


class TestRevocation:
    def test_revoked_identity_invalidates_later_txs(self, mem_net):
        client = Client(mem_net)
        client.submit("register_silo", {"silo_id": "S1"}, submitter="p-qa-01")
        client.submit("revoke_identity", {"participant_id": "p-qa-01"},
                      submitter="admin", channel="governance",
                      contract="governance")
        env = client.envelope("register_silo", {"silo_id": "S2"},
                              submitter="p-qa-01")
        tx = mem_net.client_submit("warehouse-node", env)
        status = mem_net.await_tx("warehouse-node", tx)
        assert status["status"] == "INVALID"
        assert status["reason"] == "RevokedIdentity"


class TestThreadedMode:
    def test_threaded_network_commits_and_converges(self):
        net = network.Network(mode="threaded", delay_ms=(1, 3))
        net.bootstrap()
        try:
            client = Client(net)
            tx_ids = []
            for n in range(12):
                env = client.envelope("register_silo", {"silo_id": "T%02d" % n})
                tx_ids.append(net.client_submit("warehouse-node", env))
            deadline = time.time() + 15
            while time.time() < deadline:
                statuses = [
                    net.nodes["warehouse-node"].tx_status.get(t, {}).get("status")
                    for t in tx_ids
                ]
                if all(s == "VALID" for s in statuses):
                    break
                time.sleep(0.05)
            assert all(s == "VALID" for s in statuses)
            deadline = time.time() + 10
            while time.time() < deadline and not net.converged():
                for node in net.nodes.values():
                    node.sync_all()
                time.sleep(0.1)
            report = net.channel_report("gebn-main")
            assert len({r["state_hash"] for r in report}) == 1
        finally:
            net.stop()


class TestReplayability:
    def test_valid_txs_resimulate_to_identical_rwsets(self, mem_net):
        from grainledger.canonical import canonical_dumps

        client = Client(mem_net)
        client.submit("register_silo", {"silo_id": "S1"})
        client.intake("INV-1", moisture="14")
        client.intake("INV-2", moisture="12.5", silo="S1")
        node = mem_net.nodes["warehouse-node"]
        state = ledger.WorldState()
        gov_state = node.channels["governance"].state
        gov = ledger.GovernanceView(gov_state)
        checked = 0
        for block in node.channels["gebn-main"].store:
            for index, tx_record in enumerate(block["transactions"]):
                if tx_record["valid"]:
                    fresh = mem_net.engine.simulate(
                        tx_record["envelope"], state, gov
                    )
                    assert canonical_dumps(fresh) \
                        == canonical_dumps(tx_record["rwset"])
                    checked += 1
                    for key, value in tx_record["rwset"]["writes"]:
                        state.put(key, value, (block["height"], index))
        assert checked >= 12


class TestEventDelivery:
    def test_events_only_from_valid_txs_in_order(self, mem_net):
        client = Client(mem_net)
        client.submit("register_silo", {"silo_id": "S1"})
        client.intake("INV-1", moisture="14")
        # force an INVALID discount tx via a conflicting double-submit
        env_a = client.envelope("compute_discounts", {"Invoice_Number": "INV-1"})
        env_b = client.envelope("compute_discounts",
                                {"Invoice_Number": "INV-1", "mode": "verbatim"})
        mem_net.client_submit("warehouse-node", env_a)
        mem_net.client_submit("warehouse-node", env_b)
        mem_net.drain()
        statuses = {
            env_a["tx_id"]:
                mem_net.nodes["coop-node"].tx_status[env_a["tx_id"]]["status"],
            env_b["tx_id"]:
                mem_net.nodes["coop-node"].tx_status[env_b["tx_id"]]["status"],
        }
        assert sorted(statuses.values()) == ["INVALID", "VALID"]
        invalid_tx = next(t for t, s in statuses.items() if s == "INVALID")
        events = mem_net.nodes["coop-node"].event_log
        assert all(e["tx_id"] != invalid_tx for e in events)
        ordering = [(e["block_height"], e["tx_index"]) for e in events]
        assert ordering == sorted(ordering)
