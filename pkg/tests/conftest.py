import os
from decimal import Decimal

import pytest

from grainledger import contracts, grain, identity as ids, ledger, network

os.environ.setdefault("HYPOTHESIS_PROFILE", "default")


@pytest.fixture
def net(tmp_path):
    """Fresh deterministic 3-node network with persisted data dirs."""
    instance = network.Network(root_dir=str(tmp_path / "net"))
    instance.bootstrap()
    return instance


@pytest.fixture
def mem_net():
    """Fresh deterministic 3-node network, in-memory only."""
    instance = network.Network()
    instance.bootstrap()
    return instance


class Client:
    """Submit helper: builds, signs and optionally awaits transactions."""

    def __init__(self, net: network.Network, via: str = "warehouse-node"):
        self.net = net
        self.via = via

    def envelope(self, op, args, submitter="p-wh-01", channel="gebn-main",
                 contract="grain", timestamp=None):
        env = ledger.build_envelope(
            channel, contract, op, args, submitter,
            int(self.net.scheduler.now_ms) if timestamp is None else timestamp,
        )
        return ledger.finalize_envelope(env, self.net.participant_keys[submitter])

    def submit(self, op, args, submitter="p-wh-01", channel="gebn-main",
               contract="grain", wait=True):
        env = self.envelope(op, args, submitter, channel, contract)
        tx_id = self.net.client_submit(self.via, env)
        if wait:
            status = self.net.await_tx(self.via, tx_id)
            assert status["status"] == "VALID", (op, status)
        return tx_id

    def intake(self, invoice, silo="S1", moisture="14", impurity="3",
               broken="5", greenish="2", damaged="3", analyte="GMO",
               concentration="0.3", gross=42000, tare=15000,
               producer="p-prod-01", mode="corrected"):
        """Full intake for one cargo; returns the per-step tx ids."""
        txs = {}
        txs["weigh"] = self.submit("record_weigh_in", {
            "Invoice_Number": invoice, "producer_id": producer,
            "gross_kg": gross, "tare_kg": tare,
        })
        txs["extrinsic"] = self.submit("record_extrinsic", {
            "Invoice_Number": invoice, "Sample_Number": "SMP-" + invoice,
            "Moisture_Percent": Decimal(moisture),
            "Impurity_Percent": Decimal(impurity),
            "Broken_Percent": Decimal(broken),
            "Greenish_Percent": Decimal(greenish),
            "Damaged_Percent": Decimal(damaged),
        })
        txs["intrinsic"] = self.submit("record_intrinsic", {
            "Invoice_Number": invoice, "analyte": analyte,
            "concentration": Decimal(concentration),
            "strip_lot_id": "STRIP-T",
        })
        txs["discounts"] = self.submit("compute_discounts", {
            "Invoice_Number": invoice, "mode": mode,
        })
        txs["assign"] = self.submit("assign_silo", {
            "Invoice_Number": invoice, "silo_id": silo,
        })
        return txs


@pytest.fixture
def client(mem_net):
    return Client(mem_net)


def run_contract_op(state: ledger.WorldState, contract_id: str, op: str, args,
                    submitter=None, timestamp: int = 1000,
                    channel: str = "gebn-main"):
    """Execute one contract procedure directly and apply its writes."""
    submitter = submitter or {
        "participant_id": "p-wh-01", "role": "warehouse_operator",
        "org": "warehouse",
    }
    ctx = contracts.TransactionContext(channel, submitter, args, timestamp, state)
    library = contracts.base_library()
    grain.register_grain(library)
    if contract_id == contracts.LIFECYCLE_CONTRACT:
        proc = contracts.LIFECYCLE_OPERATIONS[op]
    else:
        proc = library.operations(contract_id)[op]
    proc(ctx, args)
    rwset = ctx.rwset()
    height = 1 + max(
        (v[1][0] for v in state.entries.values()), default=0
    )
    for index, (key, value) in enumerate(rwset["writes"]):
        state.put(key, value, (height, index))
    return rwset
