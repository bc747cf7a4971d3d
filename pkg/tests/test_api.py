"""REST API per node: auth, submission, queries, event stream."""
import threading
import time
from decimal import Decimal

import pytest
import requests

from grainledger import api as api_mod, network
from grainledger.api import NodeApi
from tests.conftest import Client

PASSWORDS = {
    "admin": "admin-pw",
    "p-qa-01": "qa-pw",
    "p-wh-01": "wh-pw",
    "p-prod-01": "prod-pw",
    "p-bank-01": "bank-pw",
}


@pytest.fixture(scope="module")
def live():
    """Threaded network with APIs on the warehouse and coop nodes."""
    net = network.Network(mode="threaded", delay_ms=(1, 2))
    net.bootstrap()
    servers = {}
    apis = {}
    for node_id in ("warehouse-node", "coop-node"):
        node = net.nodes[node_id]
        org_participants = [
            p for p in net.topology["participants"] if p["org"] == node.org
        ]
        credentials = api_mod.build_credentials(org_participants, PASSWORDS)
        keyring = {
            p["participant_id"]: net.participant_keys[p["participant_id"]]
            for p in org_participants
        }
        node_api = NodeApi(node, net, credentials, keyring)
        server = api_mod.ApiServer(node_api, "127.0.0.1:0")
        server.start()
        servers[node_id] = server
        apis[node_id] = node_api
    sync_stop = threading.Event()

    def syncer():
        while not sync_stop.wait(0.2):
            for node in net.nodes.values():
                node.sync_all()

    thread = threading.Thread(target=syncer, daemon=True)
    thread.start()
    yield {
        "net": net,
        "base": "http://127.0.0.1:%d" % servers["warehouse-node"].port,
        "coop_base": "http://127.0.0.1:%d" % servers["coop-node"].port,
    }
    sync_stop.set()
    for server in servers.values():
        server.stop()
    net.stop()


def login(base, username, password):
    response = requests.post(
        base + "/auth/login",
        json={"username": username, "password": password}, timeout=5,
    )
    return response


def auth_headers(base, username="p-wh-01", password="wh-pw"):
    token = login(base, username, password).json()["token"]
    return {"Authorization": "Bearer " + token}


def submit_and_wait(base, headers, operation, args, channel="gebn-main",
                    contract="grain", timeout=10.0):
    response = requests.post(
        base + "/transactions",
        json=None,
        data=api_mod.canonical_dumps({
            "contract_id": contract, "operation": operation,
            "args": args, "channel_id": channel,
        }),
        headers={**headers, "Content-Type": "application/json"},
        timeout=5,
    )
    if response.status_code != 202:
        return response.status_code, response.json()
    tx_id = response.json()["tx_id"]
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = requests.get(
            base + "/transactions/" + tx_id, headers=headers, timeout=5
        ).json()
        if status["status"] != "PENDING":
            return 202, status
        time.sleep(0.05)
    return 202, {"status": "PENDING", "tx_id": tx_id}


class TestAuth:
    def test_healthz_is_open(self, live):
        response = requests.get(live["base"] + "/healthz", timeout=5)
        assert response.status_code == 200
        assert response.json()["node_id"] == "warehouse-node"

    def test_login_returns_role(self, live):
        doc = login(live["base"], "p-qa-01", "qa-pw").json()
        assert doc["role"] == "qa_operator" and doc["token"]

    def test_wrong_password_401(self, live):
        assert login(live["base"], "p-qa-01", "wrong").status_code == 401

    def test_unknown_user_401(self, live):
        assert login(live["base"], "ghost", "x").status_code == 401

    def test_missing_token_401(self, live):
        response = requests.get(live["base"] + "/node", timeout=5)
        assert response.status_code == 401

    def test_garbage_token_401(self, live):
        response = requests.get(
            live["base"] + "/node",
            headers={"Authorization": "Bearer feedface"}, timeout=5,
        )
        assert response.status_code == 401

    def test_revoked_identity_423(self, live):
        net = live["net"]
        client = Client(net)
        env = client.envelope("register_participant", {
            "participant": {"participant_id": "p-tmp", "org": "warehouse",
                            "role": "qa_operator"},
            "identity": {"public_key": "ab" * 32},
        }, submitter="admin", channel="governance", contract="governance")
        tx = net.client_submit("warehouse-node", env)
        assert net.await_tx("warehouse-node", tx)["status"] == "VALID"
        env = client.envelope("revoke_identity", {"participant_id": "p-tmp"},
                              submitter="admin", channel="governance",
                              contract="governance")
        tx = net.client_submit("warehouse-node", env)
        assert net.await_tx("warehouse-node", tx)["status"] == "VALID"
        api = NodeApi(
            net.nodes["warehouse-node"], net,
            api_mod.build_credentials(
                [{"participant_id": "p-tmp", "org": "warehouse",
                  "role": "qa_operator"}], {"p-tmp": "pw"},
            ),
            {},
        )
        with pytest.raises(api_mod.ApiError) as err:
            api.login("p-tmp", "pw")
        assert err.value.status == 423


class TestTransactions:
    def test_full_intake_via_api(self, live):
        headers = auth_headers(live["base"])
        code, status = submit_and_wait(live["base"], headers, "register_silo",
                                       {"silo_id": "API-S1"})
        assert (code, status["status"]) == (202, "VALID")
        code, status = submit_and_wait(live["base"], headers, "record_weigh_in", {
            "Invoice_Number": "API-1", "producer_id": "p-prod-01",
            "gross_kg": 42000, "tare_kg": 15000,
        })
        assert status["status"] == "VALID"
        code, status = submit_and_wait(live["base"], headers, "record_extrinsic", {
            "Invoice_Number": "API-1", "Sample_Number": "s",
            "Moisture_Percent": 14, "Impurity_Percent": 3,
            "Broken_Percent": 5, "Greenish_Percent": 2, "Damaged_Percent": 3,
        })
        assert status["status"] == "VALID"
        code, status = submit_and_wait(live["base"], headers,
                                       "compute_discounts",
                                       {"Invoice_Number": "API-1"})
        assert status["status"] == "VALID"
        headers2 = auth_headers(live["base"])
        response = requests.get(
            live["base"] + "/assets/com.agritech.Extrinsic_Analysis/API-1",
            headers=headers2, timeout=5,
        )
        assert response.status_code == 200
        assert Decimal(str(response.json()["Total_Discounts_KG"])) == Decimal(8)

    def test_abort_maps_to_422(self, live):
        headers = auth_headers(live["base"])
        code, body = submit_and_wait(live["base"], headers, "compute_discounts",
                                     {"Invoice_Number": "GHOST-404"})
        assert code == 422
        assert body["error"] == "AssetNotFound"

    def test_producer_cannot_deploy_403(self, live):
        headers = auth_headers(live["coop_base"], "p-prod-01", "prod-pw")
        code, body = submit_and_wait(
            live["coop_base"], headers, "deploy",
            {"contract_id": "grain", "version": 9, "operations": []},
            contract="_lifecycle",
        )
        assert code == 403
        assert body["error"] == "AclDenied"

    def test_unknown_tx_404(self, live):
        headers = auth_headers(live["base"])
        response = requests.get(
            live["base"] + "/transactions/" + "ab" * 32,
            headers=headers, timeout=5,
        )
        assert response.status_code == 404

    def test_duplicate_invoice_maps_to_422(self, live):
        headers = auth_headers(live["base"])
        args = {"Invoice_Number": "API-DUP", "producer_id": "p",
                "gross_kg": 100, "tare_kg": 50}
        code, status = submit_and_wait(live["base"], headers,
                                       "record_weigh_in", args)
        assert status["status"] == "VALID"
        code, body = submit_and_wait(live["base"], headers,
                                     "record_weigh_in", args)
        assert code == 422 and body["error"] == "DuplicateInvoice"


class TestQueries:
    def test_filter_by_operator(self, live):
        headers = auth_headers(live["base"], "p-qa-01", "qa-pw")
        submit_and_wait(live["base"], headers, "record_weigh_in", {
            "Invoice_Number": "API-F1", "producer_id": "p-prod-01",
            "gross_kg": 9000, "tare_kg": 4000,
        })
        response = requests.get(
            live["base"] + "/assets/com.agritech.Weigh_Ticket",
            params={"producer_id": "p-prod-01", "limit": "100"},
            headers=headers, timeout=5,
        )
        assert response.status_code == 200
        assets = response.json()["assets"]
        assert assets and all(
            a["producer_id"] == "p-prod-01" for a in assets
        )

    def test_channel_membership_enforced_403(self, live):
        headers = auth_headers(live["coop_base"], "p-prod-01", "prod-pw")
        response = requests.get(
            live["coop_base"] + "/assets/com.agritech.Weigh_Ticket",
            params={"channel": "credit"},
            headers=headers, timeout=5,
        )
        assert response.status_code == 403

    def test_absent_asset_404(self, live):
        headers = auth_headers(live["base"])
        response = requests.get(
            live["base"] + "/assets/com.agritech.Lot/NOPE",
            headers=headers, timeout=5,
        )
        assert response.status_code == 404

    def test_provenance_unknown_lot_404(self, live):
        headers = auth_headers(live["base"])
        response = requests.get(
            live["base"] + "/provenance/lots/NOPE",
            headers=headers, timeout=5,
        )
        assert response.status_code == 404


class TestEventStream:
    def _read_events(self, base, headers, count, timeout=10.0, params=None):
        events = []
        response = requests.get(
            base + "/events/stream", headers=headers, stream=True,
            timeout=timeout, params=params or {},
        )
        current = {}
        for line in response.iter_lines(decode_unicode=True):
            if line.startswith("id: "):
                current["id"] = int(line[4:])
            elif line.startswith("event: "):
                current["event"] = line[7:]
            elif line.startswith("data: "):
                current["data"] = line[6:]
            elif line == "" and current.get("event"):
                events.append(current)
                current = {}
                if len(events) >= count:
                    break
        response.close()
        return events

    def test_discount_event_delivered_once_in_order(self, live):
        headers = auth_headers(live["base"])
        submit_and_wait(live["base"], headers, "record_weigh_in", {
            "Invoice_Number": "EVT-1", "producer_id": "p",
            "gross_kg": 5000, "tare_kg": 2000,
        })
        submit_and_wait(live["base"], headers, "record_extrinsic", {
            "Invoice_Number": "EVT-1", "Sample_Number": "s",
            "Moisture_Percent": 13, "Impurity_Percent": 1,
            "Broken_Percent": 1, "Greenish_Percent": 1, "Damaged_Percent": 1,
        })
        submit_and_wait(live["base"], headers, "compute_discounts",
                        {"Invoice_Number": "EVT-1"})
        events = self._read_events(live["base"], headers, count=1)
        assert events and events[0]["event"] == "DiscountsEvent"
        ids_seen = [e["id"] for e in events]
        assert ids_seen == sorted(ids_seen)

    def test_resume_after_last_event_id(self, live):
        headers = auth_headers(live["base"])
        first = self._read_events(live["base"], headers, count=1)
        last_id = first[0]["id"]
        resumed = self._read_events(
            live["base"],
            {**headers, "Last-Event-ID": str(last_id)},
            count=1,
        )
        assert all(e["id"] > last_id for e in resumed)


class TestPasswordHashing:
    def test_roundtrip(self):
        record = api_mod.hash_password("hunter2")
        assert api_mod.check_password("hunter2", record)
        assert not api_mod.check_password("hunter3", record)

    def test_salted(self):
        a = api_mod.hash_password("same")
        b = api_mod.hash_password("same")
        assert a["hash"] != b["hash"]
