"""Demo scenarios: CSV fixture format, seeded generator, HTTP runner.

One CSV row is one incoming cargo: weigh-in, extrinsic grading, one
intrinsic analysis, discount computation and silo assignment. After all
rows, the runner records an outgoing ticket and cuts one lot per silo.
The same fixture pipeline feeds tests, the CLI and UI demos.
"""
from __future__ import annotations

import csv
import random
import time
from decimal import Decimal

import requests

CSV_COLUMNS = [
    "invoice", "producer", "gross_kg", "tare_kg",
    "M", "I", "B", "G", "D",
    "analyte", "concentration", "silo",
]

_DECIMAL_COLUMNS = ("gross_kg", "tare_kg", "M", "I", "B", "G", "D",
                    "concentration")


def generate_rows(count: int, seed: int = 7, silos: int = 2,
                  producers: tuple[str, ...] = ("p-prod-01",)) -> list[dict]:
    """Deterministic intake rows; identical output for identical arguments."""
    rng = random.Random(seed)
    rows = []
    for n in range(1, count + 1):
        gross = rng.randrange(30000, 45001, 10)
        tare = rng.randrange(12000, 16001, 10)
        gmo = rng.random() < 0.8
        rows.append({
            "invoice": "INV-%04d" % n,
            "producer": producers[(n - 1) % len(producers)],
            "gross_kg": Decimal(gross),
            "tare_kg": Decimal(tare),
            "M": Decimal(rng.randrange(100, 161)) / 10,
            "I": Decimal(rng.randrange(10, 61)) / 10,
            "B": Decimal(rng.randrange(20, 91)) / 10,
            "G": Decimal(rng.randrange(0, 41)) / 10,
            "D": Decimal(rng.randrange(10, 61)) / 10,
            "analyte": "GMO" if gmo else "aflatoxin",
            "concentration": (
                Decimal(rng.randrange(5, 251)) / 100 if gmo
                else Decimal(rng.randrange(0, 41))
            ),
            "silo": "S%d" % (1 + (n - 1) % silos),
        })
    return rows


def write_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: str(row[k]) for k in CSV_COLUMNS})


def read_csv(path: str) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = dict(raw)
            for column in _DECIMAL_COLUMNS:
                row[column] = Decimal(row[column])
            rows.append(row)
    return rows


# --- HTTP client ---------------------------------------------------------------

class ApiClient:
    """Thin wrapper over the node REST API."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()
        self.token: str | None = None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = "Bearer " + self.token
        return headers

    def login(self, username: str, password: str) -> dict:
        response = self.session.post(
            self.base_url + "/auth/login",
            json={"username": username, "password": password},
            timeout=self.timeout,
        )
        response.raise_for_status()
        doc = response.json()
        self.token = doc["token"]
        return doc

    def submit(self, contract_id: str, operation: str, args: dict,
               channel_id: str = "gebn-main") -> dict:
        response = self.session.post(
            self.base_url + "/transactions",
            data=_dumps({
                "contract_id": contract_id,
                "operation": operation,
                "args": args,
                "channel_id": channel_id,
            }),
            headers=self._headers(),
            timeout=self.timeout,
        )
        doc = response.json()
        doc["http_status"] = response.status_code
        return doc

    def tx_status(self, tx_id: str) -> dict:
        response = self.session.get(
            self.base_url + "/transactions/" + tx_id,
            headers=self._headers(), timeout=self.timeout,
        )
        response.raise_for_status()
        return response.json()

    def wait_tx(self, tx_id: str, timeout_s: float = 10.0,
                interval_s: float = 0.05) -> dict:
        deadline = time.time() + timeout_s
        while time.time() < deadline:
            status = self.tx_status(tx_id)
            if status["status"] != "PENDING":
                return status
            time.sleep(interval_s)
        return {"tx_id": tx_id, "status": "PENDING"}

    def get_asset(self, registry: str, key: str,
                  channel_id: str = "gebn-main") -> dict | None:
        response = self.session.get(
            "%s/assets/%s/%s" % (self.base_url, registry, key),
            params={"channel": channel_id},
            headers=self._headers(), timeout=self.timeout,
        )
        if response.status_code == 404:
            return None
        response.raise_for_status()
        return response.json()

    def provenance(self, lot_id: str, channel_id: str = "gebn-main") -> dict:
        response = self.session.get(
            self.base_url + "/provenance/lots/" + lot_id,
            params={"channel": channel_id},
            headers=self._headers(), timeout=self.timeout,
        )
        response.raise_for_status()
        return response.json()


def _dumps(doc) -> bytes:
    from grainledger.canonical import canonical_dumps

    return canonical_dumps(doc)


# --- runner -----------------------------------------------------------------------

_ROW_STAGES = ("weigh_in", "extrinsic", "intrinsic", "discounts", "assign_silo")


class ScenarioRunner:
    """Drives the full intake/lot flow against a live node API.

    Stages run in waves: every row's transaction for a stage is submitted,
    then all are awaited, so blocks fill up and batching is exercised.
    """

    def __init__(self, client: ApiClient, base_price: Decimal = Decimal("1.00"),
                 channel_id: str = "gebn-main", discount_mode: str = "corrected"):
        self.client = client
        self.base_price = base_price
        self.channel_id = channel_id
        self.discount_mode = discount_mode

    def _stage_args(self, stage: str, row: dict) -> tuple[str, dict]:
        invoice = row["invoice"]
        if stage == "weigh_in":
            return "record_weigh_in", {
                "Invoice_Number": invoice,
                "producer_id": row["producer"],
                "gross_kg": row["gross_kg"],
                "tare_kg": row["tare_kg"],
            }
        if stage == "extrinsic":
            return "record_extrinsic", {
                "Invoice_Number": invoice,
                "Sample_Number": "SMP-" + invoice,
                "Moisture_Percent": row["M"],
                "Impurity_Percent": row["I"],
                "Broken_Percent": row["B"],
                "Greenish_Percent": row["G"],
                "Damaged_Percent": row["D"],
            }
        if stage == "intrinsic":
            return "record_intrinsic", {
                "Invoice_Number": invoice,
                "Sample_Number": "SMP-" + invoice,
                "analyte": row["analyte"],
                "concentration": row["concentration"],
                "strip_lot_id": "STRIP-DEMO",
            }
        if stage == "discounts":
            return "compute_discounts", {
                "Invoice_Number": invoice,
                "mode": self.discount_mode,
            }
        return "assign_silo", {
            "Invoice_Number": invoice,
            "silo_id": row["silo"],
        }

    def _submit_wave(self, work: list[tuple[dict, str, dict]],
                     max_retries: int = 8) -> list[dict]:
        """Submit every (result, operation, args) then await each outcome.

        Writes to a shared key (one silo taking several cargos in a block)
        lose the multi-version check for all but one transaction; losers are
        resubmitted, which is the standard client response to a conflict.
        """
        outcomes = []
        for attempt in range(max_retries + 1):
            pending: list[tuple[dict, str, dict, str]] = []
            for result, operation, args in work:
                response = self.client.submit("grain", operation, args,
                                              self.channel_id)
                if response.get("http_status") != 202:
                    result["steps"][operation] = {
                        "status": "REJECTED",
                        "reason": "%s: %s" % (response.get("error"),
                                              response.get("message")),
                    }
                    result["ok"] = False
                else:
                    pending.append((result, operation, args, response["tx_id"]))
            retry = []
            for result, operation, args, tx_id in pending:
                status = self.client.wait_tx(tx_id)
                result["steps"][operation] = status
                if (status["status"] == "INVALID"
                        and status.get("reason") == "MvccConflict"
                        and attempt < max_retries):
                    retry.append((result, operation, args))
                elif status["status"] != "VALID":
                    result["ok"] = False
                    outcomes.append(status)
                else:
                    outcomes.append(status)
            if not retry:
                break
            work = retry
        return outcomes

    def run(self, rows: list[dict]) -> dict:
        results = [
            {"invoice": row["invoice"], "silo": row["silo"],
             "steps": {}, "ok": True}
            for row in rows
        ]

        # silos are shared fixtures: an already-registered silo is fine
        for silo_id in sorted({row["silo"] for row in rows}):
            response = self.client.submit(
                "grain", "register_silo", {"silo_id": silo_id}, self.channel_id
            )
            if response.get("http_status") == 202:
                self.client.wait_tx(response["tx_id"])

        for stage in _ROW_STAGES:
            wave = []
            for row, result in zip(rows, results):
                if result["ok"]:
                    operation, args = self._stage_args(stage, row)
                    wave.append((result, operation, args))
            if wave:
                self._submit_wave(wave)

        lots = []
        filled_silos = sorted({
            row["silo"] for row, result in zip(rows, results) if result["ok"]
        })
        for silo_id in filled_silos:
            silo = self.client.get_asset("com.agritech.Silo", silo_id,
                                         self.channel_id)
            if not silo or not silo["contributions"]:
                continue
            window = silo["current_lot_window"]
            out_invoice = "OUT-%s-W%s" % (silo_id, window)
            outcome = self._submit_wave([(
                {"steps": {}, "ok": True}, "record_weigh_in", {
                    "Invoice_Number": out_invoice,
                    "producer_id": "p-wh-01",
                    "gross_kg": Decimal(40000),
                    "tare_kg": Decimal(15000),
                    "direction": "outgoing",
                },
            )])
            if not outcome or outcome[0]["status"] != "VALID":
                lots.append({"silo": silo_id, "ok": False,
                             "reason": "outgoing ticket failed"})
                continue
            lot_result = {"steps": {}, "ok": True}
            self._submit_wave([(lot_result, "create_outgoing_lot", {
                "silo_id": silo_id,
                "outgoing_invoices": [out_invoice],
                "base_price_per_kg": self.base_price,
            })])
            status = lot_result["steps"].get("create_outgoing_lot", {})
            lots.append({
                "silo": silo_id,
                "ok": lot_result["ok"],
                "lot_id": "%s-W%s" % (silo_id, window),
                "tx": status,
            })

        ok = all(r["ok"] for r in results) and all(l["ok"] for l in lots)
        return {"ok": ok, "rows": results, "lots": lots}
