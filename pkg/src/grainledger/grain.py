"""Grain business network: intake workflow, quality discounts, silos, lots.

The discount calculation ships in two modes. "corrected" applies each
grading term against its own field; "verbatim" reproduces the deployed
contract source line for line, where the broken and damaged terms read the
moisture and impurity fields instead. Both are first-class: the corrected
mode drives the business flow, the verbatim mode preserves fidelity to the
original contract.

All monetary and mass values use exact decimals, rounded half-even to four
fractional digits at write time.
"""
from __future__ import annotations

from decimal import Decimal

from grainledger import identity as ids
from grainledger.canonical import canonical_dumps
from grainledger.contracts import TransactionContext, q4
from grainledger.errors import (
    BadWeights,
    ContractAbort,
    DuplicateInvoice,
    EmptySilo,
    GrainMismatch,
    IncompleteIntake,
    LotNotFound,
    NoWeighTicket,
    UncommittedTicket,
    UnknownAnalyte,
)
from grainledger.ledger import BlockStore, WorldState

GRAIN_CONTRACT = "grain"

REG_WEIGH = "com.agritech.Weigh_Ticket"
REG_EXTRINSIC = "com.agritech.Extrinsic_Analysis"
REG_INTRINSIC = "com.agritech.Intrinsic_Analysis"
REG_INTAKE = "com.agritech.Intake"
REG_SILO = "com.agritech.Silo"
REG_LOT = "com.agritech.Lot"

GRAIN_TYPES = ("soy", "corn")
ANALYTES = ("GMO", "aflatoxin", "fumonisin", "DON")

# GMO threshold and aflatoxin limit follow widespread labeling/regulatory
# practice; all four are configuration, overridable per channel.
DEFAULT_GRAIN_CONFIG = {
    "gm_free_threshold_percent": Decimal("0.9"),
    "toxin_limits_ppb": {
        "aflatoxin": Decimal("20"),
        "fumonisin": Decimal("4000"),
        "DON": Decimal("1250"),
    },
    "gm_free_premium": Decimal("0.15"),
}

PERCENT_FIELDS = (
    "Moisture_Percent",
    "Impurity_Percent",
    "Broken_Percent",
    "Greenish_Percent",
    "Damaged_Percent",
)


def _dec(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(repr(value))
    return Decimal(value)


def discount_total(moisture, impurity, broken, damaged,
                   mode: str = "corrected") -> Decimal:
    """Soybean quality discount, as a percent of net weight.

    Thresholds: moisture 12, impurity 3, broken 5, damaged 3; weights
    4 / 2.5 / 1 / 3.5 per percentage point over.
    """
    m, i, b, d = _dec(moisture), _dec(impurity), _dec(broken), _dec(damaged)
    total = Decimal(0)
    if m > 12:
        total += (m - 12) * 4
    if i > 3:
        total += (i - 3) * Decimal("2.5")
    if mode == "corrected":
        if b > 5:
            total += (b - 5) * 1
        if d > 3:
            total += (d - 3) * Decimal("3.5")
    elif mode == "verbatim":
        # original contract reads moisture/impurity inside these branches
        if b > 5:
            total += (m - 5) * 1
        if d > 3:
            total += (i - 3) * Decimal("3.5")
    else:
        raise ContractAbort("unknown discount mode %r" % mode)
    return total


def grain_config(ctx: TransactionContext) -> dict:
    config = ctx.get_state("_config#grain") or {}
    merged = {
        "gm_free_threshold_percent": _dec(
            config.get("gm_free_threshold_percent",
                       DEFAULT_GRAIN_CONFIG["gm_free_threshold_percent"])
        ),
        "gm_free_premium": _dec(
            config.get("gm_free_premium",
                       DEFAULT_GRAIN_CONFIG["gm_free_premium"])
        ),
        "toxin_limits_ppb": {
            analyte: _dec(limit)
            for analyte, limit in {
                **DEFAULT_GRAIN_CONFIG["toxin_limits_ppb"],
                **config.get("toxin_limits_ppb", {}),
            }.items()
        },
    }
    return merged


# --- contract operations ------------------------------------------------------

def register_silo_op(ctx: TransactionContext, args) -> None:
    grain = args.get("grain", "soy")
    if grain not in GRAIN_TYPES:
        raise ContractAbort("unknown grain %r" % grain)
    ctx.registry_add(REG_SILO, args["silo_id"], {
        "silo_id": args["silo_id"],
        "grain": grain,
        "current_lot_window": 1,
        "contributions": [],
    })


def record_weigh_in_op(ctx: TransactionContext, args) -> None:
    invoice = args["Invoice_Number"]
    direction = args.get("direction", "incoming")
    if direction not in ("incoming", "outgoing"):
        raise ContractAbort("direction must be incoming or outgoing")
    gross = _dec(args["gross_kg"])
    tare = _dec(args["tare_kg"])
    net = gross - tare
    if net <= 0:
        raise BadWeights("net weight %s is not positive" % net)
    key = invoice + "#" + direction
    if ctx.registry_get_optional(REG_WEIGH, key) is not None:
        raise DuplicateInvoice(
            "weigh ticket exists for %s %s" % (direction, invoice)
        )
    ctx.registry_add(REG_WEIGH, key, {
        "Invoice_Number": invoice,
        "producer_id": args["producer_id"],
        "truck_plate": args.get("truck_plate", ""),
        "gross_kg": gross,
        "tare_kg": tare,
        "net_kg": net,
        "direction": direction,
        "grain": args.get("grain", "soy"),
        "timestamp": ctx.timestamp,
    })
    if direction == "incoming":
        ctx.registry_add(REG_INTAKE, invoice, {
            "Invoice_Number": invoice,
            "producer_id": args["producer_id"],
            "ticket": True,
            "extrinsic": False,
            "analytes": [],
            "silo_id": None,
        })


def _require_incoming_ticket(ctx: TransactionContext, invoice: str) -> dict:
    ticket = ctx.registry_get_optional(REG_WEIGH, invoice + "#incoming")
    if ticket is None:
        raise NoWeighTicket("no incoming weigh ticket for %s" % invoice)
    return ticket


def record_extrinsic_op(ctx: TransactionContext, args) -> None:
    invoice = args["Invoice_Number"]
    _require_incoming_ticket(ctx, invoice)
    asset = {
        "Invoice_Number": invoice,
        "operator": ctx.submitter["participant_id"],
        "date": ctx.timestamp,
        "Sample_Number": args.get("Sample_Number", ""),
        "Total_Discounts_KG": Decimal(0),
    }
    for field in PERCENT_FIELDS:
        value = _dec(args[field])
        if value < 0 or value > 100:
            raise ContractAbort("%s=%s outside [0,100]" % (field, value))
        asset[field] = value
    if ctx.registry_get_optional(REG_EXTRINSIC, invoice) is not None:
        raise DuplicateInvoice("extrinsic analysis exists for %s" % invoice)
    ctx.registry_add(REG_EXTRINSIC, invoice, asset)
    intake = dict(ctx.registry_get(REG_INTAKE, invoice))
    intake["extrinsic"] = True
    ctx.registry_update(REG_INTAKE, invoice, intake)


def record_intrinsic_op(ctx: TransactionContext, args) -> None:
    invoice = args["Invoice_Number"]
    analyte = args["analyte"]
    config = grain_config(ctx)
    if analyte == "GMO":
        limit = config["gm_free_threshold_percent"]
    elif analyte in config["toxin_limits_ppb"]:
        limit = config["toxin_limits_ppb"][analyte]
    else:
        raise UnknownAnalyte("analyte %r is not configured" % analyte)
    _require_incoming_ticket(ctx, invoice)
    concentration = _dec(args["concentration"])
    if concentration < 0:
        raise ContractAbort("concentration must be non-negative")
    passed = concentration < limit if analyte == "GMO" else concentration <= limit
    ctx.registry_add(REG_INTRINSIC, invoice + "#" + analyte, {
        "Invoice_Number": invoice,
        "Sample_Number": args.get("Sample_Number", ""),
        "analyte": analyte,
        "concentration": concentration,
        "strip_lot_id": args.get("strip_lot_id", ""),
        "operator": ctx.submitter["participant_id"],
        "date": ctx.timestamp,
        "pass": passed,
    })
    intake = dict(ctx.registry_get(REG_INTAKE, invoice))
    if analyte not in intake["analytes"]:
        intake["analytes"] = intake["analytes"] + [analyte]
    ctx.registry_update(REG_INTAKE, invoice, intake)


def compute_discounts_op(ctx: TransactionContext, args) -> None:
    invoice = args["Invoice_Number"]
    mode = args.get("mode", "corrected")
    asset = dict(ctx.registry_get(REG_EXTRINSIC, invoice))
    total = discount_total(
        asset["Moisture_Percent"], asset["Impurity_Percent"],
        asset["Broken_Percent"], asset["Damaged_Percent"], mode,
    )
    asset["Total_Discounts_KG"] = q4(total)
    ctx.registry_update(REG_EXTRINSIC, invoice, asset)
    ctx.emit("DiscountsEvent", {"asset": asset, "mode": mode})


def assign_silo_op(ctx: TransactionContext, args) -> None:
    invoice = args["Invoice_Number"]
    silo_id = args["silo_id"]
    intake = ctx.registry_get_optional(REG_INTAKE, invoice)
    if intake is None:
        raise IncompleteIntake("no intake case for %s" % invoice)
    if not intake["extrinsic"]:
        raise IncompleteIntake("extrinsic analysis missing for %s" % invoice)
    if not intake["analytes"]:
        raise IncompleteIntake("intrinsic analysis missing for %s" % invoice)
    if intake.get("silo_id"):
        raise ContractAbort("%s already assigned to silo %s"
                            % (invoice, intake["silo_id"]))
    silo = dict(ctx.registry_get(REG_SILO, silo_id))
    ticket = _require_incoming_ticket(ctx, invoice)
    if ticket.get("grain", "soy") != silo["grain"]:
        raise GrainMismatch(
            "cargo %s is %s but silo %s stores %s"
            % (invoice, ticket.get("grain"), silo_id, silo["grain"])
        )
    extrinsic = ctx.registry_get(REG_EXTRINSIC, invoice)
    discount = _dec(extrinsic["Total_Discounts_KG"])
    contribution = q4(_dec(ticket["net_kg"]) * (1 - discount / 100))
    silo["contributions"] = silo["contributions"] + [[invoice, contribution]]
    ctx.registry_update(REG_SILO, silo_id, silo)
    updated = dict(intake)
    updated["silo_id"] = silo_id
    ctx.registry_update(REG_INTAKE, invoice, updated)


def create_outgoing_lot_op(ctx: TransactionContext, args) -> None:
    silo_id = args["silo_id"]
    silo = dict(ctx.registry_get(REG_SILO, silo_id))
    if not silo["contributions"]:
        raise EmptySilo("silo %s has no contributions in this window" % silo_id)
    outgoing = list(args.get("outgoing_invoices", []))
    for invoice in outgoing:
        if ctx.registry_get_optional(REG_WEIGH, invoice + "#outgoing") is None:
            raise UncommittedTicket(
                "no outgoing weigh ticket for %s" % invoice
            )
    config = grain_config(ctx)
    threshold = config["gm_free_threshold_percent"]
    certified = True
    for invoice, _kg in silo["contributions"]:
        gmo = ctx.registry_get_optional(REG_INTRINSIC, invoice + "#GMO")
        if gmo is None or _dec(gmo["concentration"]) >= threshold:
            certified = False
            break
    base = q4(args["base_price_per_kg"])
    final = q4(base * (1 + config["gm_free_premium"])) if certified else base
    window = silo["current_lot_window"]
    lot_id = args.get("lot_id") or "%s-W%d" % (silo_id, window)
    lot = {
        "lot_id": lot_id,
        "silo_id": silo_id,
        "lot_window": window,
        "outgoing_tickets": outgoing,
        "gm_free_certified": certified,
        "base_price_per_kg": base,
        "final_price_per_kg": final,
        "created_at": ctx.timestamp,
    }
    ctx.registry_add(REG_LOT, lot_id, lot)
    silo["current_lot_window"] = window + 1
    silo["contributions"] = []
    ctx.registry_update(REG_SILO, silo_id, silo)
    ctx.emit("LotCreatedEvent", {"lot": lot})


GRAIN_OPERATIONS = {
    "register_silo": register_silo_op,
    "record_weigh_in": record_weigh_in_op,
    "record_extrinsic": record_extrinsic_op,
    "record_intrinsic": record_intrinsic_op,
    "compute_discounts": compute_discounts_op,
    "assign_silo": assign_silo_op,
    "create_outgoing_lot": create_outgoing_lot_op,
}


def register_grain(library) -> None:
    library.register(GRAIN_CONTRACT, GRAIN_OPERATIONS)


def grain_manifest_args() -> dict:
    return {
        "contract_id": GRAIN_CONTRACT,
        "version": 1,
        "operations": sorted(GRAIN_OPERATIONS),
        "endorsement_policy_ref": "default",
        "config": {"grain": DEFAULT_GRAIN_CONFIG},
    }


# --- committed-ledger queries ----------------------------------------------------

def _write_index(store: BlockStore) -> dict[str, list[tuple[str, object]]]:
    """key -> ordered [(tx_id, value)] across all VALID transactions."""
    index: dict[str, list[tuple[str, object]]] = {}
    for block in store:
        for tx_record in block["transactions"]:
            if not tx_record["valid"]:
                continue
            tx_id = tx_record["envelope"]["tx_id"]
            for key, value in tx_record["rwset"]["writes"]:
                index.setdefault(key, []).append((tx_id, value))
    return index


def _event_tx_ids(store: BlockStore, event_name: str, invoice: str) -> list[str]:
    found = []
    for block in store:
        for tx_record in block["transactions"]:
            if not tx_record["valid"]:
                continue
            for event in tx_record["rwset"]["events"]:
                if event["event_name"] != event_name:
                    continue
                asset = event["payload"].get("asset", {})
                if asset.get("Invoice_Number") == invoice:
                    found.append(tx_record["envelope"]["tx_id"])
    return found


def _last_tx_for(index: dict, key: str) -> str | None:
    writes = index.get(key)
    return writes[-1][0] if writes else None


def _with_tx(doc, tx_id):
    if doc is None:
        return None
    out = dict(doc)
    out["tx_id"] = tx_id
    return out


def _window_contributions(index: dict, silo_id: str, window: int) -> list:
    """Contribution set of a past silo window, reconstructed from history."""
    contributions: list = []
    for _tx_id, value in index.get(REG_SILO + "#" + silo_id, []):
        if value["current_lot_window"] == window and value["contributions"]:
            contributions = value["contributions"]
    return contributions


def trace_lot_provenance(store: BlockStore, state: WorldState, lot_id: str) -> dict:
    """Provenance tree for an outgoing lot, from committed ledger data only."""
    lot = state.get_value(REG_LOT + "#" + lot_id)
    if lot is None:
        raise LotNotFound("lot %r not committed" % lot_id)
    index = _write_index(store)
    silo_id, window = lot["silo_id"], lot["lot_window"]

    contributions = []
    for invoice, kg in _window_contributions(index, silo_id, window):
        ticket_key = REG_WEIGH + "#" + invoice + "#incoming"
        extr_key = REG_EXTRINSIC + "#" + invoice
        ticket = state.get_value(ticket_key)
        intrinsics = []
        for key, value in state.scan(REG_INTRINSIC + "#" + invoice + "#"):
            intrinsics.append(_with_tx(value, _last_tx_for(index, key)))
        contributions.append({
            "invoice": invoice,
            "producer": ticket["producer_id"] if ticket else None,
            "net_kg_after_discounts": kg,
            "weigh_ticket": _with_tx(ticket, _last_tx_for(index, ticket_key)),
            "extrinsic_analysis": _with_tx(
                state.get_value(extr_key), _last_tx_for(index, extr_key)
            ),
            "intrinsic_analyses": intrinsics,
            "discount_event_tx_ids": _event_tx_ids(store, "DiscountsEvent", invoice),
        })

    outgoing = []
    for invoice in lot["outgoing_tickets"]:
        key = REG_WEIGH + "#" + invoice + "#outgoing"
        outgoing.append(_with_tx(state.get_value(key), _last_tx_for(index, key)))

    return {
        "lot": _with_tx(lot, _last_tx_for(index, REG_LOT + "#" + lot_id)),
        "silo_id": silo_id,
        "lot_window": window,
        "outgoing_tickets": outgoing,
        "contributions": contributions,
    }


def issue_ingest_receipt(store: BlockStore, state: WorldState, invoice: str,
                         signer_id: str, keypair: ids.KeyPair) -> dict:
    """Signed intake receipt, verifiable offline against on-ledger tx ids."""
    intake = state.get_value(REG_INTAKE + "#" + invoice)
    if intake is None:
        raise IncompleteIntake("no intake case for %s" % invoice)
    if not (intake["ticket"] and intake["extrinsic"] and intake["analytes"]
            and intake.get("silo_id")):
        raise IncompleteIntake("intake for %s is not complete" % invoice)
    index = _write_index(store)
    ticket_key = REG_WEIGH + "#" + invoice + "#incoming"
    extr_key = REG_EXTRINSIC + "#" + invoice
    ticket = state.get_value(ticket_key)
    extrinsic = state.get_value(extr_key)
    intrinsic_tx_ids = {
        analyte: _last_tx_for(index, REG_INTRINSIC + "#" + invoice + "#" + analyte)
        for analyte in intake["analytes"]
    }
    document = {
        "invoice": invoice,
        "producer": ticket["producer_id"],
        "net_kg": ticket["net_kg"],
        "discounts_percent": extrinsic["Total_Discounts_KG"],
        "greenish_percent": extrinsic["Greenish_Percent"],
        "silo": intake["silo_id"],
        "tx_ids": {
            "weigh_ticket": _last_tx_for(index, ticket_key),
            "extrinsic_analysis": _last_tx_for(index, extr_key),
            "intrinsic_analyses": intrinsic_tx_ids,
            "discount_events": _event_tx_ids(store, "DiscountsEvent", invoice),
            "silo_assignment": _last_tx_for(index, REG_INTAKE + "#" + invoice),
        },
    }
    signature = keypair.sign(canonical_dumps(document))
    return {
        "document": document,
        "signer": signer_id,
        "scheme": ids.SCHEME_ED25519,
        "signature": signature,
    }


def verify_receipt(receipt: dict, public_hex: str,
                   store: BlockStore | None = None) -> bool:
    """Check the detached signature and, given the chain, the cited tx ids."""
    data = canonical_dumps(receipt["document"])
    if not ids.verify_signature(public_hex, receipt["signature"], data):
        return False
    if store is not None:
        on_chain = set()
        for block in store:
            for tx_record in block["transactions"]:
                on_chain.add(tx_record["envelope"]["tx_id"])
        cited = receipt["document"]["tx_ids"]
        flat = [cited["weigh_ticket"], cited["extrinsic_analysis"],
                cited["silo_assignment"]]
        flat.extend(cited["intrinsic_analyses"].values())
        flat.extend(cited["discount_events"])
        if not all(tx_id in on_chain for tx_id in flat if tx_id):
            return False
    return True
