// View model for the provenance explorer: a tree of labelled nodes, each
// carrying its on-ledger transaction reference. Built 1:1 from the API
// document; nothing is recomputed.

export interface TxRef {
  txId: string;
  blockHeight?: number;
}

export interface ProvNode {
  kind: string;
  label: string;
  txRef: TxRef | null;
  badges: string[];
  detail: Record<string, unknown>;
  children: ProvNode[];
}

type Doc = Record<string, unknown>;

function txRefOf(doc: Doc | null | undefined): TxRef | null {
  if (!doc || typeof doc["tx_id"] !== "string") return null;
  return { txId: doc["tx_id"] as string };
}

export function provenanceTree(doc: Doc): ProvNode {
  const lot = (doc["lot"] ?? {}) as Doc;
  const contributions = (doc["contributions"] ?? []) as Doc[];
  const outgoing = (doc["outgoing_tickets"] ?? []) as (Doc | null)[];

  const badges: string[] = [];
  if (lot["gm_free_certified"]) {
    badges.push("GM-free certified");
    badges.push(`premium price ${String(lot["final_price_per_kg"])}`);
  } else {
    badges.push(`base price ${String(lot["final_price_per_kg"])}`);
  }

  const contributionNodes = contributions.map((c): ProvNode => {
    const children: ProvNode[] = [];
    const ticket = c["weigh_ticket"] as Doc | null;
    if (ticket) {
      children.push({
        kind: "weigh_ticket",
        label: `weigh ticket ${String(ticket["net_kg"])} kg`,
        txRef: txRefOf(ticket),
        badges: [],
        detail: ticket,
        children: [],
      });
    }
    const extrinsic = c["extrinsic_analysis"] as Doc | null;
    if (extrinsic) {
      children.push({
        kind: "extrinsic_analysis",
        label: `extrinsic analysis (discount ${String(
          extrinsic["Total_Discounts_KG"],
        )})`,
        txRef: txRefOf(extrinsic),
        badges: [],
        detail: extrinsic,
        children: [],
      });
    }
    for (const intrinsic of (c["intrinsic_analyses"] ?? []) as Doc[]) {
      children.push({
        kind: "intrinsic_analysis",
        label: `${String(intrinsic["analyte"])} ${String(
          intrinsic["concentration"],
        )} (${intrinsic["pass"] ? "pass" : "fail"})`,
        txRef: txRefOf(intrinsic),
        badges: [],
        detail: intrinsic,
        children: [],
      });
    }
    for (const txId of (c["discount_event_tx_ids"] ?? []) as string[]) {
      children.push({
        kind: "discount_event",
        label: "discount event",
        txRef: { txId },
        badges: [],
        detail: {},
        children: [],
      });
    }
    return {
      kind: "contribution",
      label: `${String(c["invoice"])} from ${String(c["producer"])} — ${String(
        c["net_kg_after_discounts"],
      )} kg`,
      txRef: null,
      badges: [],
      detail: c,
      children,
    };
  });

  const outgoingNodes = outgoing
    .filter((t): t is Doc => t !== null)
    .map((t): ProvNode => ({
      kind: "outgoing_ticket",
      label: `outgoing ${String(t["Invoice_Number"])} — ${String(
        t["net_kg"],
      )} kg`,
      txRef: txRefOf(t),
      badges: [],
      detail: t,
      children: [],
    }));

  return {
    kind: "lot",
    label: `lot ${String(lot["lot_id"])}`,
    txRef: txRefOf(lot),
    badges,
    detail: lot,
    children: [
      {
        kind: "silo_window",
        label: `silo ${String(doc["silo_id"])} window ${String(
          doc["lot_window"],
        )}`,
        txRef: null,
        badges: [],
        detail: {},
        children: contributionNodes,
      },
      ...outgoingNodes,
    ],
  };
}

export function flattenTree(node: ProvNode): ProvNode[] {
  return [node, ...node.children.flatMap(flattenTree)];
}
