// Provenance explorer: lot id in, interactive tree out.

import { ApiClient, ApiError } from "../api";
import { clear, h, input } from "../dom";
import { ProvNode, provenanceTree } from "../provenance";

export class ProvenanceView {
  lastDoc: Record<string, unknown> | null = null;
  lastTree: ProvNode | null = null;

  constructor(private api: ApiClient, private root: HTMLElement) {}

  render(): void {
    clear(this.root);
    const lotInput = input("lot", "");
    const results = h("div", { class: "prov-results" });
    this.root.append(
      h("h2", {}, "Provenance explorer"),
      h(
        "form",
        {
          class: "panel row",
          onsubmit: (ev: Event) => {
            ev.preventDefault();
            void this.lookup(lotInput.value, results);
          },
        },
        lotInput,
        h("button", { type: "submit" }, "Trace lot"),
      ),
      results,
    );
  }

  async lookup(lotId: string, results: HTMLElement): Promise<void> {
    clear(results);
    try {
      this.lastDoc = await this.api.provenance(lotId);
    } catch (err) {
      this.lastDoc = null;
      this.lastTree = null;
      if (err instanceof ApiError && err.httpStatus === 404) {
        results.append(
          h("div", { class: "banner warn", "data-testid": "lot-not-found" },
            `No lot ${lotId} on the ledger`),
        );
      } else {
        results.append(
          h("div", { class: "banner warn" }, String(err)),
        );
      }
      return;
    }
    this.lastTree = provenanceTree(this.lastDoc);
    results.append(this.renderNode(this.lastTree));
  }

  private renderNode(node: ProvNode): HTMLElement {
    const li = h(
      "div",
      { class: `prov-node prov-${node.kind}` },
      h("span", { class: "prov-label" }, node.label),
      node.txRef
        ? h("code", { class: "txid", title: node.txRef.txId },
            node.txRef.txId.slice(0, 10))
        : null,
    );
    for (const badge of node.badges) {
      li.append(h("span", { class: "badge" }, badge));
    }
    if (node.children.length) {
      const children = h("div", { class: "prov-children" });
      for (const child of node.children) {
        children.append(this.renderNode(child));
      }
      li.append(children);
    }
    return li;
  }
}
