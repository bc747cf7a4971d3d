// Session audit log: every POST /transactions this session issued.

import { ApiClient } from "../api";
import { clear, h } from "../dom";

export class AuditView {
  constructor(private api: ApiClient, private root: HTMLElement) {}

  render(): void {
    clear(this.root);
    this.root.append(
      h("h2", {}, "Session audit log"),
      h("p", { class: "muted" },
        "every mutation this session sent to the ledger, newest first"),
    );
    const table = h("table", { class: "audit" },
      h("tr", {},
        h("th", {}, "at"), h("th", {}, "operation"),
        h("th", {}, "tx id"), h("th", {}, "outcome")),
    );
    for (const entry of this.api.audit) {
      table.append(
        h("tr", { "data-testid": "audit-row" },
          h("td", {}, new Date(entry.at).toISOString().slice(11, 19)),
          h("td", {}, `${entry.contractId}.${entry.operation}`),
          h("td", {}, entry.txId
            ? h("code", { class: "txid", title: entry.txId },
                entry.txId.slice(0, 10))
            : "—"),
          h("td", {}, entry.outcome),
        ),
      );
    }
    this.root.append(table);
  }
}
