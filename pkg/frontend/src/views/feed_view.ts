// Live event feed: newest first, powered by the resuming SSE client.

import { clear, h } from "../dom";
import { EventFeed } from "../feed";
import type { LedgerEvent, StreamStatus } from "../sse";

export class FeedView {
  readonly feed = new EventFeed();
  status: StreamStatus = "connecting";

  constructor(private root: HTMLElement) {}

  onEvent = (event: LedgerEvent): void => {
    if (this.feed.push(event)) this.render();
  };

  onStatus = (status: StreamStatus): void => {
    this.status = status;
    this.render();
  };

  render(): void {
    clear(this.root);
    this.root.append(
      h("h2", {}, "Event feed"),
      h("p", { class: `stream-status stream-${this.status}` },
        `stream: ${this.status}`),
    );
    const list = h("div", { class: "feed", "data-testid": "feed" });
    for (const event of this.feed.rows) {
      list.append(
        h(
          "div",
          { class: "feed-row", "data-seq": String(event.seq) },
          h("span", { class: "badge" }, event.event_name),
          h("span", {}, `block ${event.block_height} · tx ${event.tx_index}`),
          h("span", { class: "muted" }, event.channel_id),
          h("code", { class: "txid", title: event.tx_id },
            event.tx_id.slice(0, 10)),
        ),
      );
    }
    if (!this.feed.rows.length) {
      list.append(h("p", { class: "muted" }, "no events yet"));
    }
    this.root.append(list);
  }
}
