// Newest-first event list with duplicate suppression across reconnects.

import type { LedgerEvent } from "./sse";

export class EventFeed {
  rows: LedgerEvent[] = [];
  private seen = new Set<number>();

  push(event: LedgerEvent): boolean {
    if (this.seen.has(event.seq)) return false;
    this.seen.add(event.seq);
    this.rows.unshift(event);
    return true;
  }

  get size(): number {
    return this.rows.length;
  }
}
