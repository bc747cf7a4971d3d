// Server-sent-events client on fetch streaming (works in browsers and in
// node test runs alike). Reconnects with exponential backoff and resumes
// from the last seen event id, deduplicating replayed events.

export interface LedgerEvent {
  seq: number;
  event_name: string;
  payload: Record<string, unknown>;
  tx_id: string;
  block_height: number;
  tx_index: number;
  channel_id: string;
}

export interface SseFrame {
  id?: string;
  event?: string;
  data?: string;
}

export function parseSseBuffer(buffer: string): {
  frames: SseFrame[];
  rest: string;
} {
  const frames: SseFrame[] = [];
  const parts = buffer.split("\n\n");
  const rest = parts.pop() ?? "";
  for (const part of parts) {
    const frame: SseFrame = {};
    for (const line of part.split("\n")) {
      if (line.startsWith(":")) continue; // keepalive comment
      const colon = line.indexOf(": ");
      if (colon < 0) continue;
      const field = line.slice(0, colon);
      const value = line.slice(colon + 2);
      if (field === "id") frame.id = value;
      else if (field === "event") frame.event = value;
      else if (field === "data") {
        frame.data = frame.data === undefined ? value : frame.data + value;
      }
    }
    if (frame.id !== undefined || frame.event !== undefined ||
        frame.data !== undefined) {
      frames.push(frame);
    }
  }
  return { frames, rest };
}

export type StreamStatus = "connecting" | "open" | "retrying" | "closed";

export interface EventStreamOptions {
  baseUrl: string;
  token: string;
  channel?: string;
  onEvent: (event: LedgerEvent) => void;
  onStatus?: (status: StreamStatus) => void;
  fetchFn?: (input: string, init?: RequestInit) => Promise<Response>;
  minBackoffMs?: number;
  maxBackoffMs?: number;
}

export class EventStream {
  lastSeq: number | null = null;
  private stopped = false;
  private controller: AbortController | null = null;
  private attempt = 0;

  constructor(private opts: EventStreamOptions) {}

  start(): void {
    this.stopped = false;
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
    this.opts.onStatus?.("closed");
  }

  private backoffMs(): number {
    const min = this.opts.minBackoffMs ?? 500;
    const max = this.opts.maxBackoffMs ?? 10_000;
    return Math.min(max, min * 2 ** this.attempt);
  }

  private async loop(): Promise<void> {
    const fetchFn =
      this.opts.fetchFn ?? ((input, init) => fetch(input, init));
    while (!this.stopped) {
      this.opts.onStatus?.(this.attempt ? "retrying" : "connecting");
      this.controller = new AbortController();
      try {
        const headers: Record<string, string> = {
          Authorization: `Bearer ${this.opts.token}`,
          Accept: "text/event-stream",
        };
        if (this.lastSeq !== null) {
          headers["Last-Event-ID"] = String(this.lastSeq);
        }
        const params = this.opts.channel
          ? `?channel=${encodeURIComponent(this.opts.channel)}`
          : "";
        const response = await fetchFn(
          `${this.opts.baseUrl}/events/stream${params}`,
          { headers, signal: this.controller.signal },
        );
        if (!response.ok || !response.body) {
          throw new Error(`stream http ${response.status}`);
        }
        this.opts.onStatus?.("open");
        this.attempt = 0;
        await this.consume(response.body);
      } catch {
        if (this.stopped) return;
      }
      if (this.stopped) return;
      await new Promise((resolve) => setTimeout(resolve, this.backoffMs()));
      this.attempt += 1;
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      const { frames, rest } = parseSseBuffer(buffer);
      buffer = rest;
      for (const frame of frames) {
        this.handleFrame(frame);
      }
    }
  }

  private handleFrame(frame: SseFrame): void {
    if (frame.data === undefined) return;
    const seq = frame.id !== undefined ? Number(frame.id) : NaN;
    if (Number.isFinite(seq)) {
      if (this.lastSeq !== null && seq <= this.lastSeq) return; // replayed
      this.lastSeq = seq;
    }
    try {
      this.opts.onEvent(JSON.parse(frame.data) as LedgerEvent);
    } catch {
      // malformed frame; skip
    }
  }
}
