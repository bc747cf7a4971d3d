// REST client for a GrainLedger node. Every mutation goes through submit()
// and lands in the session audit log, so the UI can prove its 1:1 mapping
// between user actions and POST /transactions calls.

export interface TxStatus {
  tx_id: string;
  status: "PENDING" | "VALID" | "INVALID";
  reason?: string | null;
  block_height?: number | null;
  channel_id?: string;
}

export interface AuditEntry {
  at: number;
  contractId: string;
  operation: string;
  args: unknown;
  txId: string | null;
  outcome: string;
}

export class ApiError extends Error {
  constructor(
    public httpStatus: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export class ApiClient {
  token: string | null = null;
  role: string | null = null;
  participantId: string | null = null;
  readonly audit: AuditEntry[] = [];

  constructor(
    public baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = {
      "Content-Type": "application/json",
    };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    let doc: unknown = null;
    try {
      doc = text ? JSON.parse(text) : null;
    } catch {
      doc = null;
    }
    if (!response.ok && response.status !== 202) {
      const err = (doc ?? {}) as { error?: string; message?: string };
      throw new ApiError(
        response.status,
        err.error ?? "HttpError",
        err.message ?? `${method} ${path} -> ${response.status}`,
      );
    }
    return doc;
  }

  async login(username: string, password: string): Promise<void> {
    const doc = (await this.request("POST", "/auth/login", {
      username,
      password,
    })) as { token: string; role: string; participant_id: string };
    this.token = doc.token;
    this.role = doc.role;
    this.participantId = doc.participant_id;
  }

  logout(): void {
    this.token = null;
    this.role = null;
    this.participantId = null;
  }

  async submit(
    contractId: string,
    operation: string,
    args: unknown,
    channelId = "gebn-main",
  ): Promise<string> {
    const entry: AuditEntry = {
      at: Date.now(),
      contractId,
      operation,
      args,
      txId: null,
      outcome: "submitting",
    };
    this.audit.unshift(entry);
    try {
      const doc = (await this.request("POST", "/transactions", {
        contract_id: contractId,
        operation,
        args,
        channel_id: channelId,
      })) as { tx_id: string; status: string };
      entry.txId = doc.tx_id;
      entry.outcome = "accepted";
      return doc.tx_id;
    } catch (err) {
      entry.outcome =
        err instanceof ApiError ? `rejected: ${err.code}` : "network error";
      throw err;
    }
  }

  async txStatus(txId: string): Promise<TxStatus> {
    return (await this.request("GET", `/transactions/${txId}`)) as TxStatus;
  }

  async waitTx(
    txId: string,
    timeoutMs = 15000,
    intervalMs = 80,
  ): Promise<TxStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.txStatus(txId);
      if (status.status !== "PENDING") {
        this.noteOutcome(txId, status.status);
        return status;
      }
      if (Date.now() >= deadline) return status;
      await sleep(intervalMs);
    }
  }

  private noteOutcome(txId: string, outcome: string): void {
    const entry = this.audit.find((e) => e.txId === txId);
    if (entry) entry.outcome = outcome;
  }

  async submitAndWait(
    contractId: string,
    operation: string,
    args: unknown,
    channelId = "gebn-main",
  ): Promise<TxStatus> {
    const txId = await this.submit(contractId, operation, args, channelId);
    return this.waitTx(txId);
  }

  async getAsset(
    registry: string,
    key: string,
    channelId = "gebn-main",
  ): Promise<Record<string, unknown> | null> {
    try {
      return (await this.request(
        "GET",
        `/assets/${encodeURIComponent(registry)}/${encodeURIComponent(key)}` +
          `?channel=${encodeURIComponent(channelId)}`,
      )) as Record<string, unknown>;
    } catch (err) {
      if (err instanceof ApiError && err.httpStatus === 404) return null;
      throw err;
    }
  }

  async queryAssets(
    registry: string,
    filters: Record<string, string>,
    channelId = "gebn-main",
  ): Promise<Record<string, unknown>[]> {
    const params = new URLSearchParams({ ...filters, channel: channelId });
    const doc = (await this.request(
      "GET",
      `/assets/${encodeURIComponent(registry)}?${params}`,
    )) as { assets: Record<string, unknown>[] };
    return doc.assets;
  }

  async provenance(
    lotId: string,
    channelId = "gebn-main",
  ): Promise<Record<string, unknown>> {
    return (await this.request(
      "GET",
      `/provenance/lots/${encodeURIComponent(lotId)}` +
        `?channel=${encodeURIComponent(channelId)}`,
    )) as Record<string, unknown>;
  }

  async nodeInfo(): Promise<Record<string, unknown>> {
    return (await this.request("GET", "/node")) as Record<string, unknown>;
  }
}
