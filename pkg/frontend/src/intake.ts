// Intake case state machine: weigh-in -> prep -> extrinsic -> intrinsic ->
// discounts -> silo. Every mutation is a POST /transactions; every figure
// shown (net weight, discount, prices) is echoed back from the API or the
// event stream — the controller never computes ledger values itself.

import { ApiClient, ApiError, TxStatus } from "./api";
import type { LedgerEvent } from "./sse";
import { prepViolations, PrepFields } from "./prep";

export type StepName =
  | "weigh_in"
  | "prep"
  | "extrinsic"
  | "intrinsic"
  | "discounts"
  | "silo";

export const STEP_ORDER: StepName[] = [
  "weigh_in",
  "prep",
  "extrinsic",
  "intrinsic",
  "discounts",
  "silo",
];

export type StepStatus =
  | "todo"
  | "pending"
  | "done"
  | "failed"
  | "blocked";

export interface StepInfo {
  status: StepStatus;
  txId: string | null;
  detail: string | null;
}

export interface WeighInFields {
  invoice: string;
  producer: string;
  grossKg: string;
  tareKg: string;
}

export interface ExtrinsicFields {
  sampleNumber: string;
  moisture: string;
  impurity: string;
  broken: string;
  greenish: string;
  damaged: string;
}

export interface IntrinsicFields {
  analyte: string;
  concentration: string;
  stripLotId: string;
}

export interface IntakeCaseView {
  invoice: string | null;
  producer: string | null;
  netKg: string | null;
  steps: Record<StepName, StepInfo>;
  prepViolations: string[];
  prepChecked: boolean;
  prepAcknowledged: boolean;
  extrinsic: Record<string, unknown> | null;
  intrinsics: Record<string, unknown>[];
  discountText: string | null;
  discountEvent: LedgerEvent | null;
  siloId: string | null;
  done: boolean;
}

function freshSteps(): Record<StepName, StepInfo> {
  const steps = {} as Record<StepName, StepInfo>;
  for (const name of STEP_ORDER) {
    steps[name] = { status: "todo", txId: null, detail: null };
  }
  return steps;
}

export class IntakeController {
  view: IntakeCaseView;

  constructor(
    private api: ApiClient,
    private onChange: (view: IntakeCaseView) => void = () => {},
  ) {
    this.view = this.reset();
  }

  reset(): IntakeCaseView {
    this.view = {
      invoice: null,
      producer: null,
      netKg: null,
      steps: freshSteps(),
      prepViolations: [],
      prepChecked: false,
      prepAcknowledged: false,
      extrinsic: null,
      intrinsics: [],
      discountText: null,
      discountEvent: null,
      siloId: null,
      done: false,
    };
    this.notify();
    return this.view;
  }

  private notify(): void {
    this.onChange(this.view);
  }

  private async runStep(
    step: StepName,
    operation: string,
    args: Record<string, unknown>,
  ): Promise<TxStatus | null> {
    const info = this.view.steps[step];
    info.status = "pending";
    info.detail = null;
    this.notify();
    let status: TxStatus;
    try {
      status = await this.api.submitAndWait("grain", operation, args);
    } catch (err) {
      info.status = "failed";
      info.detail =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      this.notify();
      return null;
    }
    info.txId = status.tx_id;
    if (status.status === "VALID") {
      info.status = "done";
      info.detail = `block ${status.block_height}`;
    } else {
      info.status = "failed";
      info.detail =
        status.status === "PENDING"
          ? "timed out waiting for commit"
          : `INVALID: ${status.reason ?? "unknown"}`;
    }
    this.notify();
    return status;
  }

  private requireDone(step: StepName, label: string): void {
    if (this.view.steps[step].status !== "done") {
      throw new Error(`${label} requires ${step} to be complete`);
    }
  }

  get prepCleared(): boolean {
    return (
      this.view.prepChecked &&
      (this.view.prepViolations.length === 0 || this.view.prepAcknowledged)
    );
  }

  async startCase(fields: WeighInFields): Promise<boolean> {
    this.view.invoice = fields.invoice;
    this.view.producer = fields.producer;
    const status = await this.runStep("weigh_in", "record_weigh_in", {
      Invoice_Number: fields.invoice,
      producer_id: fields.producer,
      gross_kg: Number(fields.grossKg),
      tare_kg: Number(fields.tareKg),
    });
    if (!status || status.status !== "VALID") return false;
    const ticket = await this.api.getAsset(
      "com.agritech.Weigh_Ticket",
      `${fields.invoice}#incoming`,
    );
    this.view.netKg = ticket ? String(ticket["net_kg"]) : null;
    this.notify();
    return true;
  }

  checkPrep(fields: PrepFields): string[] {
    this.requireDone("weigh_in", "prep validation");
    const violations = prepViolations(fields);
    this.view.prepChecked = true;
    this.view.prepViolations = violations;
    this.view.prepAcknowledged = false;
    const info = this.view.steps.prep;
    if (violations.length === 0) {
      info.status = "done";
      info.detail = "protocol ok";
    } else {
      info.status = "blocked";
      info.detail = `${violations.length} violation(s), acknowledge to continue`;
    }
    this.notify();
    return violations;
  }

  acknowledgePrep(): void {
    if (!this.view.prepChecked || this.view.prepViolations.length === 0) return;
    this.view.prepAcknowledged = true;
    this.view.steps.prep.status = "done";
    this.view.steps.prep.detail = "violations acknowledged by operator";
    this.notify();
  }

  async recordExtrinsic(fields: ExtrinsicFields): Promise<boolean> {
    this.requireDone("weigh_in", "extrinsic analysis");
    if (!this.prepCleared) {
      throw new Error("prep validation must pass or be acknowledged first");
    }
    const status = await this.runStep("extrinsic", "record_extrinsic", {
      Invoice_Number: this.view.invoice,
      Sample_Number: fields.sampleNumber,
      Moisture_Percent: Number(fields.moisture),
      Impurity_Percent: Number(fields.impurity),
      Broken_Percent: Number(fields.broken),
      Greenish_Percent: Number(fields.greenish),
      Damaged_Percent: Number(fields.damaged),
    });
    if (!status || status.status !== "VALID") return false;
    this.view.extrinsic = await this.api.getAsset(
      "com.agritech.Extrinsic_Analysis",
      this.view.invoice as string,
    );
    this.notify();
    return true;
  }

  async recordIntrinsic(fields: IntrinsicFields): Promise<boolean> {
    this.requireDone("extrinsic", "intrinsic analysis");
    const status = await this.runStep("intrinsic", "record_intrinsic", {
      Invoice_Number: this.view.invoice,
      Sample_Number: `SMP-${this.view.invoice}`,
      analyte: fields.analyte,
      concentration: Number(fields.concentration),
      strip_lot_id: fields.stripLotId,
    });
    if (!status || status.status !== "VALID") return false;
    const asset = await this.api.getAsset(
      "com.agritech.Intrinsic_Analysis",
      `${this.view.invoice}#${fields.analyte}`,
    );
    if (asset) this.view.intrinsics.push(asset);
    this.notify();
    return true;
  }

  async computeDiscounts(mode = "corrected"): Promise<boolean> {
    this.requireDone("intrinsic", "discount computation");
    const status = await this.runStep("discounts", "compute_discounts", {
      Invoice_Number: this.view.invoice,
      mode,
    });
    if (!status || status.status !== "VALID") return false;
    // the figure shown is the committed asset value, never a local compute
    const asset = await this.api.getAsset(
      "com.agritech.Extrinsic_Analysis",
      this.view.invoice as string,
    );
    this.view.extrinsic = asset;
    this.view.discountText =
      asset === null ? null : String(asset["Total_Discounts_KG"]);
    this.notify();
    return true;
  }

  noteEvent(event: LedgerEvent): void {
    if (event.event_name !== "DiscountsEvent") return;
    const asset = (event.payload["asset"] ?? {}) as Record<string, unknown>;
    if (asset["Invoice_Number"] !== this.view.invoice) return;
    this.view.discountEvent = event;
    this.notify();
  }

  async assignSilo(siloId: string): Promise<boolean> {
    this.requireDone("discounts", "silo assignment");
    const status = await this.runStep("silo", "assign_silo", {
      Invoice_Number: this.view.invoice,
      silo_id: siloId,
    });
    if (!status || status.status !== "VALID") return false;
    this.view.siloId = siloId;
    this.view.done = true;
    this.notify();
    return true;
  }
}
