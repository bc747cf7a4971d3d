// Intake controller against a scripted API double: step ordering, prep
// gating, failure surfacing, and the no-client-side-math invariant.
import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api";
import { IntakeController } from "../src/intake";

interface Scripted {
  assets: Record<string, Record<string, unknown>>;
  invalid?: Record<string, string>; // operation -> INVALID reason
  reject?: Record<string, { status: number; error: string }>; // 4xx at submit
}

function fakeApi(script: Scripted): ApiClient {
  let txCounter = 0;
  const txOps: Record<string, string> = {};
  const fetchFn = async (input: string, init?: RequestInit) => {
    const url = new URL(input, "http://unit");
    const respond = (status: number, doc: unknown) =>
      new Response(JSON.stringify(doc), { status });
    if (url.pathname === "/transactions" && init?.method === "POST") {
      const body = JSON.parse(String(init.body)) as { operation: string };
      const rejection = script.reject?.[body.operation];
      if (rejection) {
        return respond(rejection.status, {
          error: rejection.error,
          message: rejection.error,
        });
      }
      txCounter += 1;
      const txId = String(txCounter).padStart(64, "0");
      txOps[txId] = body.operation;
      return respond(202, { tx_id: txId, status: "PENDING" });
    }
    if (url.pathname.startsWith("/transactions/")) {
      const txId = url.pathname.split("/")[2];
      const op = txOps[txId];
      const reason = script.invalid?.[op];
      return respond(200, {
        tx_id: txId,
        status: reason ? "INVALID" : "VALID",
        reason: reason ?? null,
        block_height: 7,
      });
    }
    if (url.pathname.startsWith("/assets/")) {
      const [, , registry, key] = url.pathname.split("/").map(
        decodeURIComponent,
      );
      const asset = script.assets[`${registry}#${key}`];
      return asset ? respond(200, asset) : respond(404, {
        error: "NotFound", message: "absent",
      });
    }
    return respond(404, { error: "NotFound", message: url.pathname });
  };
  const api = new ApiClient("", fetchFn);
  api.token = "t";
  return api;
}

const BASE_ASSETS = {
  "com.agritech.Weigh_Ticket#INV-1#incoming": {
    Invoice_Number: "INV-1",
    net_kg: 27000,
  },
  "com.agritech.Extrinsic_Analysis#INV-1": {
    Invoice_Number: "INV-1",
    Total_Discounts_KG: 8,
  },
  "com.agritech.Intrinsic_Analysis#INV-1#GMO": {
    Invoice_Number: "INV-1",
    analyte: "GMO",
    pass: true,
  },
};

const WEIGH = {
  invoice: "INV-1",
  producer: "p-prod-01",
  grossKg: "42000",
  tareKg: "15000",
};
const PREP_OK = {
  sievePassFraction: 0.65,
  dilutionSample: 1,
  dilutionWater: 5,
  extractVolumeMl: 12,
  incubationS: 300,
};
const EXTRINSIC = {
  sampleNumber: "s",
  moisture: "14",
  impurity: "3",
  broken: "5",
  greenish: "2",
  damaged: "3",
};
const INTRINSIC = { analyte: "GMO", concentration: "0.3", stripLotId: "L" };

describe("IntakeController", () => {
  it("walks the happy path to stored-in-silo", async () => {
    const api = fakeApi({ assets: BASE_ASSETS });
    const controller = new IntakeController(api);
    expect(await controller.startCase(WEIGH)).toBe(true);
    expect(controller.view.netKg).toBe("27000");
    controller.checkPrep(PREP_OK);
    expect(controller.prepCleared).toBe(true);
    expect(await controller.recordExtrinsic(EXTRINSIC)).toBe(true);
    expect(await controller.recordIntrinsic(INTRINSIC)).toBe(true);
    expect(await controller.computeDiscounts()).toBe(true);
    // displayed discount is the API asset's figure, not a local compute
    expect(controller.view.discountText).toBe("8");
    expect(await controller.assignSilo("S1")).toBe(true);
    expect(controller.view.done).toBe(true);
    expect(controller.view.siloId).toBe("S1");
    const statuses = Object.values(controller.view.steps).map(
      (s) => s.status,
    );
    expect(statuses).toEqual(["done", "done", "done", "done", "done", "done"]);
  });

  it("blocks analyses until prep violations are acknowledged", async () => {
    const api = fakeApi({ assets: BASE_ASSETS });
    const controller = new IntakeController(api);
    await controller.startCase(WEIGH);
    const violations = controller.checkPrep({
      ...PREP_OK,
      sievePassFraction: 0.55,
    });
    expect(violations).toHaveLength(1);
    expect(controller.view.steps.prep.status).toBe("blocked");
    await expect(controller.recordExtrinsic(EXTRINSIC)).rejects.toThrow(
      /acknowledged/,
    );
    controller.acknowledgePrep();
    expect(controller.prepCleared).toBe(true);
    expect(await controller.recordExtrinsic(EXTRINSIC)).toBe(true);
  });

  it("surfaces INVALID reasons and allows retry", async () => {
    const script: Scripted = {
      assets: BASE_ASSETS,
      invalid: { record_extrinsic: "MvccConflict" },
    };
    const api = fakeApi(script);
    const controller = new IntakeController(api);
    await controller.startCase(WEIGH);
    controller.checkPrep(PREP_OK);
    expect(await controller.recordExtrinsic(EXTRINSIC)).toBe(false);
    expect(controller.view.steps.extrinsic.status).toBe("failed");
    expect(controller.view.steps.extrinsic.detail).toContain("MvccConflict");
    // the conflict clears on the ledger; the same step retries clean
    script.invalid = {};
    expect(await controller.recordExtrinsic(EXTRINSIC)).toBe(true);
    expect(controller.view.steps.extrinsic.status).toBe("done");
  });

  it("shows the rejection code when the server refuses a submission", async () => {
    const script: Scripted = { assets: BASE_ASSETS };
    const api = fakeApi(script);
    const controller = new IntakeController(api);
    await controller.startCase(WEIGH);
    controller.checkPrep(PREP_OK);
    await controller.recordExtrinsic(EXTRINSIC);
    await controller.recordIntrinsic(INTRINSIC);
    script.reject = {
      compute_discounts: { status: 422, error: "AssetNotFound" },
    };
    expect(await controller.computeDiscounts()).toBe(false);
    expect(controller.view.steps.discounts.detail).toContain("AssetNotFound");
  });

  it("enforces step order", async () => {
    const api = fakeApi({ assets: BASE_ASSETS });
    const controller = new IntakeController(api);
    await expect(controller.recordExtrinsic(EXTRINSIC)).rejects.toThrow(
      /weigh_in/,
    );
    await expect(controller.computeDiscounts()).rejects.toThrow(/intrinsic/);
  });

  it("matches DiscountsEvent to the open case only", async () => {
    const api = fakeApi({ assets: BASE_ASSETS });
    const controller = new IntakeController(api);
    await controller.startCase(WEIGH);
    controller.noteEvent({
      seq: 0,
      event_name: "DiscountsEvent",
      payload: { asset: { Invoice_Number: "OTHER" } },
      tx_id: "aa".repeat(32),
      block_height: 3,
      tx_index: 0,
      channel_id: "gebn-main",
    });
    expect(controller.view.discountEvent).toBeNull();
    controller.noteEvent({
      seq: 1,
      event_name: "DiscountsEvent",
      payload: { asset: { Invoice_Number: "INV-1" } },
      tx_id: "bb".repeat(32),
      block_height: 4,
      tx_index: 0,
      channel_id: "gebn-main",
    });
    expect(controller.view.discountEvent?.block_height).toBe(4);
  });

  it("records every mutation in the session audit log", async () => {
    const api = fakeApi({ assets: BASE_ASSETS });
    const controller = new IntakeController(api);
    await controller.startCase(WEIGH);
    controller.checkPrep(PREP_OK);
    await controller.recordExtrinsic(EXTRINSIC);
    await controller.recordIntrinsic(INTRINSIC);
    await controller.computeDiscounts();
    await controller.assignSilo("S1");
    expect(api.audit).toHaveLength(5); // one per POST /transactions
    expect(api.audit.every((e) => e.outcome === "VALID")).toBe(true);
    expect(api.audit.map((e) => e.operation).reverse()).toEqual([
      "record_weigh_in",
      "record_extrinsic",
      "record_intrinsic",
      "compute_discounts",
      "assign_silo",
    ]);
  });
});
