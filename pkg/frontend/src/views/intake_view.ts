// Intake stepper: one panel per stage, driven by IntakeController state.

import { ApiClient } from "../api";
import { clear, field, h, input } from "../dom";
import { IntakeController, STEP_ORDER, StepName } from "../intake";

const STEP_LABELS: Record<StepName, string> = {
  weigh_in: "Weigh-in",
  prep: "Sample prep",
  extrinsic: "Extrinsic analysis",
  intrinsic: "Intrinsic analysis",
  discounts: "Discounts",
  silo: "Silo",
};

export class IntakeView {
  readonly controller: IntakeController;
  private root: HTMLElement;

  constructor(api: ApiClient, root: HTMLElement) {
    this.root = root;
    this.controller = new IntakeController(api, () => this.render());
  }

  render(): void {
    const view = this.controller.view;
    clear(this.root);
    const stepper = h("div", { class: "stepper" });
    for (const name of STEP_ORDER) {
      const info = view.steps[name];
      stepper.append(
        h(
          "div",
          { class: `step step-${info.status}` },
          h("span", { class: "step-name" }, STEP_LABELS[name]),
          h("span", { class: "step-status" }, info.status),
          info.txId
            ? h("code", { class: "txid", title: info.txId },
                info.txId.slice(0, 10))
            : null,
          info.detail ? h("span", { class: "step-detail" }, info.detail) : null,
        ),
      );
    }
    this.root.append(h("h2", {}, "Warehouse intake"), stepper);

    if (view.done) {
      this.root.append(
        h(
          "div",
          { class: "banner ok", "data-testid": "intake-done" },
          `Cargo ${view.invoice} stored in silo ${view.siloId}`,
        ),
        h("button", { onclick: () => this.controller.reset() }, "New intake"),
      );
      return;
    }
    this.root.append(this.activePanel());
  }

  private activePanel(): HTMLElement {
    const view = this.controller.view;
    if (view.steps.weigh_in.status !== "done") return this.weighPanel();
    if (!this.controller.prepCleared) return this.prepPanel();
    if (view.steps.extrinsic.status !== "done") return this.extrinsicPanel();
    if (view.steps.intrinsic.status !== "done") return this.intrinsicPanel();
    if (view.steps.discounts.status !== "done") return this.discountPanel();
    return this.siloPanel();
  }

  private weighPanel(): HTMLElement {
    const invoice = input("invoice", "");
    const producer = input("producer", "p-prod-01");
    const gross = input("gross", "42000", "number");
    const tare = input("tare", "15000", "number");
    return h(
      "form",
      {
        class: "panel",
        onsubmit: (ev: Event) => {
          ev.preventDefault();
          void this.controller.startCase({
            invoice: invoice.value,
            producer: producer.value,
            grossKg: gross.value,
            tareKg: tare.value,
          });
        },
      },
      h("h3", {}, "Incoming truck"),
      field("Invoice number", invoice),
      field("Producer", producer),
      field("Gross kg", gross),
      field("Tare kg", tare),
      h("button", { type: "submit" }, "Record weigh-in"),
    );
  }

  private prepPanel(): HTMLElement {
    const view = this.controller.view;
    const sieve = input("sieve", "0.65", "number");
    sieve.step = "0.01";
    const water = input("water", "5", "number");
    const volume = input("volume", "12", "number");
    const incubation = input("incubation", "300", "number");
    const panel = h(
      "form",
      {
        class: "panel",
        onsubmit: (ev: Event) => {
          ev.preventDefault();
          this.controller.checkPrep({
            sievePassFraction: Number(sieve.value),
            dilutionSample: 1,
            dilutionWater: Number(water.value),
            extractVolumeMl: Number(volume.value),
            incubationS: Number(incubation.value),
          });
        },
      },
      h("h3", {}, "Sample preparation"),
      view.netKg
        ? h("p", {}, `Net weight on ledger: `,
            h("strong", { "data-testid": "net-kg" }, view.netKg), " kg")
        : null,
      field("Sieve pass fraction", sieve),
      field("Water parts (sample 1:)", water),
      field("Extract volume ml", volume),
      field("Incubation s", incubation),
      h("button", { type: "submit" }, "Validate prep"),
    );
    if (view.prepChecked && view.prepViolations.length) {
      const list = h("ul", { class: "violations" });
      for (const violation of view.prepViolations) {
        list.append(h("li", {}, violation));
      }
      panel.append(
        h("div", { class: "banner warn", "data-testid": "prep-violations" },
          "Prep protocol violations", list,
          h("button", {
            type: "button",
            onclick: () => this.controller.acknowledgePrep(),
          }, "Acknowledge and continue"),
        ),
      );
    }
    return panel;
  }

  private extrinsicPanel(): HTMLElement {
    const sample = input("sample", "SMP-1");
    const moisture = input("moisture", "14", "number");
    const impurity = input("impurity", "3", "number");
    const broken = input("broken", "5", "number");
    const greenish = input("greenish", "2", "number");
    const damaged = input("damaged", "3", "number");
    for (const el of [moisture, impurity, broken, greenish, damaged]) {
      el.step = "0.01";
    }
    return h(
      "form",
      {
        class: "panel",
        onsubmit: (ev: Event) => {
          ev.preventDefault();
          void this.controller.recordExtrinsic({
            sampleNumber: sample.value,
            moisture: moisture.value,
            impurity: impurity.value,
            broken: broken.value,
            greenish: greenish.value,
            damaged: damaged.value,
          });
        },
      },
      h("h3", {}, "Extrinsic grading"),
      field("Sample number", sample),
      field("Moisture %", moisture),
      field("Impurity %", impurity),
      field("Broken %", broken),
      field("Greenish %", greenish),
      field("Damaged %", damaged),
      h("button", { type: "submit" }, "Record extrinsic analysis"),
    );
  }

  private intrinsicPanel(): HTMLElement {
    const analyte = h("select", { name: "analyte" }) as HTMLSelectElement;
    for (const option of ["GMO", "aflatoxin", "fumonisin", "DON"]) {
      analyte.append(h("option", { value: option }, option));
    }
    const concentration = input("concentration", "0.3", "number");
    concentration.step = "0.0001";
    const strip = input("strip", "STRIP-DEMO");
    return h(
      "form",
      {
        class: "panel",
        onsubmit: (ev: Event) => {
          ev.preventDefault();
          void this.controller.recordIntrinsic({
            analyte: analyte.value,
            concentration: concentration.value,
            stripLotId: strip.value,
          });
        },
      },
      h("h3", {}, "Intrinsic analysis (strip reading)"),
      field("Analyte", analyte),
      field("Concentration", concentration),
      field("Strip lot", strip),
      h("button", { type: "submit" }, "Record intrinsic analysis"),
    );
  }

  private discountPanel(): HTMLElement {
    const mode = h("select", { name: "mode" }) as HTMLSelectElement;
    mode.append(h("option", { value: "corrected" }, "corrected"));
    mode.append(h("option", { value: "verbatim" }, "verbatim"));
    return h(
      "form",
      {
        class: "panel",
        onsubmit: (ev: Event) => {
          ev.preventDefault();
          void this.controller.computeDiscounts(mode.value);
        },
      },
      h("h3", {}, "Quality discounts"),
      field("Formula mode", mode),
      h("button", { type: "submit" }, "Compute discounts"),
    );
  }

  private siloPanel(): HTMLElement {
    const view = this.controller.view;
    const silo = input("silo", "S1");
    return h(
      "form",
      {
        class: "panel",
        onsubmit: (ev: Event) => {
          ev.preventDefault();
          void this.controller.assignSilo(silo.value);
        },
      },
      h("h3", {}, "Silo assignment"),
      h("p", {}, "Ledger discount: ",
        h("strong", { "data-testid": "discount" },
          view.discountText ?? "—"),
        " percent of net weight"),
      view.discountEvent
        ? h("p", { class: "event-note", "data-testid": "discount-event" },
            `DiscountsEvent committed at block ${view.discountEvent.block_height}`)
        : h("p", { class: "event-note muted" }, "waiting for DiscountsEvent…"),
      field("Silo", silo),
      h("button", { type: "submit" }, "Store in silo"),
    );
  }
}
