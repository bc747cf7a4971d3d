// Shell: login, role-gated navigation, view switching, one event stream
// feeding both the feed view and the active intake case.

import { ApiClient, ApiError } from "../api";
import { clear, field, h, input } from "../dom";
import { EventStream, LedgerEvent } from "../sse";
import { AuditView } from "./audit_view";
import { FeedView } from "./feed_view";
import { IntakeView } from "./intake_view";
import { ProvenanceView } from "./provenance_view";

const INTAKE_ROLES = new Set(["qa_operator", "warehouse_operator", "admin"]);

type Route = "intake" | "provenance" | "feed" | "audit";

export class App {
  private stream: EventStream | null = null;
  private intake: IntakeView | null = null;
  private provenance: ProvenanceView | null = null;
  private feedView: FeedView | null = null;
  private auditView: AuditView | null = null;
  private route: Route = "feed";

  constructor(private api: ApiClient, private root: HTMLElement) {}

  start(): void {
    this.renderLogin();
  }

  private renderLogin(error?: string): void {
    clear(this.root);
    const username = input("username", "p-qa-01");
    const password = input("password", "", "password");
    this.root.append(
      h("div", { class: "login-wrap" },
        h("h1", {}, "GrainLedger console"),
        h(
          "form",
          {
            class: "panel login",
            onsubmit: (ev: Event) => {
              ev.preventDefault();
              void this.login(username.value, password.value);
            },
          },
          field("Username", username),
          field("Password", password),
          h("button", { type: "submit" }, "Sign in"),
          error ? h("div", { class: "banner warn" }, error) : null,
        ),
      ),
    );
  }

  private async login(username: string, password: string): Promise<void> {
    try {
      await this.api.login(username, password);
    } catch (err) {
      const message =
        err instanceof ApiError && err.httpStatus === 423
          ? "identity revoked"
          : err instanceof ApiError
            ? "unknown user or wrong password"
            : String(err);
      this.renderLogin(message);
      return;
    }
    this.route = INTAKE_ROLES.has(this.api.role ?? "") ? "intake" : "feed";
    this.renderShell();
  }

  private onEvent = (event: LedgerEvent): void => {
    this.feedView?.onEvent(event);
    this.intake?.controller.noteEvent(event);
  };

  private renderShell(): void {
    clear(this.root);
    const main = h("main", { class: "view" });
    this.intake = INTAKE_ROLES.has(this.api.role ?? "")
      ? new IntakeView(this.api, main)
      : null;
    this.provenance = new ProvenanceView(this.api, main);
    this.feedView = new FeedView(main);
    this.auditView = new AuditView(this.api, main);

    const routes: [Route, string, boolean][] = [
      ["intake", "Intake", this.intake !== null],
      ["provenance", "Provenance", true],
      ["feed", "Events", true],
      ["audit", "Audit", true],
    ];
    const nav = h("nav", {});
    for (const [route, label, enabled] of routes) {
      if (!enabled) continue;
      nav.append(
        h("button", {
          class: "nav-btn",
          "data-route": route,
          onclick: () => {
            this.route = route;
            this.renderRoute(main);
          },
        }, label),
      );
    }
    nav.append(
      h("span", { class: "whoami" },
        `${this.api.participantId} (${this.api.role})`),
      h("button", {
        class: "nav-btn",
        onclick: () => {
          this.stream?.stop();
          this.api.logout();
          this.renderLogin();
        },
      }, "Sign out"),
    );
    this.root.append(h("header", {}, h("h1", {}, "GrainLedger"), nav), main);

    this.stream = new EventStream({
      baseUrl: this.api.baseUrl,
      token: this.api.token as string,
      onEvent: this.onEvent,
      onStatus: (status) => this.feedView?.onStatus(status),
    });
    this.stream.start();
    this.renderRoute(main);
  }

  private renderRoute(main: HTMLElement): void {
    if (this.route === "intake" && this.intake) this.intake.render();
    else if (this.route === "provenance") this.provenance?.render();
    else if (this.route === "audit") this.auditView?.render();
    else this.feedView?.render();
  }
}
