/** One case: verbatim explanation weights, the 3-part narrative and the
 * reviewer decision form with an optimistic badge update. */

import { ApiClient, ApiError } from "./api";
import { clear, el, stateBadge } from "./dom";
import type { CaseDoc } from "./types";

export class CaseDetailView {
  readonly el: HTMLElement;
  doc: CaseDoc | null = null;
  private submitting = false;

  constructor(
    private readonly api: ApiClient,
    private readonly onEgo: (nodeId: string) => void = () => {},
  ) {
    this.el = el("section", { class: "case-detail" });
  }

  async load(caseId: string): Promise<void> {
    this.doc = await this.api.getCase(caseId);
    this.render();
  }

  get formEnabled(): boolean {
    return this.doc?.state === "UNDER_REVIEW" && !this.submitting;
  }

  render(errorMessage?: string): void {
    const doc = this.doc;
    clear(this.el);
    if (!doc) return;

    const egoLink = el("button", { class: "ego-link" }, ["view ego network"]);
    egoLink.addEventListener("click", () => this.onEgo(doc.node_id));
    this.el.append(
      el("header", { class: "case-header" }, [
        el("h2", { class: "mono" }, [doc.case_id]),
        stateBadge(doc.state),
        el("span", { class: "mono wallet" }, [doc.node_id]),
        egoLink,
      ]),
    );
    this.el.append(
      el("p", { class: "anomaly-line" }, [
        `score ${String(doc.anomaly.score)} (threshold ${String(doc.anomaly.threshold)})`,
      ]),
    );

    const weights = el("ul", { class: "weights" });
    if (doc.explanation) {
      for (const [name, value] of Object.entries(doc.explanation.weights)) {
        // weight strings come straight from the API; never reformat them
        weights.append(el("li", { class: "mono weight" }, [`${name}: ${value}`]));
      }
    } else {
      weights.append(el("li", { class: "empty-state" }, ["no explanation yet"]));
    }
    this.el.append(el("h3", {}, ["feature importances"]), weights);

    const narrative = el("div", { class: "narrative" });
    if (doc.narrative) {
      if (doc.narrative.parse_failed) {
        narrative.append(
          el("p", { class: "parse-failed" }, ["narrative could not be parsed; raw text:"]),
          el("pre", {}, [doc.narrative.raw_response]),
        );
      } else {
        narrative.append(
          el("h4", {}, ["1. behavior"]),
          el("p", { class: "behavior" }, [doc.narrative.behavior_analysis]),
          el("h4", {}, ["2. classification"]),
          el("p", { class: "classification" }, [doc.narrative.fraud_classification]),
          el("h4", {}, ["3. fairness"]),
          el("p", { class: "fairness" }, [doc.narrative.fairness_judgment]),
        );
      }
    } else {
      narrative.append(el("p", { class: "empty-state" }, ["no narrative yet"]));
    }
    this.el.append(el("h3", {}, ["analyst narrative"]), narrative);

    if (doc.reviewer_decision) {
      const d = doc.reviewer_decision;
      this.el.append(
        el("p", { class: "decision-line" }, [
          `decision: ${d.override ? "overridden (cleared)" : "confirmed"} by ${d.reviewer_id}` +
            (d.verdict ? ` — ${d.verdict}` : ""),
        ]),
      );
    }

    const form = el("form", { class: "decision-form" });
    const reviewer = el("input", {
      class: "reviewer-id",
      placeholder: "reviewer id",
    }) as HTMLInputElement;
    const verdict = el("input", {
      class: "verdict",
      placeholder: "verdict (free text)",
    }) as HTMLInputElement;
    const notes = el("textarea", { class: "notes", placeholder: "notes" }) as HTMLTextAreaElement;
    const confirm = el("button", { type: "button", class: "confirm" }, [
      "confirm flag",
    ]) as HTMLButtonElement;
    const override = el("button", { type: "button", class: "override" }, [
      "override (clear)",
    ]) as HTMLButtonElement;
    const enabled = this.formEnabled;
    for (const control of [reviewer, verdict, notes, confirm, override]) {
      control.disabled = !enabled;
    }
    confirm.addEventListener("click", () => void this.submit(false, form));
    override.addEventListener("click", () => void this.submit(true, form));
    form.append(reviewer, verdict, notes, confirm, override);
    if (errorMessage) {
      form.append(el("p", { class: "form-error", role: "alert" }, [errorMessage]));
    }
    this.el.append(el("h3", {}, ["reviewer decision"]), form);
  }

  async submit(override: boolean, form: HTMLElement): Promise<void> {
    const doc = this.doc;
    if (!doc || !this.formEnabled) return; // client-side double-submit block
    const reviewerId = (form.querySelector(".reviewer-id") as HTMLInputElement).value;
    const verdict = (form.querySelector(".verdict") as HTMLInputElement).value;
    const notes = (form.querySelector(".notes") as HTMLTextAreaElement).value;

    this.submitting = true;
    const previousState = doc.state;
    doc.state = override ? "OVERRIDDEN" : "CONFIRMED"; // optimistic badge flip
    this.render();
    try {
      this.doc = await this.api.submitDecision(doc.case_id, {
        override,
        verdict,
        notes,
        reviewer_id: reviewerId,
      });
      this.submitting = false;
      this.render();
    } catch (error) {
      doc.state = previousState; // rollback, re-enable, surface the rejection
      this.submitting = false;
      const message =
        error instanceof ApiError ? `${error.message}` : "decision submit failed";
      this.render(message);
    }
  }
}
