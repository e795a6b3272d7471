/** Paged, filterable table of triage cases. */

import { ApiClient } from "./api";
import { clear, el, stateBadge } from "./dom";
import type { CaseListPayload, CaseState } from "./types";

const STATES: CaseState[] = [
  "FLAGGED",
  "BIAS_CHECKED",
  "EXPLAINED",
  "UNDER_REVIEW",
  "OVERRIDDEN",
  "CONFIRMED",
  "REPORTED",
];

export class CaseListView {
  readonly el: HTMLElement;
  page = 1;
  pageSize = 20;
  filter: CaseState | undefined;
  payload: CaseListPayload | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onOpen: (caseId: string) => void = () => {},
  ) {
    this.el = el("section", { class: "case-list" });
  }

  async load(): Promise<void> {
    this.payload = await this.api.listCases(this.filter, this.page, this.pageSize);
    this.render();
  }

  private render(): void {
    const payload = this.payload;
    clear(this.el);
    if (!payload) return;

    const filter = el("select", { class: "state-filter" });
    filter.append(el("option", { value: "" }, ["all states"]));
    for (const state of STATES) {
      const option = el("option", { value: state }, [state]);
      if (state === this.filter) option.setAttribute("selected", "");
      filter.append(option);
    }
    filter.addEventListener("change", () => {
      this.filter = (filter.value || undefined) as CaseState | undefined;
      this.page = 1;
      void this.load();
    });
    this.el.append(el("div", { class: "toolbar" }, [filter]));

    if (payload.total === 0) {
      this.el.append(
        el("p", { class: "empty-state" }, ["No cases yet. Run the scorer to open some."]),
      );
      return;
    }

    const table = el("table", { class: "cases" });
    table.append(
      el("tr", {}, [
        el("th", {}, ["case"]),
        el("th", {}, ["wallet"]),
        el("th", {}, ["score"]),
        el("th", {}, ["state"]),
        el("th", {}, ["opened"]),
      ]),
    );
    for (const doc of payload.cases) {
      const row = el("tr", { class: "case-row", "data-case-id": doc.case_id }, [
        el("td", { class: "mono" }, [doc.case_id]),
        el("td", { class: "mono" }, [doc.node_id]),
        el("td", {}, [String(doc.anomaly.score)]),
        el("td", {}, [stateBadge(doc.state)]),
        el("td", {}, [doc.created_at]),
      ]);
      row.addEventListener("click", () => this.onOpen(doc.case_id));
      table.append(row);
    }
    this.el.append(table);

    const pager = el("div", { class: "pager" });
    const prev = el("button", { class: "prev" }, ["prev"]) as HTMLButtonElement;
    const next = el("button", { class: "next" }, ["next"]) as HTMLButtonElement;
    prev.disabled = payload.page <= 1;
    next.disabled = payload.page >= payload.total_pages;
    prev.addEventListener("click", () => {
      this.page = Math.max(1, this.page - 1);
      void this.load();
    });
    next.addEventListener("click", () => {
      this.page = Math.min(payload.total_pages, this.page + 1);
      void this.load();
    });
    pager.append(
      prev,
      el("span", { class: "page-info" }, [
        `page ${payload.page} of ${payload.total_pages} (${payload.total} cases)`,
      ]),
      next,
    );
    this.el.append(pager);
  }
}
