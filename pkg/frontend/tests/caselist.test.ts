import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { CaseListView } from "../src/caselist";
import { FixtureServer, makeCase } from "./fixtures";

function makeView(server: FixtureServer) {
  const api = new ApiClient("", server.fetch);
  const view = new CaseListView(api);
  document.body.append(view.el);
  return view;
}

describe("case list", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("paginates 50 cases into 3 pages of 20", async () => {
    const server = new FixtureServer(
      Array.from({ length: 50 }, (_, i) => makeCase(i, "UNDER_REVIEW")),
    );
    const view = makeView(server);
    await view.load();

    expect(view.payload?.total).toBe(50);
    expect(view.payload?.total_pages).toBe(3);
    expect(view.el.querySelectorAll("tr.case-row")).toHaveLength(20);
    expect(view.el.querySelector(".page-info")?.textContent).toBe(
      "page 1 of 3 (50 cases)",
    );

    (view.el.querySelector("button.next") as HTMLButtonElement).click();
    await new Promise((r) => setTimeout(r, 0));
    expect(view.page).toBe(2);
    expect(view.el.querySelectorAll("tr.case-row")).toHaveLength(20);

    (view.el.querySelector("button.next") as HTMLButtonElement).click();
    await new Promise((r) => setTimeout(r, 0));
    expect(view.el.querySelectorAll("tr.case-row")).toHaveLength(10);
    expect(
      (view.el.querySelector("button.next") as HTMLButtonElement).disabled,
    ).toBe(true);
  });

  it("shows an empty-state message on a fresh store", async () => {
    const view = makeView(new FixtureServer([]));
    await view.load();
    expect(view.el.querySelector(".empty-state")?.textContent).toContain("No cases yet");
    expect(view.el.querySelector("table.cases")).toBeNull();
  });

  it("filters by state server-side", async () => {
    const docs = [
      ...Array.from({ length: 4 }, (_, i) => makeCase(i, "CONFIRMED")),
      ...Array.from({ length: 6 }, (_, i) => makeCase(10 + i, "UNDER_REVIEW")),
    ];
    const view = makeView(new FixtureServer(docs));
    await view.load();
    expect(view.payload?.total).toBe(10);

    const filter = view.el.querySelector("select.state-filter") as HTMLSelectElement;
    filter.value = "CONFIRMED";
    filter.dispatchEvent(new Event("change"));
    await new Promise((r) => setTimeout(r, 0));

    expect(view.payload?.total).toBe(4);
    const badges = [...view.el.querySelectorAll("tr.case-row .badge")];
    expect(badges).toHaveLength(4);
    for (const badge of badges) expect(badge.textContent).toBe("CONFIRMED");
  });
});
