import { ApiClient } from "./api";
import { CaseDetailView } from "./casedetail";
import { CaseListView } from "./caselist";
import { clear, el } from "./dom";
import { EgoView } from "./graphview";
import "./style.css";

const api = new ApiClient("");

function router(root: HTMLElement): void {
  const route = window.location.hash || "#/cases";
  clear(root);

  const nav = el("nav", { class: "topnav" }, [
    el("a", { href: "#/cases" }, ["cases"]),
  ]);
  root.append(nav, el("h1", {}, ["wallet triage review"]));

  const caseMatch = route.match(/^#\/cases\/([^/]+)$/);
  const egoMatch = route.match(/^#\/ego\/([^/]+)$/);

  if (egoMatch) {
    const view = new EgoView(api, decodeURIComponent(egoMatch[1]));
    root.append(view.el);
    void view.load(1);
  } else if (caseMatch) {
    const view = new CaseDetailView(api, (nodeId) => {
      window.location.hash = `#/ego/${encodeURIComponent(nodeId)}`;
    });
    root.append(view.el);
    void view.load(decodeURIComponent(caseMatch[1]));
  } else {
    const view = new CaseListView(api, (caseId) => {
      window.location.hash = `#/cases/${encodeURIComponent(caseId)}`;
    });
    root.append(view.el);
    void view.load();
  }
}

const root = document.getElementById("app");
if (root) {
  window.addEventListener("hashchange", () => router(root));
  router(root);
}
