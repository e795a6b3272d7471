/** Ego-network explorer: force-directed SVG with a k slider (1..3). */

import { ApiClient } from "./api";
import { clear, el } from "./dom";
import { forceLayout, hashSeed } from "./layout";
import type { EgoPayload } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 720;
const HEIGHT = 480;

export class EgoView {
  readonly el: HTMLElement;
  k = 1;
  payload: EgoPayload | null = null;
  private selectedId: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly center: string,
  ) {
    this.el = el("section", { class: "ego-view" });
  }

  async load(k: number): Promise<void> {
    this.k = Math.min(3, Math.max(1, Math.trunc(k)));
    this.payload = await this.api.getEgo(this.center, this.k);
    this.selectedId = this.center;
    this.render();
  }

  private render(): void {
    const payload = this.payload;
    clear(this.el);
    if (!payload) return;

    const slider = el("input", {
      type: "range",
      min: "1",
      max: "3",
      step: "1",
      value: String(this.k),
      class: "k-slider",
    }) as HTMLInputElement;
    slider.addEventListener("change", () => {
      const next = Number(slider.value);
      if (next !== this.k) void this.load(next); // exactly one request per change
    });
    this.el.append(
      el("div", { class: "toolbar" }, [
        el("label", {}, [`hops k=${this.k} `, slider]),
        el("span", { class: "mono center-label" }, [payload.center]),
      ]),
    );

    // deterministic positions per (center, k): screenshots are reproducible
    const seed = hashSeed(`${payload.center}|k=${payload.k}`);
    const positions = forceLayout(
      payload.nodes.map((n) => n.id),
      payload.edges.map((e) => [e.src, e.dst] as [string, string]),
      { width: WIDTH, height: HEIGHT, seed },
    );

    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
    svg.setAttribute("class", "ego-canvas");

    for (const edge of payload.edges) {
      const a = positions.get(edge.src);
      const b = positions.get(edge.dst);
      if (!a || !b) continue;
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", a.x.toFixed(1));
      line.setAttribute("y1", a.y.toFixed(1));
      line.setAttribute("x2", b.x.toFixed(1));
      line.setAttribute("y2", b.y.toFixed(1));
      line.setAttribute("class", "tx-edge");
      const title = document.createElementNS(SVG_NS, "title");
      title.textContent = `${edge.src} -> ${edge.dst} (mean ${edge.btc_mean}, median ${edge.btc_median}, max ${edge.btc_max})`;
      line.append(title);
      svg.append(line);
    }

    for (const node of payload.nodes) {
      const p = positions.get(node.id);
      if (!p) continue;
      const circle = document.createElementNS(SVG_NS, "circle");
      circle.setAttribute("cx", p.x.toFixed(1));
      circle.setAttribute("cy", p.y.toFixed(1));
      circle.setAttribute("r", node.id === payload.center ? "12" : "8");
      const classes = ["wallet"];
      if (node.flagged) classes.push("flagged");
      if (node.id === this.selectedId) classes.push("selected");
      circle.setAttribute("class", classes.join(" "));
      circle.setAttribute("data-node-id", node.id);
      circle.addEventListener("click", () => {
        this.selectedId = node.id;
        this.render();
        void this.renderStats(node.id);
      });
      svg.append(circle);
    }
    this.el.append(svg);

    const panel = el("aside", { class: "stats-panel" }, [
      el("p", { class: "hint" }, ["select a wallet to see its statistics"]),
    ]);
    this.el.append(panel);
    if (this.selectedId) void this.renderStats(this.selectedId);
  }

  private async renderStats(nodeId: string): Promise<void> {
    const panel = this.el.querySelector(".stats-panel");
    if (!panel) return;
    const inEgo = this.payload?.nodes.find((n) => n.id === nodeId);
    const rows: Array<[string, string]> = [
      ["wallet", nodeId],
      ["score", String(inEgo?.score ?? "N/A")],
      ["flagged", String(inEgo?.flagged ?? false)],
    ];
    try {
      const node = await this.api.getNode(nodeId);
      rows.push(
        ["class", String(node.class_label ?? "N/A")],
        ["degree", String(node.degree)],
      );
      for (const [name, value] of Object.entries(node.features ?? {})) {
        rows.push([name, String(value)]);
      }
    } catch {
      rows.push(["details", "unavailable"]);
    }
    clear(panel as HTMLElement);
    const dl = el("dl", { class: "node-stats" });
    for (const [name, value] of rows) {
      dl.append(el("dt", {}, [name]), el("dd", { class: "mono" }, [value]));
    }
    panel.append(el("h3", { class: "mono" }, [nodeId]), dl);
  }
}
