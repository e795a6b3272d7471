/** In-memory fixture server mirroring the /api/v1 contract for tests. */

import type { FetchLike } from "../src/api";
import type { CaseDoc, CaseState, EgoPayload, NodePayload } from "../src/types";

export const WEIGHT_STRINGS: Record<string, string> = {
  btc_received_median: "9.941e-01",
  btc_sent_total: "0.000e+00",
  degree: "9.941e-01",
};

export function makeCase(i: number, state: CaseState): CaseDoc {
  return {
    case_id: `c${String(i).padStart(4, "0")}`,
    node_id: `w${String(i).padStart(2, "0")}`,
    run_id: "run1",
    state,
    anomaly: {
      attr_error: 1.5 + i,
      struct_error: 0.4,
      score: 0.95 - i * 0.001,
      threshold: 0.9,
      flagged: true,
    },
    explanation:
      state === "FLAGGED" || state === "BIAS_CHECKED"
        ? null
        : {
            node_id: `w${String(i).padStart(2, "0")}`,
            k_used: 1,
            n_neighbors: 6,
            rho: 0.05,
            converged: true,
            weights: WEIGHT_STRINGS,
          },
    narrative:
      state === "FLAGGED" || state === "BIAS_CHECKED"
        ? null
        : {
            node_id: `w${String(i).padStart(2, "0")}`,
            behavior_analysis: "The wallet turns funds around within one hop.",
            fraud_classification: "Consistent with money laundering layering.",
            fairness_judgment: "The flag warrants further investigation.",
            raw_response: "1. a\n2. b\n3. c",
            model_name: "offline-stub",
            created_at: "2026-01-01T00:00:00Z",
            source: "offline_stub",
            parse_failed: false,
          },
    reviewer_decision: null,
    created_at: `2026-01-01T00:00:${String(i % 60).padStart(2, "0")}Z`,
    updated_at: "2026-01-01T00:01:00Z",
  };
}

function egoPayload(center: string, k: number): EgoPayload {
  const ring = 2 + 2 * k;
  const nodes = [
    { id: center, score: 0.95, flagged: true, selected: true },
    ...Array.from({ length: ring }, (_, i) => ({
      id: `${center}-n${i}`,
      score: 0.1 + i * 0.01,
      flagged: i === 0,
      selected: false,
    })),
  ];
  const edges = nodes.slice(1).map((n) => ({
    src: center,
    dst: n.id,
    btc_mean: 1.5,
    btc_median: 1.0,
    btc_max: 3.2,
  }));
  return { center, k, nodes, edges };
}

function nodePayload(id: string): NodePayload {
  return {
    address: id,
    features: { total_txs: 2.0, btc_received_total: 5159.84, degree: 5 },
    class_label: "unknown",
    time_step: null,
    degree: 5,
    score: 0.95,
    flagged: true,
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FixtureServer {
  cases = new Map<string, CaseDoc>();
  requests: string[] = [];

  constructor(caseDocs: CaseDoc[] = []) {
    for (const doc of caseDocs) this.cases.set(doc.case_id, doc);
  }

  count(pattern: RegExp): number {
    return this.requests.filter((r) => pattern.test(r)).length;
  }

  fetch: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const url = new URL(input, "http://fixture");
    const path = url.pathname;
    this.requests.push(`${method} ${path}${url.search}`);

    let match = path.match(/^\/api\/v1\/cases$/);
    if (match && method === "GET") {
      const state = url.searchParams.get("state");
      const page = Number(url.searchParams.get("page") ?? "1");
      const pageSize = Number(url.searchParams.get("page_size") ?? "20");
      let docs = [...this.cases.values()].sort((a, b) =>
        `${a.created_at}|${a.case_id}`.localeCompare(`${b.created_at}|${b.case_id}`),
      );
      if (state) docs = docs.filter((d) => d.state === state);
      const total = docs.length;
      return json({
        cases: docs.slice((page - 1) * pageSize, page * pageSize),
        page,
        page_size: pageSize,
        total,
        total_pages: Math.max(1, Math.ceil(total / pageSize)),
      });
    }

    match = path.match(/^\/api\/v1\/cases\/([^/]+)$/);
    if (match && method === "GET") {
      const doc = this.cases.get(match[1]);
      if (!doc) return json({ code: "not_found", message: "no such case" }, 404);
      if (doc.state === "EXPLAINED") doc.state = "UNDER_REVIEW";
      return json(doc);
    }

    match = path.match(/^\/api\/v1\/cases\/([^/]+)\/decision$/);
    if (match && method === "POST") {
      const doc = this.cases.get(match[1]);
      if (!doc) return json({ code: "not_found", message: "no such case" }, 404);
      const body = JSON.parse(String(init?.body ?? "{}"));
      if (!body.reviewer_id) {
        return json({ code: "workflow_error", message: "reviewer_id is required" }, 400);
      }
      if (doc.reviewer_decision !== null || doc.state !== "UNDER_REVIEW") {
        return json(
          { code: "illegal_transition", message: "case already has an immutable decision" },
          409,
        );
      }
      doc.reviewer_decision = {
        override: Boolean(body.override),
        verdict: body.verdict ?? "",
        notes: body.notes ?? "",
        reviewer_id: body.reviewer_id,
        decided_at: "2026-01-01T00:02:00Z",
      };
      doc.state = body.override ? "OVERRIDDEN" : "CONFIRMED";
      return json(doc);
    }

    match = path.match(/^\/api\/v1\/nodes\/([^/]+)\/ego$/);
    if (match && method === "GET") {
      const k = Number(url.searchParams.get("k") ?? "1");
      if (!(k >= 1 && k <= 3)) {
        return json({ code: "bad_request", message: "k must be 1, 2 or 3" }, 400);
      }
      return json(egoPayload(decodeURIComponent(match[1]), k));
    }

    match = path.match(/^\/api\/v1\/nodes\/([^/]+)$/);
    if (match && method === "GET") {
      return json(nodePayload(decodeURIComponent(match[1])));
    }

    return json({ code: "not_found", message: `no route for ${method} ${path}` }, 404);
  };
}
