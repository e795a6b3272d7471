/** Payload shapes of the /api/v1 surface. The UI renders these verbatim. */

export type CaseState =
  | "FLAGGED"
  | "BIAS_CHECKED"
  | "EXPLAINED"
  | "UNDER_REVIEW"
  | "OVERRIDDEN"
  | "CONFIRMED"
  | "REPORTED";

export interface EgoNodePayload {
  id: string;
  score: number | null;
  flagged: boolean;
  selected: boolean;
}

export interface EgoEdgePayload {
  src: string;
  dst: string;
  btc_mean: number;
  btc_median: number;
  btc_max: number;
}

export interface EgoPayload {
  center: string;
  k: number;
  nodes: EgoNodePayload[];
  edges: EgoEdgePayload[];
}

export interface NodePayload {
  address: string;
  features: Record<string, number>;
  class_label: string | null;
  time_step: number | null;
  degree: number;
  score: number | null;
  flagged: boolean;
}

export interface ExplanationDoc {
  node_id: string;
  k_used: number;
  n_neighbors: number;
  rho: number;
  converged: boolean;
  /** feature -> scientific-notation string, e.g. "9.941e-01"; render as-is */
  weights: Record<string, string>;
  reason?: string;
}

export interface NarrativeDoc {
  node_id: string;
  behavior_analysis: string;
  fraud_classification: string;
  fairness_judgment: string;
  raw_response: string;
  model_name: string;
  created_at: string;
  source: "llm" | "offline_stub";
  parse_failed: boolean;
}

export interface ReviewerDecision {
  override: boolean;
  verdict: string;
  notes: string;
  reviewer_id: string;
  decided_at: string;
}

export interface CaseDoc {
  case_id: string;
  node_id: string;
  run_id: string;
  state: CaseState;
  anomaly: {
    attr_error: number;
    struct_error: number;
    score: number;
    threshold: number;
    flagged: boolean;
  };
  explanation: ExplanationDoc | null;
  narrative: NarrativeDoc | null;
  reviewer_decision: ReviewerDecision | null;
  created_at: string;
  updated_at: string;
}

export interface CaseListPayload {
  cases: CaseDoc[];
  page: number;
  page_size: number;
  total: number;
  total_pages: number;
}

export interface DecisionBody {
  override: boolean;
  verdict: string;
  notes: string;
  reviewer_id: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
