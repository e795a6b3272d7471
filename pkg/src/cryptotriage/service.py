"""HTTP surface over the triage pipeline, consumed by the dashboard and CLI.

All endpoints live under /api/v1 and return errors as {code, message}.
"""

from __future__ import annotations

import json
import os
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .anomaly import AnomalyResult, results_run_id
from .config import RunConfig
from .errors import (
    CaseNotFoundError,
    CryptoTriageError,
    IllegalTransitionError,
    UnknownNodeError,
    WorkflowError,
)
from .explain import explain_node, save_weights, weights_to_json
from .graph import TransactionGraph
from .narrate import (
    DEFAULT_CATALOG,
    FraudTypeCatalog,
    ResponseCache,
    build_prompt,
    narrate,
    save_explanation,
)
from .workflow import BiasAuditConfig, CaseStore


@dataclass
class TriageRuntime:
    """Everything a request handler needs, built once per process."""

    graph: TransactionGraph
    results: list[AnomalyResult]
    store: CaseStore
    config: RunConfig
    run_id: str = ""
    cache: ResponseCache | None = None
    catalog: FraudTypeCatalog = DEFAULT_CATALOG
    scores: np.ndarray = field(init=False)
    by_address: dict = field(init=False)

    def __post_init__(self):
        self.scores = np.zeros(self.graph.n_nodes)
        self.by_address = {}
        for r in self.results:
            if self.graph.has_node(r.address):
                self.scores[self.graph.index_of(r.address)] = r.score
            self.by_address[r.address] = r
        if not self.run_id:
            self.run_id = results_run_id(self.results, self.graph.schema_hash())
        if self.cache is None:
            workdir = self.config.paths.workdir
            cache_dir = os.path.join(workdir, "llm_cache") if workdir else None
            self.cache = ResponseCache(cache_dir)

    def bias_config(self) -> BiasAuditConfig:
        b = self.config.bias
        return BiasAuditConfig(
            feature=b.feature, n_buckets=b.n_buckets, max_ratio=b.max_ratio
        )


def explain_for_node(runtime: TriageRuntime, node_id: str):
    """Run the explainer and narrator for one node; persist both documents."""
    expl = explain_node(runtime.graph, runtime.scores, node_id, runtime.config.explainer)
    node = runtime.graph.node(node_id)
    bundle = build_prompt(
        node, expl, runtime.catalog, m=runtime.config.narrator.top_features
    )
    explanation = narrate(bundle, runtime.config.narrator, cache=runtime.cache)
    workdir = runtime.config.paths.workdir
    if workdir:
        out_dir = os.path.join(workdir, "explanations")
        save_weights(expl, out_dir)
        save_explanation(explanation, out_dir)
    weights_doc = json.loads(weights_to_json(expl))
    return expl, weights_doc, explanation


def explain_case(runtime: TriageRuntime, case_id: str) -> dict:
    case = runtime.store.get_case(case_id)
    _, weights_doc, explanation = explain_for_node(runtime, case["node_id"])
    return runtime.store.attach_explanation(case_id, weights_doc, explanation.to_dict())


class DecisionBody(BaseModel):
    override: bool
    verdict: str = ""
    notes: str = ""
    reviewer_id: str = ""


def _node_payload(runtime: TriageRuntime, node_id: str) -> dict:
    node = runtime.graph.node(node_id)
    result = runtime.by_address.get(node_id)
    return {
        "address": node.address,
        "features": node.features,
        "class_label": node.class_label,
        "time_step": node.time_step,
        "degree": runtime.graph.degree_of(runtime.graph.index_of(node_id)),
        "score": result.score if result else None,
        "flagged": result.flagged if result else False,
    }


def create_app(runtime: TriageRuntime) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        runtime.store.close()  # flushes and closes the audit log

    app = FastAPI(title="cryptotriage", version="0.1.0", lifespan=lifespan)

    @app.exception_handler(CryptoTriageError)
    async def triage_error(request: Request, exc: CryptoTriageError):
        if isinstance(exc, (CaseNotFoundError, UnknownNodeError)):
            status, code = 404, "not_found"
        elif isinstance(exc, IllegalTransitionError):
            status, code = 409, "illegal_transition"
        elif isinstance(exc, WorkflowError):
            status, code = 400, "workflow_error"
        else:
            status, code = 400, "bad_request"
        return JSONResponse(status_code=status, content={"code": code, "message": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=400, content={"code": "bad_request", "message": str(exc)}
        )

    @app.get("/api/v1/nodes/{node_id}")
    def get_node(node_id: str):
        return _node_payload(runtime, node_id)

    @app.get("/api/v1/nodes/{node_id}/ego")
    def get_ego(node_id: str, k: int = Query(default=1)):
        if not 1 <= k <= 3:
            return JSONResponse(
                status_code=400,
                content={"code": "bad_request", "message": "k must be 1, 2 or 3"},
            )
        ego = runtime.graph.ego_network(node_id, k)
        nodes = []
        for idx in ego.member_indices:
            address = runtime.graph.address_of(int(idx))
            result = runtime.by_address.get(address)
            nodes.append(
                {
                    "id": address,
                    "score": result.score if result else None,
                    "flagged": result.flagged if result else False,
                    "selected": address == node_id,
                }
            )
        edges = [
            {
                "src": e.src,
                "dst": e.dst,
                "btc_mean": e.btc_mean,
                "btc_median": e.btc_median,
                "btc_max": e.btc_max,
            }
            for e in ego.induced_edges
        ]
        return {"center": node_id, "k": k, "nodes": nodes, "edges": edges}

    @app.get("/api/v1/cases")
    def list_cases(
        state: str | None = None,
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=20, ge=1, le=200),
    ):
        cases, total = runtime.store.list_cases(state=state, page=page, page_size=page_size)
        return {
            "cases": cases,
            "page": page,
            "page_size": page_size,
            "total": total,
            "total_pages": max(1, -(-total // page_size)),
        }

    @app.get("/api/v1/cases/{case_id}")
    def get_case(case_id: str):
        return runtime.store.get_case(case_id, reviewer_fetch=True)

    @app.post("/api/v1/cases/{case_id}/explain")
    def post_explain(case_id: str):
        return explain_case(runtime, case_id)

    @app.post("/api/v1/cases/{case_id}/decision")
    def post_decision(case_id: str, body: DecisionBody):
        return runtime.store.submit_review(
            case_id,
            override=body.override,
            verdict=body.verdict,
            notes=body.notes,
            reviewer_id=body.reviewer_id,
        )

    @app.get("/api/v1/cases/{case_id}/report")
    def get_report(case_id: str):
        return runtime.store.emit_report(case_id)

    @app.get("/api/v1/audit")
    def get_audit(from_seq: int = Query(default=0, ge=0)):
        return {"events": [e.to_dict() for e in runtime.store.audit.events(from_seq)]}

    static_dir = runtime.config.service.static_dir
    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="dashboard")

    return app
