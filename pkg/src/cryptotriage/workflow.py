"""Case workflow: flag, bias audit, explanation, human review, regulator report.

Cases move through a fixed state machine; every transition appends one event
to a hash-chained, append-only audit log, and the final report is assembled
from persisted artifacts only and frozen at emission time.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .anomaly import AnomalyResult
from .errors import CaseNotFoundError, IllegalTransitionError, WorkflowError
from .graph import TransactionGraph

REPORT_TEMPLATE_VERSION = "regulator-report/v1"

GENESIS_HASH = "0" * 64


class CaseState(str, Enum):
    FLAGGED = "FLAGGED"
    BIAS_CHECKED = "BIAS_CHECKED"
    EXPLAINED = "EXPLAINED"
    UNDER_REVIEW = "UNDER_REVIEW"
    OVERRIDDEN = "OVERRIDDEN"
    CONFIRMED = "CONFIRMED"
    REPORTED = "REPORTED"


class Actor(str, Enum):
    AI_MODEL = "AI_Model"
    BIAS_CHECKER = "Bias_Checker"
    EXPLAINER = "Explainer"
    HUMAN_REVIEWER = "Human_Reviewer"
    REGULATOR = "Regulator"
    SYSTEM = "System"


# action -> state reached; replay of the log reconstructs case states from this
TRANSITION_ACTIONS = {
    "case_opened": CaseState.FLAGGED,
    "bias_checked": CaseState.BIAS_CHECKED,
    "explanation_attached": CaseState.EXPLAINED,
    "review_started": CaseState.UNDER_REVIEW,
    "decision_submitted:OVERRIDDEN": CaseState.OVERRIDDEN,
    "decision_submitted:CONFIRMED": CaseState.CONFIRMED,
    "report_emitted": CaseState.REPORTED,
}

LEGAL_TRANSITIONS = {
    CaseState.FLAGGED: {CaseState.BIAS_CHECKED},
    CaseState.BIAS_CHECKED: {CaseState.EXPLAINED},
    CaseState.EXPLAINED: {CaseState.UNDER_REVIEW},
    CaseState.UNDER_REVIEW: {CaseState.OVERRIDDEN, CaseState.CONFIRMED},
    CaseState.OVERRIDDEN: {CaseState.REPORTED},
    CaseState.CONFIRMED: {CaseState.REPORTED},
    CaseState.REPORTED: set(),
}


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def payload_hash(payload) -> str:
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    case_id: str
    actor: str
    action: str
    payload_hash: str
    at: str
    prev_hash: str
    hash: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "case_id": self.case_id,
            "actor": self.actor,
            "action": self.action,
            "payload_hash": self.payload_hash,
            "at": self.at,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
        }


def _event_hash(seq, case_id, actor, action, p_hash, at, prev_hash) -> str:
    body = _canonical(
        {
            "seq": seq,
            "case_id": case_id,
            "actor": actor,
            "action": action,
            "payload_hash": p_hash,
            "at": at,
            "prev_hash": prev_hash,
        }
    )
    return hashlib.sha256(body.encode()).hexdigest()


class AuditLog:
    """Append-only event log with a rolling hash chain for tamper evidence."""

    def __init__(self, path: str | None = None):
        self.path = path
        self._events: list[AuditEvent] = []
        self._fh = None
        self._lock = threading.Lock()
        if path:
            if os.path.exists(path):
                self._load(path)
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            self._fh = open(path, "a", encoding="utf-8")

    def _load(self, path: str) -> None:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._events.append(AuditEvent(**json.loads(line)))
        problems = self.verify_chain()
        if problems:
            raise WorkflowError(f"audit log {path} failed verification: {problems[0]}")

    @property
    def last_hash(self) -> str:
        return self._events[-1].hash if self._events else GENESIS_HASH

    def __len__(self) -> int:
        return len(self._events)

    def append(self, case_id: str, actor: Actor, action: str, payload) -> AuditEvent:
        with self._lock:
            seq = len(self._events) + 1
            at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            p_hash = payload_hash(payload)
            prev = self.last_hash
            event = AuditEvent(
                seq=seq,
                case_id=case_id,
                actor=actor.value,
                action=action,
                payload_hash=p_hash,
                at=at,
                prev_hash=prev,
                hash=_event_hash(seq, case_id, actor.value, action, p_hash, at, prev),
            )
            self._events.append(event)
            if self._fh:
                self._fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
                self._fh.flush()
            return event

    def events(self, from_seq: int = 0) -> list[AuditEvent]:
        with self._lock:
            return [e for e in self._events if e.seq >= from_seq]

    def verify_chain(self) -> list[str]:
        problems = []
        prev = GENESIS_HASH
        for i, e in enumerate(self._events, start=1):
            if e.seq != i:
                problems.append(f"seq gap at position {i}: found {e.seq}")
            if e.prev_hash != prev:
                problems.append(f"broken chain at seq {e.seq}")
            expected = _event_hash(
                e.seq, e.case_id, e.actor, e.action, e.payload_hash, e.at, e.prev_hash
            )
            if e.hash != expected:
                problems.append(f"hash mismatch at seq {e.seq}")
            prev = e.hash
        return problems

    def close(self) -> None:
        with self._lock:
            if self._fh:
                self._fh.close()
                self._fh = None


def replay_states(events) -> dict[str, CaseState]:
    """Reconstruct every case's current state from the audit log alone."""
    states: dict[str, CaseState] = {}
    for e in events:
        target = TRANSITION_ACTIONS.get(e.action)
        if target is not None and e.case_id:
            states[e.case_id] = target
    return states


@dataclass(frozen=True)
class BiasAuditConfig:
    feature: str = "btc_transacted_total"
    n_buckets: int = 4
    max_ratio: float = 3.0
    epsilon: float = 1e-6


def run_bias_audit_stats(values: np.ndarray, flags: np.ndarray, config: BiasAuditConfig) -> dict:
    """Flag-rate disparity across feature-quantile buckets (heuristic audit)."""
    values = np.asarray(values, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    edges = [
        float(np.quantile(values, i / config.n_buckets))
        for i in range(1, config.n_buckets)
    ]
    bucket_of = np.searchsorted(edges, values, side="right")
    buckets = []
    rates = []
    for b in range(config.n_buckets):
        mask = bucket_of == b
        size = int(mask.sum())
        if size == 0:
            continue
        rate = float(flags[mask].sum() / size)
        buckets.append({"bucket": b, "size": size, "flag_rate": rate})
        rates.append(rate)
    max_rate = max(rates)
    min_rate = min(rates)
    ratio = 1.0 if max_rate == 0 else max(1.0, max_rate / max(min_rate, config.epsilon))
    return {
        "feature": config.feature,
        "bucket_edges": edges,
        "buckets": buckets,
        "max_disparity_ratio": ratio,
        "passed": ratio <= config.max_ratio,
        "max_ratio_bound": config.max_ratio,
    }


def _case_id_for(node_id: str, run_id: str) -> str:
    return "c" + hashlib.sha256(f"{node_id}|{run_id}".encode()).hexdigest()[:12]


class CaseStore:
    """Single-writer store of case documents plus the audit log.

    With a workdir, cases persist as one JSON document each and the audit
    log as line-delimited JSON; without one everything stays in memory.
    """

    def __init__(self, workdir: str | None = None):
        self.workdir = workdir
        self._cases: dict[str, dict] = {}
        self._lock = threading.RLock()
        if workdir:
            cases_dir = os.path.join(workdir, "cases")
            os.makedirs(cases_dir, exist_ok=True)
            self.audit = AuditLog(os.path.join(workdir, "audit.log"))
            for name in sorted(os.listdir(cases_dir)):
                if name.endswith(".json"):
                    with open(os.path.join(cases_dir, name), encoding="utf-8") as fh:
                        doc = json.load(fh)
                    self._cases[doc["case_id"]] = doc
        else:
            self.audit = AuditLog(None)

    # -- helpers ----------------------------------------------------------

    def _persist(self, doc: dict) -> None:
        if self.workdir:
            path = os.path.join(self.workdir, "cases", f"{doc['case_id']}.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)

    def _get(self, case_id: str) -> dict:
        doc = self._cases.get(case_id)
        if doc is None:
            raise CaseNotFoundError(f"no such case: {case_id}")
        return doc

    def _transition(self, doc: dict, target: CaseState, actor: Actor, action: str, payload) -> None:
        current = CaseState(doc["state"])
        if target not in LEGAL_TRANSITIONS[current]:
            raise IllegalTransitionError(
                f"case {doc['case_id']}: cannot move {current.value} -> {target.value}"
            )
        doc["state"] = target.value
        doc["updated_at"] = _now()
        self.audit.append(doc["case_id"], actor, action, payload)
        self._persist(doc)

    def close(self) -> None:
        self.audit.close()

    # -- queries --------------------------------------------------------------

    def get_case(self, case_id: str, reviewer_fetch: bool = False) -> dict:
        with self._lock:
            doc = self._get(case_id)
            if reviewer_fetch and doc["state"] == CaseState.EXPLAINED.value:
                self._transition(
                    doc,
                    CaseState.UNDER_REVIEW,
                    Actor.HUMAN_REVIEWER,
                    "review_started",
                    {"case_id": case_id},
                )
            return copy.deepcopy(doc)

    def list_cases(self, state: str | None = None, page: int = 1, page_size: int = 20):
        if page < 1:
            raise ValueError("page starts at 1")
        with self._lock:
            docs = sorted(self._cases.values(), key=lambda d: (d["created_at"], d["case_id"]))
            if state is not None:
                CaseState(state)  # validates
                docs = [d for d in docs if d["state"] == state]
            total = len(docs)
            start = (page - 1) * page_size
            return copy.deepcopy(docs[start : start + page_size]), total

    def case_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._cases)

    def find_case_for_node(self, node_id: str) -> dict | None:
        with self._lock:
            for doc in self._cases.values():
                if doc["node_id"] == node_id:
                    return copy.deepcopy(doc)
        return None

    # -- pipeline operations ------------------------------------------------------

    def open_cases_from_scores(
        self,
        results: list[AnomalyResult],
        run_id: str,
        graph: TransactionGraph | None = None,
    ) -> list[dict]:
        """One FLAGGED case per flagged node; idempotent per (node, run)."""
        created = []
        with self._lock:
            for r in results:
                if not r.flagged:
                    continue
                case_id = _case_id_for(r.address, run_id)
                if case_id in self._cases:
                    continue
                node_snapshot = None
                if graph is not None and graph.has_node(r.address):
                    node = graph.node(r.address)
                    node_snapshot = {
                        "address": node.address,
                        "features": node.features,
                        "class_label": node.class_label,
                        "time_step": node.time_step,
                    }
                doc = {
                    "case_id": case_id,
                    "node_id": r.address,
                    "run_id": run_id,
                    "state": CaseState.FLAGGED.value,
                    "anomaly": {
                        "attr_error": r.attr_error,
                        "struct_error": r.struct_error,
                        "score": r.score,
                        "threshold": r.threshold,
                        "flagged": True,
                    },
                    "node": node_snapshot,
                    "bias_audit": None,
                    "explanation": None,
                    "narrative": None,
                    "reviewer_decision": None,
                    "report": None,
                    "created_at": _now(),
                    "updated_at": _now(),
                }
                self._cases[case_id] = doc
                self.audit.append(
                    case_id,
                    Actor.AI_MODEL,
                    "case_opened",
                    {"node_id": r.address, "score": r.score, "run_id": run_id},
                )
                self._persist(doc)
                created.append(copy.deepcopy(doc))
        return created

    def run_bias_audit(
        self,
        results: list[AnomalyResult],
        graph: TransactionGraph,
        run_id: str,
        config: BiasAuditConfig | None = None,
    ) -> dict:
        """Audit flag-rate disparity; annotates and advances the run's cases.

        A failed audit never halts the pipeline; it is recorded on the cases
        and in the audit log.
        """
        config = config or BiasAuditConfig()
        if config.feature not in graph.feature_schema:
            raise WorkflowError(f"bias audit feature not in schema: {config.feature}")
        j = graph.feature_schema.index(config.feature)
        values = np.array([graph.X_raw[graph.index_of(r.address), j] for r in results])
        flags = np.array([r.flagged for r in results])
        stats = run_bias_audit_stats(values, flags, config)
        with self._lock:
            for r in results:
                if not r.flagged:
                    continue
                case_id = _case_id_for(r.address, run_id)
                doc = self._cases.get(case_id)
                if doc is None or doc["state"] != CaseState.FLAGGED.value:
                    continue
                doc["bias_audit"] = stats
                self._transition(
                    doc,
                    CaseState.BIAS_CHECKED,
                    Actor.BIAS_CHECKER,
                    "bias_checked",
                    stats,
                )
        return stats

    def attach_explanation(self, case_id: str, weights_doc: dict, narrative_doc: dict) -> dict:
        with self._lock:
            doc = self._get(case_id)
            if doc["explanation"] is not None:
                raise IllegalTransitionError(
                    f"case {case_id} already has an explanation attached"
                )
            state = CaseState(doc["state"])
            if state != CaseState.BIAS_CHECKED:
                raise IllegalTransitionError(
                    f"case {case_id}: cannot attach explanation in state {state.value}"
                )
            doc["explanation"] = weights_doc
            doc["narrative"] = narrative_doc
            self._transition(
                doc,
                CaseState.EXPLAINED,
                Actor.EXPLAINER,
                "explanation_attached",
                {"weights": weights_doc, "narrative": narrative_doc},
            )
            return copy.deepcopy(doc)

    def submit_review(
        self,
        case_id: str,
        override: bool,
        verdict: str = "",
        notes: str = "",
        reviewer_id: str = "",
    ) -> dict:
        if not reviewer_id:
            raise WorkflowError("reviewer_id is required for a decision")
        with self._lock:
            doc = self._get(case_id)
            state = CaseState(doc["state"])
            decision = {
                "override": bool(override),
                "verdict": verdict,
                "notes": notes,
                "reviewer_id": reviewer_id,
                "decided_at": _now(),
            }
            if doc["reviewer_decision"] is not None or state in (
                CaseState.OVERRIDDEN,
                CaseState.CONFIRMED,
                CaseState.REPORTED,
            ):
                self.audit.append(
                    case_id, Actor.HUMAN_REVIEWER, "decision_rejected", decision
                )
                raise IllegalTransitionError(
                    f"case {case_id} already has an immutable decision"
                )
            if state != CaseState.UNDER_REVIEW:
                raise IllegalTransitionError(
                    f"case {case_id}: decision requires UNDER_REVIEW, found {state.value}"
                )
            doc["reviewer_decision"] = decision
            target = CaseState.OVERRIDDEN if override else CaseState.CONFIRMED
            self._transition(
                doc,
                target,
                Actor.HUMAN_REVIEWER,
                f"decision_submitted:{target.value}",
                decision,
            )
            return copy.deepcopy(doc)

    def emit_report(self, case_id: str) -> dict:
        """Assemble (and freeze, first time) the regulator report."""
        with self._lock:
            doc = self._get(case_id)
            state = CaseState(doc["state"])
            if state == CaseState.REPORTED:
                return copy.deepcopy(doc["report"])
            if state not in (CaseState.OVERRIDDEN, CaseState.CONFIRMED):
                raise IllegalTransitionError(
                    f"case {case_id}: report requires a decision, state is {state.value}"
                )
            self._transition(
                doc,
                CaseState.REPORTED,
                Actor.REGULATOR,
                "report_emitted",
                {"case_id": case_id},
            )
            decision = doc["reviewer_decision"]
            if decision["override"]:
                justification = (
                    "Flag cleared by human reviewer "
                    f"{decision['reviewer_id']}; the wallet is treated as cleared. "
                    f"Reviewer notes: {decision['notes'] or '(none)'}"
                )
            else:
                justification = (
                    f"Flag confirmed by human reviewer {decision['reviewer_id']}. "
                    f"Verdict: {decision['verdict'] or '(unspecified)'}. "
                    f"Reviewer notes: {decision['notes'] or '(none)'}"
                )
            report = {
                "template_version": REPORT_TEMPLATE_VERSION,
                "case_id": case_id,
                "node_id": doc["node_id"],
                "node": doc["node"],
                "anomaly": doc["anomaly"],
                "bias_audit": doc["bias_audit"],
                "explanation": doc["explanation"],
                "narrative": doc["narrative"],
                "reviewer_decision": decision,
                "cleared_by_reviewer": bool(decision["override"]),
                "justification": justification,
                "audit_events": [
                    e.to_dict() for e in self.audit.events() if e.case_id == case_id
                ],
            }
            doc["report"] = report
            self._persist(doc)
            return copy.deepcopy(report)


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
