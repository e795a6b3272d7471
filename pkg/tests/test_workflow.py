import json
import math

import numpy as np
import pytest

from cryptotriage.anomaly import AnomalyResult
from cryptotriage.errors import (
    CaseNotFoundError,
    IllegalTransitionError,
    WorkflowError,
)
from cryptotriage.workflow import (
    AuditLog,
    BiasAuditConfig,
    CaseState,
    CaseStore,
    replay_states,
    run_bias_audit_stats,
)

from test_graph import make_graph


def result(address, score, flagged=True):
    return AnomalyResult(
        address=address,
        attr_error=score,
        struct_error=0.0,
        score=score,
        flagged=flagged,
        threshold=0.5,
    )


def scored_results(n_flagged, n_total):
    results = []
    for i in range(n_total):
        flagged = i < n_flagged
        results.append(result(f"n{i}", 0.9 if flagged else 0.1, flagged))
    return results


def graph_for(results):
    rows = [[i * 1.0, 1.0] for i in range(len(results))]
    return make_graph(
        len(results), [], feature_rows=rows, schema=("btc_transacted_total", "degree")
    )


def advance_to_review(store, results, graph, run_id="run1"):
    store.open_cases_from_scores(results, run_id, graph)
    store.run_bias_audit(results, graph, run_id)
    cases = []
    for case_id in store.case_ids():
        store.attach_explanation(case_id, {"weights": {}}, {"raw_response": "1. a\n2. b\n3. c"})
        cases.append(store.get_case(case_id, reviewer_fetch=True))
    return cases


# -- audit log ------------------------------------------------------------------


def test_audit_log_chain_and_replay(tmp_path):
    from cryptotriage.workflow import Actor

    log = AuditLog(str(tmp_path / "audit.log"))
    log.append("c1", Actor.AI_MODEL, "case_opened", {"x": 1})
    log.append("c1", Actor.BIAS_CHECKER, "bias_checked", {"ratio": 1.0})
    log.append("c2", Actor.AI_MODEL, "case_opened", {"x": 2})
    assert log.verify_chain() == []
    assert [e.seq for e in log.events()] == [1, 2, 3]
    log.close()

    # reload keeps the chain and appends after it
    log2 = AuditLog(str(tmp_path / "audit.log"))
    assert len(log2) == 3
    log2.append("c2", Actor.BIAS_CHECKER, "bias_checked", {"ratio": 1.0})
    assert log2.verify_chain() == []
    states = replay_states(log2.events())
    assert states == {"c1": CaseState.BIAS_CHECKED, "c2": CaseState.BIAS_CHECKED}
    log2.close()


def test_audit_log_detects_tampering(tmp_path):
    from cryptotriage.workflow import Actor, WorkflowError

    path = str(tmp_path / "audit.log")
    log = AuditLog(path)
    log.append("c1", Actor.AI_MODEL, "case_opened", {"x": 1})
    log.append("c1", Actor.BIAS_CHECKER, "bias_checked", {})
    log.close()

    lines = open(path).read().splitlines()
    doc = json.loads(lines[0])
    doc["action"] = "report_emitted"  # rewrite history
    lines[0] = json.dumps(doc, sort_keys=True)
    open(path, "w").write("\n".join(lines) + "\n")

    with pytest.raises(WorkflowError, match="verification"):
        AuditLog(path)


def test_audit_seq_strictly_increasing_no_gaps():
    store = CaseStore()
    results = scored_results(5, 20)
    advance_to_review(store, results, graph_for(results))
    seqs = [e.seq for e in store.audit.events()]
    assert seqs == list(range(1, len(seqs) + 1))


# -- bias audit stats --------------------------------------------------------------


def test_bias_audit_uniform_flags_pass():
    rng = np.random.default_rng(0)
    n = 2000
    values = rng.random(n)
    flags = rng.random(n) < 0.3  # flag rate independent of the feature
    stats = run_bias_audit_stats(values, flags, BiasAuditConfig())

    # independent per-bucket oracle via explicit quartile membership
    edges = [np.quantile(values, q) for q in (0.25, 0.5, 0.75)]
    oracle_rates = []
    for lo, hi in zip([-np.inf] + edges, edges + [np.inf]):
        mask = (values > lo) & (values <= hi)
        oracle_rates.append(flags[mask].mean())
    got_rates = [b["flag_rate"] for b in stats["buckets"]]
    assert np.allclose(sorted(got_rates), sorted(oracle_rates), atol=1e-12)
    assert stats["max_disparity_ratio"] < 1.5
    assert stats["passed"]


def test_bias_audit_extreme_concentration_fails():
    values = np.linspace(0, 1, 400)
    flags = values > 0.75  # all flags in the top quartile
    stats = run_bias_audit_stats(values, flags, BiasAuditConfig())
    assert stats["max_disparity_ratio"] == pytest.approx(1.0 / 1e-6)
    assert not stats["passed"]


def test_bias_audit_single_bucket_ratio_one():
    values = np.ones(50)  # constant feature: one occupied bucket
    flags = np.zeros(50, dtype=bool)
    flags[:10] = True
    stats = run_bias_audit_stats(values, flags, BiasAuditConfig())
    assert len(stats["buckets"]) == 1
    assert stats["max_disparity_ratio"] == 1.0
    assert stats["passed"]


def test_bias_audit_no_flags_ratio_one():
    stats = run_bias_audit_stats(
        np.linspace(0, 1, 100), np.zeros(100, dtype=bool), BiasAuditConfig()
    )
    assert stats["max_disparity_ratio"] == 1.0
    assert stats["passed"]


# -- case lifecycle ------------------------------------------------------------------


def test_open_cases_counts_and_idempotency():
    store = CaseStore()
    results = scored_results(0, 10)
    assert store.open_cases_from_scores(results, "r0") == []

    results = scored_results(50, 1000)
    graph = graph_for(results)
    created = store.open_cases_from_scores(results, "r1", graph)
    assert len(created) == 50
    opened_events = [e for e in store.audit.events() if e.action == "case_opened"]
    assert len(opened_events) == 50

    again = store.open_cases_from_scores(results, "r1", graph)
    assert again == []
    assert len(store.case_ids()) == 50


def test_bias_audit_advances_cases_and_annotates():
    store = CaseStore()
    results = scored_results(3, 12)
    graph = graph_for(results)
    store.open_cases_from_scores(results, "r1", graph)
    stats = store.run_bias_audit(results, graph, "r1")
    for case_id in store.case_ids():
        doc = store.get_case(case_id)
        assert doc["state"] == "BIAS_CHECKED"
        assert doc["bias_audit"] == stats


def test_attach_explanation_guards():
    store = CaseStore()
    results = scored_results(1, 6)
    graph = graph_for(results)
    store.open_cases_from_scores(results, "r1", graph)
    (case_id,) = store.case_ids()

    with pytest.raises(IllegalTransitionError, match="FLAGGED"):
        store.attach_explanation(case_id, {}, {})

    store.run_bias_audit(results, graph, "r1")
    doc = store.attach_explanation(case_id, {"weights": {"degree": "1.0e+00"}}, {"raw_response": "x"})
    assert doc["state"] == "EXPLAINED"

    with pytest.raises(IllegalTransitionError, match="already"):
        store.attach_explanation(case_id, {}, {})


def test_reviewer_fetch_advances_explained_to_under_review():
    store = CaseStore()
    results = scored_results(1, 6)
    graph = graph_for(results)
    store.open_cases_from_scores(results, "r1", graph)
    store.run_bias_audit(results, graph, "r1")
    (case_id,) = store.case_ids()
    store.attach_explanation(case_id, {}, {})

    assert store.get_case(case_id)["state"] == "EXPLAINED"  # non-reviewer read
    assert store.get_case(case_id, reviewer_fetch=True)["state"] == "UNDER_REVIEW"
    # second reviewer fetch does not produce another transition
    assert store.get_case(case_id, reviewer_fetch=True)["state"] == "UNDER_REVIEW"
    assert sum(1 for e in store.audit.events() if e.action == "review_started") == 1


def test_submit_review_override_and_confirm_paths():
    store = CaseStore()
    results = scored_results(2, 8)
    graph = graph_for(results)
    advance_to_review(store, results, graph)
    id_a, id_b = store.case_ids()

    doc = store.submit_review(id_a, override=True, verdict="false positive", notes="exchange hot wallet", reviewer_id="rev-1")
    assert doc["state"] == "OVERRIDDEN"
    doc = store.submit_review(id_b, override=False, verdict="money laundering", reviewer_id="rev-2")
    assert doc["state"] == "CONFIRMED"

    with pytest.raises(IllegalTransitionError, match="immutable"):
        store.submit_review(id_a, override=False, reviewer_id="rev-3")
    assert any(e.action == "decision_rejected" for e in store.audit.events())
    # decision unchanged
    assert store.get_case(id_a)["reviewer_decision"]["reviewer_id"] == "rev-1"


def test_submit_review_requires_reviewer_and_state():
    store = CaseStore()
    results = scored_results(1, 6)
    graph = graph_for(results)
    store.open_cases_from_scores(results, "r1", graph)
    (case_id,) = store.case_ids()
    with pytest.raises(WorkflowError, match="reviewer_id"):
        store.submit_review(case_id, override=True, reviewer_id="")
    with pytest.raises(IllegalTransitionError):
        store.submit_review(case_id, override=True, reviewer_id="rev-1")


def test_emit_report_contents_and_freezing():
    store = CaseStore()
    results = scored_results(1, 6)
    graph = graph_for(results)
    advance_to_review(store, results, graph)
    (case_id,) = store.case_ids()

    with pytest.raises(IllegalTransitionError):
        store.emit_report(case_id)

    store.submit_review(case_id, override=False, verdict="laundering", notes="n", reviewer_id="rev-9")
    report = store.emit_report(case_id)
    assert store.get_case(case_id)["state"] == "REPORTED"
    assert report["anomaly"]["score"] == 0.9
    assert report["reviewer_decision"]["reviewer_id"] == "rev-9"
    assert report["narrative"]["raw_response"] == "1. a\n2. b\n3. c"
    seqs = [e["seq"] for e in report["audit_events"]]
    assert seqs == sorted(seqs)
    assert report["audit_events"][-1]["action"] == "report_emitted"
    assert not report["cleared_by_reviewer"]

    # byte-identical on re-emission
    again = store.emit_report(case_id)
    assert json.dumps(report, sort_keys=True) == json.dumps(again, sort_keys=True)


def test_overridden_report_states_the_override():
    store = CaseStore()
    results = scored_results(1, 6)
    graph = graph_for(results)
    advance_to_review(store, results, graph)
    (case_id,) = store.case_ids()
    store.submit_review(case_id, override=True, notes="trusted exchange", reviewer_id="rev-2")
    report = store.emit_report(case_id)
    assert report["cleared_by_reviewer"]
    assert "cleared by human reviewer" in report["justification"].lower()
    assert "trusted exchange" in report["justification"]


def test_unknown_case():
    store = CaseStore()
    with pytest.raises(CaseNotFoundError):
        store.get_case("nope")


def test_pagination():
    store = CaseStore()
    results = scored_results(50, 100)
    store.open_cases_from_scores(results, "r1", graph_for(results))
    page1, total = store.list_cases(page=1, page_size=20)
    page3, _ = store.list_cases(page=3, page_size=20)
    page4, _ = store.list_cases(page=4, page_size=20)
    assert total == 50
    assert len(page1) == 20 and len(page3) == 10 and len(page4) == 0
    assert math.ceil(total / 20) == 3
    flagged, n_flagged = store.list_cases(state="FLAGGED", page=1, page_size=100)
    assert n_flagged == 50
    with pytest.raises(ValueError):
        store.list_cases(state="NOT_A_STATE")


def test_persistence_round_trip(tmp_path):
    workdir = str(tmp_path)
    store = CaseStore(workdir)
    results = scored_results(2, 8)
    graph = graph_for(results)
    advance_to_review(store, results, graph)
    id_a, id_b = store.case_ids()
    store.submit_review(id_a, override=False, verdict="v", reviewer_id="rev")
    store.emit_report(id_a)
    store.close()

    reloaded = CaseStore(workdir)
    assert reloaded.case_ids() == [id_a, id_b]
    assert reloaded.get_case(id_a)["state"] == "REPORTED"
    assert reloaded.get_case(id_b)["state"] == "UNDER_REVIEW"
    assert reloaded.audit.verify_chain() == []
    # replaying the persisted log reconstructs the persisted states
    states = replay_states(reloaded.audit.events())
    for case_id in reloaded.case_ids():
        assert states[case_id].value == reloaded.get_case(case_id)["state"]
    reloaded.close()


# -- randomized call sequences --------------------------------------------------------


def random_call_sequence(store, rng, case_id, results, graph):
    """Fire random workflow calls; exceptions from guards are expected."""
    ops = [
        lambda: store.open_cases_from_scores(results, "r1", graph),
        lambda: store.run_bias_audit(results, graph, "r1"),
        lambda: store.attach_explanation(case_id, {"w": 1}, {"n": 1}),
        lambda: store.get_case(case_id, reviewer_fetch=True),
        lambda: store.submit_review(
            case_id,
            override=bool(rng.integers(0, 2)),
            verdict="v",
            reviewer_id="rev",
        ),
        lambda: store.emit_report(case_id),
    ]
    for _ in range(int(rng.integers(3, 12))):
        op = ops[int(rng.integers(0, len(ops)))]
        try:
            op()
        except (IllegalTransitionError, CaseNotFoundError, WorkflowError):
            pass


def test_randomized_sequences_never_skip_review():
    rng = np.random.default_rng(2024)
    results = scored_results(1, 6)
    graph = graph_for(results)
    for _ in range(300):
        store = CaseStore()
        store.open_cases_from_scores(results, "r1", graph)
        (case_id,) = store.case_ids()
        random_call_sequence(store, rng, case_id, results, graph)

        events = store.audit.events()
        doc = store.get_case(case_id)
        if doc["state"] == "REPORTED":
            assert any(e.action.startswith("decision_submitted") for e in events)
            assert doc["reviewer_decision"] is not None
        # audit replay always reconstructs the live state
        assert replay_states(events)[case_id].value == doc["state"]
        assert store.audit.verify_chain() == []
