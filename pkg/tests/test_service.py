import pytest
from fastapi.testclient import TestClient

from cryptotriage.service import create_app

from conftest import LISTING_ADDRESS


@pytest.fixture()
def client(fixture_runtime):
    app = create_app(fixture_runtime)
    with TestClient(app) as tc:
        tc.runtime = fixture_runtime
        yield tc


def first_case_id(client):
    return client.get("/api/v1/cases").json()["cases"][0]["case_id"]


def test_get_node(client):
    body = client.get(f"/api/v1/nodes/{LISTING_ADDRESS}").json()
    assert body["address"] == LISTING_ADDRESS
    assert body["features"]["btc_received_total"] == 5159.84
    assert body["degree"] == 5
    assert isinstance(body["score"], float)

    missing = client.get("/api/v1/nodes/ghost")
    assert missing.status_code == 404
    assert missing.json() == {
        "code": "not_found",
        "message": "unknown wallet address: ghost",
    }


def test_get_ego(client):
    body = client.get(f"/api/v1/nodes/{LISTING_ADDRESS}/ego", params={"k": 1}).json()
    assert body["center"] == LISTING_ADDRESS
    assert body["k"] == 1
    assert len(body["nodes"]) == 6
    ids = {n["id"] for n in body["nodes"]}
    for e in body["edges"]:
        assert e["src"] in ids and e["dst"] in ids
    selected = [n for n in body["nodes"] if n["selected"]]
    assert [n["id"] for n in selected] == [LISTING_ADDRESS]

    assert client.get(f"/api/v1/nodes/{LISTING_ADDRESS}/ego", params={"k": 4}).status_code == 400
    assert client.get(f"/api/v1/nodes/{LISTING_ADDRESS}/ego", params={"k": 0}).status_code == 400


def test_case_listing_and_pagination(client):
    body = client.get("/api/v1/cases").json()
    assert body["total"] >= 1
    assert body["page"] == 1
    flagged_total = body["total"]

    paged = client.get("/api/v1/cases", params={"page_size": 1, "page": 1}).json()
    assert len(paged["cases"]) == 1
    assert paged["total_pages"] == flagged_total

    none = client.get("/api/v1/cases", params={"state": "REPORTED"}).json()
    assert none["cases"] == [] and none["total"] == 0

    bad = client.get("/api/v1/cases", params={"state": "NOT_A_STATE"})
    assert bad.status_code == 400


def test_full_review_flow_over_http(client):
    case_id = first_case_id(client)

    explained = client.post(f"/api/v1/cases/{case_id}/explain")
    assert explained.status_code == 200
    body = explained.json()
    assert body["state"] == "EXPLAINED"
    assert body["explanation"]["weights"]
    assert body["narrative"]["raw_response"].startswith("1.")

    # double explain -> conflict
    again = client.post(f"/api/v1/cases/{case_id}/explain")
    assert again.status_code == 409

    # reviewer fetch advances to UNDER_REVIEW
    fetched = client.get(f"/api/v1/cases/{case_id}").json()
    assert fetched["state"] == "UNDER_REVIEW"

    # decision without reviewer_id -> workflow error
    bad = client.post(f"/api/v1/cases/{case_id}/decision", json={"override": False})
    assert bad.status_code == 400

    decided = client.post(
        f"/api/v1/cases/{case_id}/decision",
        json={
            "override": False,
            "verdict": "money laundering",
            "notes": "clear layering pattern",
            "reviewer_id": "rev-7",
        },
    )
    assert decided.status_code == 200
    assert decided.json()["state"] == "CONFIRMED"

    second = client.post(
        f"/api/v1/cases/{case_id}/decision",
        json={"override": True, "reviewer_id": "rev-8"},
    )
    assert second.status_code == 409

    report = client.get(f"/api/v1/cases/{case_id}/report")
    assert report.status_code == 200
    doc = report.json()
    assert doc["case_id"] == case_id
    assert doc["reviewer_decision"]["reviewer_id"] == "rev-7"
    assert doc["narrative"]["fairness_judgment"]
    assert [e["seq"] for e in doc["audit_events"]] == sorted(
        e["seq"] for e in doc["audit_events"]
    )

    # re-fetch is byte-stable
    assert client.get(f"/api/v1/cases/{case_id}/report").content == report.content


def test_report_before_decision_conflicts(client):
    case_id = first_case_id(client)
    response = client.get(f"/api/v1/cases/{case_id}/report")
    assert response.status_code == 409
    assert response.json()["code"] == "illegal_transition"


def test_audit_endpoint(client):
    case_id = first_case_id(client)
    client.post(f"/api/v1/cases/{case_id}/explain")
    body = client.get("/api/v1/audit").json()
    seqs = [e["seq"] for e in body["events"]]
    assert seqs == list(range(1, len(seqs) + 1))

    tail = client.get("/api/v1/audit", params={"from_seq": seqs[-1]}).json()
    assert len(tail["events"]) == 1

    actions = {e["action"] for e in body["events"]}
    assert "case_opened" in actions and "bias_checked" in actions


def test_unknown_case_404(client):
    assert client.get("/api/v1/cases/cdeadbeef0000").status_code == 404
    assert client.post("/api/v1/cases/cdeadbeef0000/explain").status_code == 404
