from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from dosebridge.service import create_app

PRIOR = {"mu1": -0.524, "mu2": 0.147, "s11": 0.151, "s12": -0.008, "s22": 0.001}
GRID = {"doses": [2, 4, 8, 16, 22, 28, 40, 54, 70], "d_ref": 28.0, "gamma": 0.25}


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "sessions")
    with TestClient(app) as c:
        yield c


def create_trial(client, **overrides):
    body = {
        "grid": GRID,
        "trial": {"cohort_size": 3, "max_cohorts": 11, "start_dose": 4.0, "u01": 0.6,
                  "seed": 42, **overrides.pop("trial", {})},
        "prior": PRIOR,
        **overrides,
    }
    resp = client.post("/trials", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_create_returns_prior_summary_and_recommendation(client):
    doc = create_trial(client)
    assert doc["recommendation"]["dose"] == 4.0
    assert doc["predictions"] == [0, 0, 0, 0, 1, 1, 1, 1, 1]
    assert doc["prior_safety"]["prob_risk_below_0.1"][1] == pytest.approx(0.825, abs=0.01)
    probs = doc["summary"]["prob_overdose"]
    compliant = [d for d, po in zip(GRID["doses"], probs) if po <= 0.25]
    assert max(compliant) == 16


def test_create_validation_errors(client):
    resp = client.post("/trials", json={"grid": GRID, "trial": {}})
    assert resp.status_code == 422  # neither study nor prior
    bad = {"grid": GRID, "animal_study": {"species_factor": 20.0, "arms": []}}
    resp = client.post("/trials", json=bad)
    assert resp.status_code == 422
    bad_grid = {"grid": {**GRID, "doses": [4, 2]}, "prior": PRIOR}
    resp = client.post("/trials", json=bad_grid)
    assert resp.status_code == 422
    detail = resp.json()["detail"]
    assert detail and "loc" in detail[0] and "msg" in detail[0]


def test_idempotent_creation(client):
    a = create_trial(client, idempotency_key="abc")
    b = create_trial(client, idempotency_key="abc")
    assert a["session_id"] == b["session_id"]
    assert b["replayed"] is True


def test_cohort_round_trip_updates_trace_and_recommendation(client):
    doc = create_trial(client)
    sid = doc["session_id"]
    resp = client.post(f"/trials/{sid}/cohorts", json={"dose": 4.0, "outcomes": [1, 0, 0]})
    assert resp.status_code == 200, resp.text
    out = resp.json()
    assert out["trace_point"]["cohort"] == 1
    assert out["trace_point"]["weight"] == pytest.approx(0.26, abs=0.05)
    trace = client.get(f"/trials/{sid}/trace").json()
    assert len(trace["trace"]) == 1
    assert trace["doses_given"] == [4.0]
    # the file was persisted before the response
    state = client.get(f"/trials/{sid}").json()
    assert state["n_cohorts"] == 1
    assert state["recommendation"]["dose"] is not None


def test_cohort_errors(client):
    sid = create_trial(client)["session_id"]
    resp = client.post(f"/trials/{sid}/cohorts", json={"dose": 4.0, "outcomes": [0, 0]})
    assert resp.status_code == 422
    resp = client.post(f"/trials/{sid}/cohorts", json={"dose": 54.0, "outcomes": [0, 0, 0]})
    assert resp.status_code == 409
    resp = client.post(f"/trials/{sid}/cohorts", json={"dose": 3.5, "outcomes": [0, 0, 0]})
    assert resp.status_code == 422
    assert client.get("/trials/doesnotexist").status_code == 404


def test_cohort_idempotency_key_replays_response(client):
    sid = create_trial(client)["session_id"]
    body = {"dose": 4.0, "outcomes": [0, 0, 0], "idempotency_key": "c1"}
    first = client.post(f"/trials/{sid}/cohorts", json=body).json()
    second = client.post(f"/trials/{sid}/cohorts", json=body).json()
    assert first == second
    assert client.get(f"/trials/{sid}").json()["n_cohorts"] == 1


def test_gone_after_stop(client):
    sid = create_trial(client)["session_id"]
    resp = client.post(f"/trials/{sid}/cohorts", json={"dose": 4.0, "outcomes": [1, 1, 1]})
    assert resp.json()["status"] == "stopped_early"
    resp = client.post(f"/trials/{sid}/cohorts", json={"dose": 2.0, "outcomes": [0, 0, 0]})
    assert resp.status_code == 410


def test_whatif_is_pure_and_deterministic(client):
    sid = create_trial(client)["session_id"]
    before = client.get(f"/trials/{sid}").json()["state_hash"]
    w1 = client.get(f"/trials/{sid}/whatif", params={"dose": 4.0, "dlts": 1})
    w2 = client.get(f"/trials/{sid}/whatif", params={"dose": 4.0, "dlts": 1})
    assert w1.status_code == 200
    assert w1.content == w2.content
    after = client.get(f"/trials/{sid}").json()["state_hash"]
    assert before == after
    assert w1.json()["non_binding"] is True
    # the hypothetical result equals actually recording the same cohort
    recorded = client.post(f"/trials/{sid}/cohorts", json={"dose": 4.0, "outcomes": [1, 0, 0]}).json()
    assert w1.json()["summary"] == recorded["summary"]
    assert w1.json()["trace_point"]["weight"] == recorded["trace_point"]["weight"]


def test_whatif_zero_patients_is_current_state(client):
    sid = create_trial(client)["session_id"]
    current = client.get(f"/trials/{sid}").json()
    w = client.get(f"/trials/{sid}/whatif", params={"dose": 4.0, "dlts": 0, "patients": 0}).json()
    assert w["hypothetical"] is False
    assert w["summary"] == current["summary"]


def test_whatif_validation(client):
    sid = create_trial(client)["session_id"]
    resp = client.get(f"/trials/{sid}/whatif", params={"dose": 4.0, "dlts": 5})
    assert resp.status_code == 422
    resp = client.get(f"/trials/{sid}/whatif", params={"dose": 3.3, "dlts": 0})
    assert resp.status_code == 422


def test_session_file_is_valid_json_after_mutation(client, tmp_path):
    sid = create_trial(client)["session_id"]
    client.post(f"/trials/{sid}/cohorts", json={"dose": 4.0, "outcomes": [0, 0, 0]})
    path = tmp_path / "sessions" / f"{sid}.json"
    doc = json.loads(path.read_text())
    assert doc["session"]["history"][0]["outcomes"] == [0, 0, 0]
    assert doc["audit"][-1]["action"] == "record_cohort"
