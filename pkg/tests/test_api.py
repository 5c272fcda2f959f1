import pytest
from fastapi.testclient import TestClient

from app import __version__
from app.main import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as test_client:
        yield test_client


def thin_damping():
    return {
        "name": "api_thin_damping",
        "operation": "verify",
        "parameters": {"target": "sup-lemma", "lambda": 10.0, "sigma": 0.5, "delta": 0.1},
    }


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy", "version": __version__}


def test_presets(client):
    response = client.get("/scenarios/presets")
    assert response.status_code == 200
    assert "simulate_damped" in response.json()


def test_run_preset_and_read_it_back(client):
    response = client.post("/scenarios/run", json={"preset": "verify_supercritical"})
    assert response.status_code == 200
    summary = response.json()
    assert summary["exit_code"] == 0
    run_id = summary["run_id"]

    run = client.get(f"/runs/{run_id}").json()
    assert run["operation"] == "verify"
    assert run["config_hash"] == summary["config_hash"]

    audits = client.get(f"/runs/{run_id}/audits").json()
    assert "displacement-bound" in {a["bound_name"] for a in audits}
    assert client.get(f"/runs/{run_id}/audits", params={"failures_only": True}).json() == []


def test_failed_hypothesis_is_a_conflict(client):
    response = client.post("/scenarios/run", json={"scenario": thin_damping()})
    assert response.status_code == 409
    detail = response.json()["detail"]
    assert detail["failures"] == ["supercritical-threshold"]

    failures = client.get(f"/runs/{detail['run_id']}/audits", params={"failures_only": True}).json()
    assert [a["bound_name"] for a in failures] == ["supercritical-threshold"]


def test_invalid_scenario_is_unprocessable(client):
    record = thin_damping()
    record["parameters"]["sigma"] = -1.0
    response = client.post("/scenarios/run", json={"scenario": record})
    assert response.status_code == 422
    assert "parameters.sigma" in response.json()["detail"]


@pytest.mark.parametrize("body", [{}, {"preset": "simulate_damped", "scenario": {"name": "x"}}])
def test_request_needs_exactly_one_source(client, body):
    assert client.post("/scenarios/run", json=body).status_code == 422


def test_unknown_preset_is_unprocessable(client):
    assert client.post("/scenarios/run", json={"preset": "nope"}).status_code == 422


def test_unknown_run(client):
    assert client.get("/runs/does-not-exist").status_code == 404
    assert client.get("/runs/does-not-exist/audits").status_code == 404


def test_recent_runs_and_summary(client):
    client.post("/scenarios/run", json={"preset": "verify_supercritical"})
    runs = client.get("/runs/", params={"operation": "verify", "limit": 5}).json()
    assert runs and all(r["operation"] == "verify" for r in runs)

    summary = {s["bound_name"]: s for s in client.get("/runs/audits/summary").json()}
    assert summary["displacement-bound"]["runs"] >= 1
