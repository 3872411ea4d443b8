"""HTTP surface: request/response schemas and status wiring."""
import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from starlette.testclient import TestClient

from certlang.service import app
from certlang.corpus import entry
from tests.conftest import toy_relu_net


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    data = client.get("/health").json()
    assert data["status"] == "ok"
    assert "solver" in data


def test_check_ok(client):
    r = client.post("/check", json={"source": entry("deeppoly").source()})
    assert r.json() == {"ok": True, "diagnostics": []}


def test_check_reports_position(client):
    r = client.post("/check", json={
        "source": "Def shape as (Real l){true};\nFunc f(Neuron n) = n[nope];",
        "filename": "bad.cf"})
    data = r.json()
    assert not data["ok"]
    d = data["diagnostics"][0]
    assert (d["filename"], d["line"], d["rule"]) == ("bad.cf", 2, "T-shape")


def test_run_toy(client):
    r = client.post("/run", json={"source": entry("deeppoly").source(),
                                  "network": toy_relu_net()})
    data = r.json()
    assert data["ok"]
    assert data["shapes"]["n4"]["l"] == "0"
    assert data["shapes"]["n4"]["u"] == "2"
    assert data["shapes"]["n4"]["U"] == "1 + 1/2*n3"


def test_run_bad_network(client):
    net = toy_relu_net()
    net["neurons"][2]["inputs"] = ["ghost", "x2"]
    r = client.post("/run", json={"source": entry("deeppoly").source(),
                                  "network": net})
    data = r.json()
    assert not data["ok"] and "network" in data["error"]


def test_verify_endpoint_single_op(client):
    r = client.post("/verify", json={"source": entry("reluval").source(),
                                     "ops": ["Add"], "n_prev": 2})
    data = r.json()
    assert data["ok"] and data["exit_code"] == 0
    assert data["report"]["summary"] == {"ReluVal/Add": "verified"}


def test_verify_rejects_bad_bounds(client):
    r = client.post("/verify", json={"source": entry("reluval").source(),
                                     "n_prev": 0})
    data = r.json()
    assert not data["ok"] and data["exit_code"] == 1


def test_fuzz_endpoint(client):
    r = client.post("/fuzz", json={"source": entry("reluval").source(),
                                   "nets": 2, "points": 5, "max_neurons": 8})
    data = r.json()
    assert data["ok"]
    assert data["nets"] == 2
    assert data["violations"] == []
