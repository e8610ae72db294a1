import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from qnetcode.service import app

SAMPLES = Path(__file__).resolve().parents[1] / "samples"
client = TestClient(app)


def _sample(name):
    return json.loads((SAMPLES / name).read_text())


def test_health():
    assert client.get("/health").json() == {"status": "ok"}


def test_kc_endpoint():
    r = client.post("/kc", json={"unitary": "cnot"})
    assert r.status_code == 200
    doc = r.json()
    assert doc["passed"] and doc["kc"] == 1 and doc["op_rank"] == 2


def test_verify_endpoint():
    doc = client.post("/verify", json={"network": "ladder:1", "unitary": "cz", "n_random": 2}).json()
    assert doc["verdict"] == "implemented" and doc["passed"]
    doc = client.post("/verify", json={"network": "ladder:2", "unitary": "swap"}).json()
    assert doc["verdict"] == "refused" and not doc["passed"]


def test_scan_endpoint():
    doc = client.post("/scan-fourqubit", json={"families": [7, 9]}).json()
    assert doc["passed"] and doc["forbidden_any_order"] == 0


def test_trace_endpoint():
    doc = client.post("/trace", json={"x": 0.3, "y": 0.2, "z": 0.1, "j": 1}).json()
    assert doc["passed"] and doc["max_error"] <= 1e-10


def test_convert_endpoint():
    doc = client.post("/convert", json={"circuit": _sample("parallel_segment.json"), "n_random": 1}).json()
    assert doc["passed"] and doc["bell_pairs"] == 5


def test_simulate_endpoint():
    doc = client.post("/simulate", json={"protocol": _sample("teleport_protocol.json"), "target_unitary": "identity"}).json()
    assert doc["passed"] and doc["valid"]


@pytest.mark.parametrize("path,body", [
    ("/kc", {"unitary": "nope"}),
    ("/kc", {"unitary": {"dims": [2, 2], "re": [1, 0, 0, 1], "im": [0, 0, 0, 0]}}),
    ("/verify", {"network": "ring:3", "unitary": "swap"}),
    ("/scan-fourqubit", {"families": [11]}),
    ("/convert", {"circuit": {"wires": 2}}),
    ("/simulate", {"protocol": {"name": "x"}}),
])
def test_bad_input_is_400(path, body):
    assert client.post(path, json=body).status_code == 400


def test_schema_violation_is_422():
    assert client.post("/trace", json={"x": 0.1, "y": 0, "z": 0, "j": 7}).status_code == 422
