import json
from pathlib import Path

import httpx
import pytest
from fastapi.testclient import TestClient

from qnetcode import cli
from qnetcode.service import app

SAMPLES = Path(__file__).resolve().parents[1] / "samples"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_kc_json(capsys):
    code, out, _ = run(capsys, "kc", "swap")
    doc = json.loads(out)
    assert code == 0 and doc["kc"] == 3 and doc["op_rank"] == 4


def test_kc_from_file(capsys):
    code, out, _ = run(capsys, "kc", str(SAMPLES / "random_unitary.json"))
    assert code == 0 and json.loads(out)["kc"] == 3


def test_verify_refusal_exits_one(capsys):
    code, out, _ = run(capsys, "verify", "ladder:2", "swap")
    doc = json.loads(out)
    assert code == 1 and doc["verdict"] == "refused"


def test_verify_ladder_passes(capsys):
    code, out, _ = run(capsys, "verify", "ladder:3", "swap", "--n-random", "2")
    assert code == 0 and json.loads(out)["verdict"] == "implemented"


@pytest.mark.parametrize("argv", [
    ["verify", "torus", "swap"],
    ["kc", "no_such_gate"],
    ["kc", "/nonexistent/u.json"],
    ["trace", "0.1", "0", "0", "9"],
    ["scan-fourqubit", "--families", "1,x"],
    ["frobnicate"],
    [],
])
def test_input_errors_exit_two(capsys, argv):
    assert cli.main(argv) == 2


def test_json_output_is_byte_identical(capsys, tmp_path):
    outs = []
    for _ in range(2):
        cli.main(["verify", "butterfly", "cnot", "--seed", "7", "--n-random", "3"])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.main(["convert", str(SAMPLES / "parallel_segment.json"), "--out", str(a)])
    cli.main(["convert", str(SAMPLES / "parallel_segment.json"), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_text_format(capsys):
    code, out, _ = run(capsys, "trace", "0.3", "0.2", "0.1", "0", "--format", "text")
    assert code == 0
    lines = dict(line.split(" = ", 1) for line in out.splitlines())
    assert lines["passed"] == "true"


def test_out_and_dot(capsys, tmp_path):
    out, dot = tmp_path / "r.json", tmp_path / "c.dot"
    code = cli.main(["convert", str(SAMPLES / "three_wire_circuit.json"), "--out", str(out), "--dot", str(dot)])
    assert code == 0 and capsys.readouterr().out == ""
    assert json.loads(out.read_text())["passed"]
    assert dot.read_text().startswith("digraph")


def test_convert_forbidden_segment_fails(capsys):
    code, out, _ = run(capsys, "convert", str(SAMPLES / "forbidden_segment.json"), "--no-compile")
    assert code == 1 and not json.loads(out)["passed"]


def test_scan_grid_file(capsys, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"families": [7], "magnitudes": [1], "phases": [0]}))
    code, out, _ = run(capsys, "scan-fourqubit", str(grid))
    assert code == 0 and json.loads(out)["forbidden_any_order"] == 0


def test_simulate_sample(capsys):
    code, out, _ = run(capsys, "simulate", str(SAMPLES / "butterfly_cnot_protocol.json"), "--target", "cnot")
    doc = json.loads(out)
    assert code == 0 and doc["min_fidelity"] >= 1 - 1e-9


@pytest.fixture
def via_testclient(monkeypatch):
    client = TestClient(app)

    def post(url, json=None, timeout=None):
        return client.post(httpx.URL(url).path, json=json)

    monkeypatch.setattr(httpx, "post", post)


def test_server_mode_matches_local(capsys, via_testclient):
    cli.main(["kc", "iswap"])
    local = capsys.readouterr().out
    cli.main(["kc", "iswap", "--server", "http://qnet.test"])
    assert capsys.readouterr().out == local


def test_server_mode_input_error(via_testclient):
    assert cli.main(["verify", "ring", "swap", "--server", "http://qnet.test"]) == 2
