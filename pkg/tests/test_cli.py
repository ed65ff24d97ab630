import csv
import io
import json
import math

import jsonschema
import pytest

from memcert import cli
from memcert.cli import ReportDocument, main, parse_range
from memcert.correlations import DataError

TSIRELSON = 2 * math.sqrt(2)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def certify_doc(capsys, *argv):
    code, out, err = run(capsys, "certify", *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture
def fixture_path(data_dir):
    return str(data_dir / "tiranov_energy_time.json")


@pytest.fixture
def schema(data_dir):
    return json.loads((data_dir / "report.schema.json").read_text())


def test_certify_fixture_scenario2(capsys, fixture_path, schema):
    doc = certify_doc(capsys, "--scenario", "2", "--counts-out", fixture_path, "--assume-a", "wfs",
                      "--assume-b-out", "wfs")
    rep = doc["report"]
    assert rep["fidelity_bound"] >= 0.8696 and rep["success_bound"] is None
    assert any("conditional detection unavailable" in w for w in rep["warnings"])
    assert rep["s_o"]["value"] == pytest.approx(2.64)
    assert len(doc["provenance"]["inputs"]["counts_out"]["sha256"]) == 64
    jsonschema.validate(doc, schema)


def test_certify_identity_scenario1(capsys, data_dir, schema):
    path = str(data_dir / "ideal_identity_memory.json")
    doc = certify_doc(capsys, "--scenario", "1", "--counts-in", path, "--counts-out", path)
    assert doc["report"]["fidelity_bound"] == pytest.approx(1.0, abs=1e-6)
    jsonschema.validate(doc, schema)


def test_certify_fixture_scenario1_and_3(capsys, fixture_path, schema):
    s1 = certify_doc(capsys, "--scenario", "1", "--counts-in", fixture_path, "--counts-out", fixture_path)
    assert s1["report"]["fidelity_bound"] == pytest.approx(0.864705, abs=1e-6)
    s3 = certify_doc(capsys, "--scenario", "3", "--counts-in", fixture_path, "--counts-out", fixture_path,
                     "--assume-b-in", "wfs", "--assume-b-out", "wfs")
    # post-selected data leaves the detection rates unknown, so the bounds become trivial
    assert s3["report"]["fidelity_bound"] == 0.0
    for doc in (s1, s3):
        jsonschema.validate(doc, schema)


def test_report_document_round_trip(capsys, fixture_path):
    code, out, _ = run(capsys, "certify", "--scenario", "1", "--counts-in", fixture_path, "--counts-out", fixture_path)
    doc = ReportDocument.from_json(json.loads(out))
    assert doc.dumps() == out.strip()


def test_certify_errors(capsys, tmp_path, fixture_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"phase": "output", "counts": {"0,0": {"0,x": 3}}}))
    code, _, err = run(capsys, "certify", "--scenario", "2", "--counts-out", str(bad))
    assert code == 2 and "'0,x'" in err
    code, _, err = run(capsys, "certify", "--scenario", "2", "--counts-out", str(tmp_path / "missing.json"))
    assert code == 2
    code, _, err = run(capsys, "certify", "--scenario", "1", "--counts-out", fixture_path)
    assert code == 2 and "--counts-in" in err
    broken = tmp_path / "broken.json"
    broken.write_text('{"phase": "output", "counts": ')
    assert run(capsys, "certify", "--scenario", "2", "--counts-out", str(broken))[0] == 2


def grid(capsys, *argv):
    code, out, err = run(capsys, "grid", *argv)
    assert code == 0, err
    return list(csv.DictReader(io.StringIO(out)))


def test_grid_single_point(capsys):
    rows = grid(capsys, "--s-i", "2.733", "--s-o", "2.64")
    assert len(rows) == 1
    assert float(rows[0]["bound"]) == pytest.approx(0.864705, abs=1e-6)
    assert rows[0]["bound"] == "0.864705"


def test_grid_corner_and_threshold(capsys):
    rows = grid(capsys, "--s-i", f"{TSIRELSON}", "--s-o", f"{TSIRELSON}")
    assert float(rows[0]["bound"]) == pytest.approx(1.0)
    from memcert.selftest import S_STAR
    rows = grid(capsys, "--s-i", "2.7", "--s-o", f"{S_STAR}")
    assert float(rows[0]["bound"]) == 0.0 and rows[0]["warning"]


def test_grid_order_and_header(capsys):
    code, out, _ = run(capsys, "grid", "--s-i", "2.2:2.8:3", "--s-o", "2.3:2.7:2")
    lines = out.splitlines()
    assert lines[0] == "s_i,s_o,f_i,f_o,bound,warning"
    pairs = [tuple(l.split(",")[:2]) for l in lines[1:]]
    assert pairs == [("2.200000", "2.300000"), ("2.200000", "2.700000"), ("2.500000", "2.300000"),
                     ("2.500000", "2.700000"), ("2.800000", "2.300000"), ("2.800000", "2.700000")]


def test_grid_other_scenarios(capsys, monkeypatch):
    rows = grid(capsys, "--s-i", "2.7", "--s-o", "2.6", "--scenario", "2", "--p-o", "0.4")
    assert float(rows[0]["bound"]) == pytest.approx(float(rows[0]["f_o"]), abs=1e-6)
    monkeypatch.setenv("MEMCERT_THREADS", "2")
    three = grid(capsys, "--s-i", "2.8", "--s-o", "2.7:2.8:2", "--scenario", "3")
    assert all(0 <= float(r["bound"]) <= float(r["f_o"]) + 1e-6 for r in three)


def test_grid_errors(capsys, monkeypatch):
    assert run(capsys, "grid", "--s-i", "2:3", "--s-o", "2.5")[0] == 2
    assert run(capsys, "grid", "--s-i", "2:3:0", "--s-o", "2.5")[0] == 2
    assert run(capsys, "grid", "--s-i", "5", "--s-o", "2.5")[0] == 2
    assert run(capsys, "grid", "--s-i", "2.5", "--s-o", "2.5", "--p-o", "2")[0] == 2
    monkeypatch.setenv("MEMCERT_THREADS", "zero")
    assert run(capsys, "grid", "--s-i", "2.5", "--s-o", "2.5")[0] == 2


def test_parse_range():
    assert list(parse_range("1:2:3", "x")) == [1.0, 1.5, 2.0]
    assert list(parse_range("2.5", "x")) == [2.5]
    with pytest.raises(DataError, match="--s-i"):
        parse_range("a:b:c", "--s-i")


def test_simulate_then_certify(capsys, tmp_path, data_dir):
    model = str(data_dir / "singlet_model.json")
    code, out, _ = run(capsys, "simulate", "--model", model, "--shots", "1000000", "--seed", "7")
    assert code == 0
    path = tmp_path / "out.json"
    path.write_text(out)
    doc = certify_doc(capsys, "--scenario", "2", "--counts-out", str(path))
    assert abs(doc["report"]["s_o"]["value"] - TSIRELSON) < 0.01


def test_simulate_deterministic(capsys, data_dir):
    model = str(data_dir / "singlet_model.json")
    first = run(capsys, "simulate", "--model", model, "--shots", "500", "--seed", "3", "--phase", "input")[1]
    second = run(capsys, "simulate", "--model", model, "--shots", "500", "--seed", "3", "--phase", "input")[1]
    assert first == second and json.loads(first)["phase"] == "input"


def test_simulate_errors(capsys, tmp_path, data_dir):
    model = str(data_dir / "singlet_model.json")
    assert run(capsys, "simulate", "--model", model, "--shots", "0")[0] == 2
    bad = tmp_path / "model.json"
    bad.write_text(json.dumps({"povms_a": []}))
    code, _, err = run(capsys, "simulate", "--model", str(bad), "--shots", "10")
    assert code == 2 and "source" in err


def test_end_to_end_deterministic(capsys, tmp_path, data_dir):
    model = str(data_dir / "singlet_model.json")
    reports = []
    for _ in range(2):
        out = run(capsys, "simulate", "--model", model, "--shots", "2000", "--seed", "11")[1]
        path = tmp_path / "c.json"
        path.write_text(out)
        reports.append(certify_doc(capsys, "--scenario", "2", "--counts-out", str(path))["report"])
    assert reports[0] == reports[1]


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert cli.__version__ in capsys.readouterr().out
