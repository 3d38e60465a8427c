import csv
import json

import pytest

from ostrogap.cli import main, reference_plan_path
from ostrogap.gap_engine import IndexSequence, IndexStream, select_gaps_polynomial
from ostrogap.poly_core import TaylorPoly


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_select_gaps_matches_selector(tmp_path):
    out, js = tmp_path / "sel.csv", tmp_path / "sel.json"
    code = main(["select-gaps", "--kind", "polynomial", "--poly", "1,0,0", "--nk", "identity",
                 "--count", "20", "--out", str(out), "--json", str(js)])
    assert code == 0
    ref = select_gaps_polynomial(IndexSequence.polynomial_floor([1, 0, 0]), IndexStream(), 20)
    assert out.read_text() == ref.to_csv()
    assert len(_rows(out)) == 20
    assert json.loads(js.read_text())["lambda_pairs"] == [list(p) for p in ref.lambda_pairs]


def test_check_conditions_round_trip(tmp_path):
    js = tmp_path / "sel.json"
    args = ["--kind", "geometric", "--ratio", "2", "--theta", "1.9", "--M", "2.1", "--horizon", "300"]
    assert main(["select-gaps", *args, "--count", "10", "--out", str(tmp_path / "s.csv"), "--json", str(js)]) == 0
    report = tmp_path / "rep.json"
    assert main(["check-conditions", *args, "--selection", str(js), "--witness", "--out", str(report)]) == 0
    assert json.loads(report.read_text())["ok"] is True
    doc = json.loads(js.read_text())
    doc["pairs"][1], doc["pairs"][2] = doc["pairs"][2], doc["pairs"][1]
    doc["lambda_pairs"][1], doc["lambda_pairs"][2] = doc["lambda_pairs"][2], doc["lambda_pairs"][1]
    js.write_text(json.dumps(doc))
    assert main(["check-conditions", *args, "--selection", str(js), "--out", str(report)]) == 1


def test_missing_config_is_a_config_error(tmp_path, capsys):
    assert main(["verify-transport", "--config", str(tmp_path / "nope.json")]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert main(["select-gaps", "--kind", "polynomial", "--count", "3"]) == 2


def test_bad_plan_is_a_config_error(tmp_path):
    bad = tmp_path / "plan.json"
    bad.write_text(json.dumps({"r_omega": 1, "lambda": {"kind": "polynomial_floor", "coeffs": [1, 0, 0]},
                               "stages": [{"n": 3, "K": {"type": "segment", "a": [0, 0], "b": [2, 0]},
                                           "g": 1, "eps": 1e-3}]}))
    assert main(["build", "--plan", str(bad)]) == 2


def test_rank_deficiency_is_a_numerical_error(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"r_omega": 1, "lambda": {"kind": "explicit", "values": [40]}, "control_nodes": 4,
                                "stages": [{"n": 1, "K": {"type": "segment", "a": [2, 0], "b": [2.5, 0]},
                                            "density": 8, "g": 1, "eps": 1e-3}]}))
    assert main(["build", "--plan", str(plan)]) == 3


def test_zero_window_transport(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "selector": {"kind": "polynomial", "poly": [1, 0, 0], "count": 6},
        "synth": {"sigma": "zero", "off_window": "unit"},
    }))
    out = tmp_path / "trace.csv"
    assert main(["verify-transport", "--config", str(cfg), "--out", str(out), "--strict"]) == 0
    rows = _rows(out)
    assert len(rows) == 6 and all(float(r["D1"]) == 0.0 for r in rows)
    assert all(r["D2"] == "" for r in rows)


def test_build_and_transport_from_file(tmp_path):
    fpath, diag = tmp_path / "f.json", tmp_path / "d.jsonl"
    assert main(["build", "--plan", str(reference_plan_path("g1")), "--out", str(fpath),
                 "--diagnostics", str(diag)]) == 0
    f = TaylorPoly.loads(fpath.read_text())
    assert f.degree == 529
    recs = [json.loads(line) for line in diag.read_text().splitlines()]
    assert [r["status"] for r in recs] == ["ok"] * 5
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"K": {"type": "segment", "a": [2, 0], "b": [3, 0]}, "g": 1,
                               "selector": {"kind": "explicit", "k0": 2, "lambda_pairs": [[121, 144], [169, 256]]}}))
    out = tmp_path / "t.csv"
    assert main(["verify-transport", "--config", str(cfg), "--poly", str(fpath), "--out", str(out)]) == 0
    assert float(_rows(out)[-1]["D3"]) <= 5e-3


@pytest.mark.parametrize("ref", ["g1", "gz"])
def test_center_independence_reference(tmp_path, ref, capsys):
    out, diag, summ = tmp_path / "t.csv", tmp_path / "d.jsonl", tmp_path / "s.json"
    code = main(["verify-center-independence", "--reference", ref, "--out", str(out),
                 "--diagnostics", str(diag), "--summary", str(summ)])
    assert code == 0
    assert "PASS" in capsys.readouterr().err
    assert json.loads(summ.read_text())["verdict"] == "PASS"
    first = out.read_bytes()
    assert main(["verify-center-independence", "--reference", ref, "--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_center_independence_fail_exit(tmp_path):
    doc = json.loads(reference_plan_path("g1").read_text())
    doc["defaults"]["eps"] = 1e-9
    doc["stages"] = doc["stages"][:3]
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"plan": doc}))
    assert main(["verify-center-independence", "--config", str(cfg)]) == 1


def test_probe_factorial_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["probe-factorial", "--nk", "2k", "--horizon", "12", "--out", str(a)]) == 0
    assert main(["probe-factorial", "--nk", "2k", "--horizon", "12", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["first_infeasible_k"] == 1
    assert main(["probe-factorial", "--nk", "2k", "--horizon", "1"]) == 2


def test_synthesize(tmp_path):
    out = tmp_path / "f.json"
    assert main(["synthesize", "--windows", "2:5,6:12", "--sigma", "zero", "--off-window", "zero",
                 "--degree", "15", "--out", str(out)]) == 0
    f = TaylorPoly.loads(out.read_text())
    assert f.degree == 15 and not f.coeffs.any()
    assert main(["synthesize", "--windows", "2:5,6:12", "--sigma", "0.1,0.5"]) == 2
