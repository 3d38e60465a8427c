import dataclasses
import json
import math

import numpy as np
import pytest

from ostrogap.builder import BuildPlan, Segment, discretize, synthesize_gap_series
from ostrogap.cli import reference_plan_path
from ostrogap.exceptions import PlanError
from ostrogap.gap_engine import GapSelection, IndexSequence, IndexStream, select_gaps_polynomial
from ostrogap.harness import (
    CSV_HEADER,
    ExperimentConfig,
    column_trend,
    default_l_grid,
    probe_factorial,
    run_center_independence,
    run_transport_experiment,
    selection_from_config,
)
from ostrogap.poly_core import LogMag, TaylorPoly, evaluate, partial_sum, recenter

SQUARE = IndexSequence.polynomial_floor([1, 0, 0])
K_SAMPLE = discretize(Segment(2, 3), 32, 1.0)


@pytest.fixture(scope="module")
def reference_run():
    cfg = ExperimentConfig(plan=BuildPlan.load(reference_plan_path("g1")))
    return cfg, run_center_independence(cfg)


def _gap_selection(count=6):
    return select_gaps_polynomial(SQUARE, IndexStream(), count)


# -- config --------------------------------------------------------------------


def test_default_grid():
    L = default_l_grid(0.3)
    assert L.size == 25
    assert np.abs(L).max() == pytest.approx(0.3)
    cfg = ExperimentConfig()
    assert cfg.L.size == 25 and cfg.rho_l == pytest.approx(0.3) and cfg.radii == (1.0, 2.0, 4.0)


def test_config_validation():
    with pytest.raises(PlanError):
        ExperimentConfig(rho_l=1.0)
    with pytest.raises(PlanError):
        ExperimentConfig(L=[0.5], rho_l=0.3)
    with pytest.raises(PlanError):
        ExperimentConfig(radii=(1.0, -2.0))
    with pytest.raises(PlanError):
        ExperimentConfig.from_json({"radii": "x", "K": {"type": "nope"}})


def test_config_from_json_resolves_relative_plan(tmp_path):
    plan = json.loads(reference_plan_path("g1").read_text())
    (tmp_path / "plan.json").write_text(json.dumps(plan))
    (tmp_path / "c.json").write_text(json.dumps({"plan_path": "plan.json", "L": {"radii": 2, "angles": 3}}))
    cfg = ExperimentConfig.load(tmp_path / "c.json")
    assert cfg.plan is not None and cfg.L.size == 6 and cfg.tolerance == 5e-3
    assert cfg.g is not None and cfg.K.nodes.size == 201


def test_selector_kinds():
    explicit = selection_from_config({"kind": "explicit", "k0": 2, "lambda_pairs": [[1, 2], [2, 4]]})
    assert explicit.lambda_pairs == ((1, 2), (2, 4)) and list(explicit.ks) == [2, 3]
    poly = selection_from_config({"kind": "polynomial", "poly": [1, 0, 0], "count": 5})
    assert poly.lambda_pairs == _gap_selection(5).lambda_pairs
    with pytest.raises(PlanError):
        selection_from_config({"kind": "auto"}, IndexSequence.factorial())


# -- transport -----------------------------------------------------------------


def test_low_degree_polynomial_has_no_transport_error():
    sel = _gap_selection(4)
    rng = np.random.default_rng(3)
    coeffs = np.zeros(sel.lambda_pairs[-1][1] + 1, dtype=complex)
    coeffs[:10] = rng.standard_normal(10) * 0.3
    f = TaylorPoly(0, coeffs)
    cfg = ExperimentConfig(K=K_SAMPLE)
    trace = run_transport_experiment(f, sel, cfg)
    assert all(r.D1.is_zero for r in trace.rows)
    assert max(trace.column("D2")) <= 1e-9
    assert trace.rows[0].D3 is None


def test_zero_windows_give_exact_zero_d1():
    sel = _gap_selection(6)
    f = synthesize_gap_series(sel, lambda m: 0.0)
    trace = run_transport_experiment(f, sel, ExperimentConfig())
    assert all(r.D1.value == -math.inf and r.D1.linear == 0.0 for r in trace.rows)
    assert trace.rows[0].D2 is None


def _geometric_bound(R, k, lp, lq):
    x = R / k
    if x == 1:
        return float(lq - lp)
    return (x ** (lp + 1) - x ** (lq + 1)) / (1 - x)


def test_inverse_windows_below_geometric_bound():
    sel = _gap_selection(6)
    f = synthesize_gap_series(sel, lambda m: 1.0 / m, off_window="zero")
    for R in (1.0, 2.0):
        trace = run_transport_experiment(f, sel, ExperimentConfig(radii=(R,)))
        for row in trace.rows:
            bound = _geometric_bound(R, row.k, row.lambda_p, row.lambda_q)
            assert row.D1.linear <= bound * (1 + 1e-12)


def test_degree_shortfall_rejected():
    sel = _gap_selection(3)
    with pytest.raises(ValueError):
        run_transport_experiment(TaylorPoly(0, [1.0] * 5), sel, ExperimentConfig())


def test_single_center_grid(reference_run):
    cfg, res = reference_run
    one = dataclasses.replace(cfg, L=[cfg.zeta0])
    trace = run_transport_experiment(res.build.f, res.selection, one)
    zk = cfg.K.nodes
    for row in trace.rows:
        assert row.D2.linear == 0.0
        err = np.abs(evaluate(partial_sum(res.build.f, row.lambda_p), zk) - cfg.g(zk)).max()
        assert row.D3.linear == pytest.approx(err, rel=1e-12)


def test_d2_agrees_with_recenter_once_path(reference_run):
    cfg, res = reference_run
    f, zk = res.build.f, cfg.K.nodes
    shifted = [recenter(f, z) for z in cfg.L]
    ref0 = {lp: evaluate(partial_sum(f, lp), zk) for lp, _ in res.selection.lambda_pairs}
    for row in res.trace.rows:
        other = max(float(np.abs(evaluate(partial_sum(s, row.lambda_p), zk) - ref0[row.lambda_p]).max()) for s in shifted)
        assert abs(other - row.D2.linear) <= 1e-9


def test_triangle_inequality_across_columns(reference_run):
    cfg, res = reference_run
    zk = cfg.K.nodes
    for row in res.trace.rows:
        base = np.abs(evaluate(partial_sum(res.build.f, row.lambda_p), zk) - cfg.g(zk)).max()
        assert row.D3.linear <= row.D2.linear + base + 1e-9


def test_reference_run_passes(reference_run):
    cfg, res = reference_run
    assert res.passed, res.reasons
    assert res.trace.rows[-1].D3.linear <= 5e-3
    summary = res.summary()
    assert summary["verdict"] == "PASS" and "does not certify" in summary["disclaimer"]
    assert res.selection.q_indices or all(q in (8, 12, 16, 20, 23) for _, q in res.selection.pairs)


def test_failed_stages_fail_the_verdict():
    doc = json.loads(reference_plan_path("g1").read_text())
    doc["defaults"]["eps"] = 1e-9
    doc["stages"] = doc["stages"][:4]
    res = run_center_independence(ExperimentConfig(plan=BuildPlan.from_json(doc)))
    assert res.verdict == "FAIL"
    assert res.build.failed_stages == [1, 2, 3, 4]
    assert any("[1, 2, 3, 4]" in r for r in res.reasons)


def test_mixed_targets_rejected():
    doc = json.loads(reference_plan_path("g1").read_text())
    doc["stages"][1]["g"] = {"kind": "polynomial", "coeffs": [0, 1]}
    with pytest.raises(PlanError):
        run_center_independence(ExperimentConfig(plan=BuildPlan.from_json(doc)))


def test_csv_layout_and_determinism(reference_run):
    cfg, res = reference_run
    text = res.trace.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 1 + len(res.selection.pairs)
    again = run_transport_experiment(res.build.f, res.selection, cfg).to_csv()
    assert again == text


def test_huge_values_only_in_log_column():
    sel = GapSelection(1, ((1, 2),), ((1, 2),))
    f = TaylorPoly(0, [0, 0, 1e200])
    trace = run_transport_experiment(f, sel, ExperimentConfig(radii=(1e60,)))
    cells = trace.to_csv().splitlines()[1].split(",")
    assert float(cells[3]) == pytest.approx(math.log(1e200) + 2 * math.log(1e60))
    assert cells[4] == ""


# -- trends --------------------------------------------------------------------


def test_column_trend():
    vals = [LogMag.of(v) for v in (1.0, 3.0, 2.0, 2.0 + 5e-13, 0.5)]
    t = column_trend(vals, 0)
    assert not t.nonincreasing and t.observed_burn_in == 1
    assert column_trend(vals, 1).nonincreasing
    assert column_trend([None], 0) is None
    big = [LogMag(900.0), LogMag(800.0)]
    assert column_trend(big, 0).nonincreasing


# -- factorial probe -----------------------------------------------------------


def _brute_min(stream, horizon, k):
    qs = []
    j = 1
    while (stream.length is None or j <= stream.length) and stream(j) <= horizon:
        qs.append(stream(j))
        j += 1
    best = None
    for q in qs[k - 1 :]:
        for p in range(1, q):
            r = math.factorial(q) // math.factorial(p)
            best = r if best is None else min(best, r)
    return best


@pytest.mark.parametrize("nk", ["identity", "2k", "3k+1", "1,4,5,9"])
@pytest.mark.parametrize("horizon", [3, 7, 12])
def test_probe_matches_brute_force(nk, horizon):
    stream = IndexStream.parse(nk)
    if _brute_min(stream, horizon, 1) is None:
        with pytest.raises(ValueError):
            probe_factorial(stream, horizon)
        return
    rep = probe_factorial(stream, horizon)
    for row in rep.rows:
        assert row["min_ratio"] == _brute_min(stream, horizon, row["k"])
        assert row["admissible"] == (row["min_ratio"] is not None and row["min_ratio"] <= row["k"])
        if row["min_ratio"] is not None:
            assert row["log_min_ratio"] == pytest.approx(math.log(row["min_ratio"]), abs=1e-12)
    by_k = {}
    for c in rep.candidates:
        by_k.setdefault(c["k"], []).append(c["ratio"])
    for row in rep.rows:
        if row["min_ratio"] is not None:
            assert min(by_k[row["k"]]) == row["min_ratio"]


def test_probe_identity_and_doubling():
    ident = probe_factorial(IndexStream(), 12)
    assert [r["min_ratio"] for r in ident.rows[1:]] == list(range(2, 13))
    assert all(r["admissible"] for r in ident.rows[1:])
    # k = 1 would need q!/p! <= 1 with p < q, which no pair achieves
    assert ident.first_infeasible_k == 1
    double = probe_factorial(IndexStream.parse("2k"), 12)
    assert double.first_infeasible_k == 1
    assert all(not r["admissible"] and r["min_ratio"] >= 2 * r["k"] for r in double.rows)


def test_probe_small_horizon_enumerates_everything():
    rep = probe_factorial(IndexStream(), 3)
    pairs = {(c["k"], c["p"], c["q"]) for c in rep.candidates}
    assert pairs == {(1, 1, 2), (1, 1, 3), (1, 2, 3), (2, 1, 2), (2, 1, 3), (2, 2, 3), (3, 1, 3), (3, 2, 3)}
    assert "proves nothing" in rep.to_json()["header"]
    with pytest.raises(ValueError):
        probe_factorial(IndexStream(), 1)


def test_probe_output_is_deterministic():
    a = probe_factorial(IndexStream.parse("2k"), 12).dumps()
    b = probe_factorial(IndexStream.parse("2k"), 12).dumps()
    assert a == b
    assert json.loads(a)["first_infeasible_k"] == 1
