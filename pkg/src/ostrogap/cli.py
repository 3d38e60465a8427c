"""Command line entry point: ``ostrogap <subcommand> ...``.

Exit codes: 0 success or PASS, 1 verdict FAIL, 2 configuration error,
3 numerical error.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .builder import BuildPlan, build_universal_polynomial
from .exceptions import NumericalError, PlanError
from .gap_engine import (
    GapSelection,
    IndexSequence,
    IndexStream,
    check_gap_conditions,
    geometric_witness,
    polynomial_witness,
    select_gaps_geometric,
    select_gaps_polynomial,
)
from .harness import (
    DISCLAIMER,
    ExperimentConfig,
    probe_factorial,
    run_center_independence,
    run_transport_experiment,
    selection_from_config,
    synthesize_from_config,
)
from .poly_core import TaylorPoly

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
REFERENCE_PLANS = ("g1", "gz")


def reference_plan_path(name: str) -> Path:
    """Path of a shipped plan: ``g1`` and ``gz`` (reference), ``large_domain``."""
    stem = f"reference_plan_{name}" if name in REFERENCE_PLANS else name
    return Path(str(resources.files("ostrogap") / "data" / f"{stem}.json"))


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _floats(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_sequence_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["polynomial", "geometric"], required=True)
    p.add_argument("--poly", help="P coefficients, highest degree first, e.g. '1,0,0'")
    p.add_argument("--first", type=int, default=1, help="first term of a geometric sequence")
    p.add_argument("--ratio", help="growth factor of a geometric sequence, e.g. 2 or 5/2")
    p.add_argument("--theta", help="lower ratio band theta > 1")
    p.add_argument("--M", dest="ratio_max", help="upper ratio band M > theta")
    p.add_argument("--horizon", type=int, help="largest sequence index available")
    p.add_argument("--nk", default="identity", help="index stream: identity, 2k, 3k+1 or a list 1,4,9")


def _sequence(args) -> IndexSequence:
    if args.kind == "polynomial":
        if not args.poly:
            raise PlanError("--poly is required for polynomial sequences")
        return IndexSequence.polynomial_floor(_floats(args.poly), args.horizon or 10**15)
    if args.ratio is None or args.theta is None or args.ratio_max is None:
        raise PlanError("--ratio, --theta and --M are required for geometric sequences")
    return IndexSequence.geometric(args.first, args.ratio, args.theta, args.ratio_max, args.horizon or 400)


# --------------------------------------------------------------------------------
# Subcommands


def cmd_select_gaps(args) -> int:
    seq = _sequence(args)
    stream = IndexStream.parse(args.nk)
    select = select_gaps_polynomial if args.kind == "polynomial" else select_gaps_geometric
    sel = select(seq, stream, args.count)
    _write(args.out, sel.to_csv())
    if args.json:
        _write(args.json, json.dumps(sel.to_json(), sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_check_conditions(args) -> int:
    seq = _sequence(args)
    stream = IndexStream.parse(args.nk)
    with open(args.selection, encoding="utf-8") as fh:
        sel = GapSelection.from_json(json.load(fh))
    witness = None
    if args.witness:
        witness = polynomial_witness(seq, sel) if args.kind == "polynomial" else geometric_witness(seq)
    rep = check_gap_conditions(seq, stream, sel, witness)
    doc = {
        "ok": rep.ok,
        "cond1": rep.cond1,
        "cond2": rep.cond2,
        "cond3": rep.cond3,
        "cond4_le_k": rep.cond4_le_k,
        "witness_ok": rep.witness_ok,
        "witness_note": "finite-horizon witness check, not a limit certificate" if witness else None,
        "ratios": [str(r) for r in rep.ratios],
        "failures": rep.failures,
    }
    _write(args.out, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_build(args) -> int:
    plan = BuildPlan.load(args.plan)
    res = build_universal_polynomial(plan)
    _write(args.out, res.f.dumps())
    if args.diagnostics:
        _write(args.diagnostics, res.jsonl())
    if res.failed_stages:
        print(f"stages {res.failed_stages} missed their targets", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _transport_inputs(cfg: ExperimentConfig, poly_path):
    if poly_path:
        f = TaylorPoly.loads(Path(poly_path).read_text(encoding="utf-8"))
        return f, selection_from_config(cfg.selector, cfg.plan.lam if cfg.plan else None)
    if cfg.synth is not None:
        sel = selection_from_config(cfg.selector)
        return synthesize_from_config(cfg.synth, sel), sel
    if cfg.plan is not None:
        build = build_universal_polynomial(cfg.plan)
        stream = IndexStream(values=tuple(s.n for s in cfg.plan.stages))
        return build.f, selection_from_config(cfg.selector, cfg.plan.lam, stream)
    raise PlanError("the config needs a plan, a synth entry or --poly")


def cmd_verify_transport(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    f, sel = _transport_inputs(cfg, args.poly)
    trace = run_transport_experiment(f, sel, cfg)
    _write(args.out, trace.to_csv())
    if args.summary:
        _write(args.summary, json.dumps(trace.summary(), sort_keys=True, indent=2) + "\n")
    if args.strict and any(t is not None and not t.nonincreasing for t in trace.trends.values()):
        print("a trace column is not nonincreasing after the burn-in", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify_center_independence(args) -> int:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig(plan=BuildPlan.load(reference_plan_path(args.reference)))
    res = run_center_independence(cfg)
    if args.out:
        _write(args.out, res.trace.to_csv())
    if args.diagnostics:
        _write(args.diagnostics, res.build.jsonl())
    summary = json.dumps(res.summary(), sort_keys=True, indent=2) + "\n"
    if args.summary:
        _write(args.summary, summary)
    print(f"{res.verdict}: {DISCLAIMER}", file=sys.stderr)
    for r in res.reasons:
        print(f"  {r}", file=sys.stderr)
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_probe_factorial(args) -> int:
    rep = probe_factorial(IndexStream.parse(args.nk), args.horizon)
    _write(args.out, rep.dumps())
    return EXIT_OK


def cmd_synthesize(args) -> int:
    windows = []
    for part in _floats(args.windows):
        p, q = part.split(":")
        windows.append((int(p), int(q)))
    if args.sigma in ("zero", "inverse"):
        sigma = args.sigma
    else:
        sigma = [float(s) for s in _floats(args.sigma)]
    sel = GapSelection(args.k0, tuple(windows), tuple(windows), source="cli")
    f = synthesize_from_config({"sigma": sigma, "off_window": args.off_window, "degree": args.degree}, sel)
    _write(args.out, f.dumps())
    return EXIT_OK


# --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ostrogap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select-gaps", help="select (p_k, q_k) pairs and write them as CSV")
    _add_sequence_args(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--json", help="also write the selection as JSON")
    p.set_defaults(func=cmd_select_gaps)

    p = sub.add_parser("check-conditions", help="check a stored selection against the four conditions")
    _add_sequence_args(p)
    p.add_argument("--selection", required=True, help="selection JSON written by select-gaps --json")
    p.add_argument("--witness", action="store_true", help="also check the divergence witness")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_check_conditions)

    p = sub.add_parser("build", help="build a universal polynomial from a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--diagnostics", help="JSON-lines stage diagnostics")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("verify-transport", help="compute the D1/D2/D3 trace for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--poly", help="use this polynomial JSON instead of building or synthesizing")
    p.add_argument("--out", default="-")
    p.add_argument("--summary", help="trend summary JSON")
    p.add_argument("--strict", action="store_true", help="exit 1 when a column fails its trend check")
    p.set_defaults(func=cmd_verify_transport)

    p = sub.add_parser("verify-center-independence", help="build, select, transport and issue a verdict")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config")
    src.add_argument("--reference", choices=REFERENCE_PLANS, default="g1", help="shipped plan (default g1)")
    p.add_argument("--out", help="trace CSV")
    p.add_argument("--diagnostics", help="JSON-lines stage diagnostics")
    p.add_argument("--summary", help="verdict summary JSON")
    p.set_defaults(func=cmd_verify_center_independence)

    p = sub.add_parser("probe-factorial", help="finite-horizon feasibility probe for lambda_n = n!")
    p.add_argument("--nk", default="identity")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_probe_factorial)

    p = sub.add_parser("synthesize", help="write a series with prescribed gap windows")
    p.add_argument("--windows", required=True, help="coefficient windows p:q, comma separated")
    p.add_argument("--k0", type=int, default=1, help="label of the first window")
    p.add_argument("--sigma", default="zero", help="zero, inverse, or one value per window")
    p.add_argument("--off-window", choices=["unit", "zero"], default="unit")
    p.add_argument("--degree", type=int)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_synthesize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, IndexError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
