"""Experiment pipelines: transport of partial sums between centers, the
end-to-end center-independence run, and the factorial feasibility probe.

Every number in a trace is kept as a log magnitude and also emitted in
linear scale when it is below ``1e300``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .builder import (
    BuildPlan,
    BuildResult,
    CompactSetSample,
    TargetFunction,
    build_universal_polynomial,
    descriptor_from_json,
    discretize,
    synthesize_gap_series,
)
from .exceptions import PlanError
from .gap_engine import (
    GapSelection,
    IndexSequence,
    IndexStream,
    select_gaps_geometric,
    select_gaps_polynomial,
)
from .poly_core import LogMag, TaylorPoly, circle_norm, evaluate, partial_sum, partial_sum_at, recenter

__all__ = [
    "ExperimentConfig",
    "TraceRow",
    "ConvergenceTrace",
    "Trend",
    "run_transport_experiment",
    "CenterIndependenceResult",
    "run_center_independence",
    "FeasibilityReport",
    "probe_factorial",
    "default_l_grid",
    "selection_from_config",
    "DISCLAIMER",
    "FACTORIAL_HEADER",
    "CSV_HEADER",
]

CSV_HEADER = ["k", "lambda_p", "lambda_q", "D1_log", "D1", "D2_log", "D2", "D3_log", "D3"]
LINEAR_CAP = 1e300
TREND_SLACK = 1e-12

DISCLAIMER = (
    "Finite-stage empirical demonstration: a polynomial of finite degree is built and its "
    "partial sums are compared across centers on a fixed grid. This does not certify any "
    "statement about infinite series, and no finite experiment can distinguish the class "
    "defined with a fixed center from the class defined with every center."
)
FACTORIAL_HEADER = (
    "Empirical feasibility probe for lambda_n = n!: exhaustive search over a finite horizon. "
    "It shows where the selection conditions can or cannot be met; it proves nothing about "
    "the open question for infinite sequences."
)


def default_l_grid(rho_l: float, radii: int = 5, angles: int = 5) -> np.ndarray:
    """``radii x angles`` polar grid with largest modulus ``rho_l``."""
    r = rho_l * np.arange(1, radii + 1) / radii
    t = 2 * np.pi * np.arange(angles) / angles
    return (r[:, None] * np.exp(1j * t[None, :])).ravel()


def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


# --------------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything a transport or center-independence run needs.

    Either ``plan`` (a :class:`BuildPlan`) or ``synth`` (keyword arguments for
    :func:`synthesize_gap_series` plus a ``sigma`` rule) describes ``f``.
    ``K`` and ``g`` default to the plan's single compact set and target.
    """

    r_omega: float = 1.0
    plan: BuildPlan | None = None
    synth: dict | None = None
    selector: dict = field(default_factory=lambda: {"kind": "auto"})
    L: np.ndarray = field(default=None, repr=False)
    rho_l: float | None = None
    radii: tuple = (1.0, 2.0, 4.0)
    zeta0: complex = 0j
    K: CompactSetSample | None = None
    g: TargetFunction | None = None
    burn_in: int = 0
    tolerance: float | None = None
    outputs: dict = field(default_factory=dict)
    base_dir: Path | None = None

    def __post_init__(self):
        if self.plan is not None:
            object.__setattr__(self, "r_omega", self.plan.r_omega)
        rho_l = 0.3 * self.r_omega if self.rho_l is None else float(self.rho_l)
        object.__setattr__(self, "rho_l", rho_l)
        if self.L is None:
            object.__setattr__(self, "L", default_l_grid(rho_l))
        else:
            object.__setattr__(self, "L", np.asarray(self.L, dtype=complex).ravel())
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "zeta0", complex(self.zeta0))
        if self.plan is not None and self.K is None:
            object.__setattr__(self, "K", self.plan.stages[0].K)
        if self.plan is not None and self.g is None:
            object.__setattr__(self, "g", self.plan.stages[0].g)
        if self.tolerance is None and self.plan is not None and self.plan.tolerance is not None:
            object.__setattr__(self, "tolerance", self.plan.tolerance)
        self.validate()

    def validate(self) -> None:
        if not self.rho_l < self.r_omega:
            raise PlanError(f"rho_L={self.rho_l} must be below R_omega={self.r_omega}")
        if self.L.size == 0:
            raise PlanError("the L grid is empty")
        if np.abs(self.L).max() > self.rho_l * (1 + 1e-12):
            raise PlanError("L grid leaves the disk |zeta| <= rho_L")
        if abs(self.zeta0) >= self.r_omega:
            raise PlanError("zeta0 must lie in the domain")
        if not self.radii or min(self.radii) <= 0:
            raise PlanError("evaluation radii must be positive")
        if self.burn_in < 0:
            raise PlanError("burn_in must be nonnegative")

    @classmethod
    def from_json(cls, doc: dict, base_dir=None) -> "ExperimentConfig":
        base = Path(base_dir) if base_dir is not None else None
        try:
            plan = None
            if "plan" in doc:
                plan = BuildPlan.from_json(doc["plan"])
            elif "plan_path" in doc:
                path = Path(doc["plan_path"])
                if base is not None and not path.is_absolute():
                    path = base / path
                plan = BuildPlan.load(path)
            r_omega = float(doc.get("r_omega", plan.r_omega if plan else 1.0))
            K = None
            if doc.get("K") is not None:
                K = discretize(descriptor_from_json(doc["K"]), float(doc.get("K_density", 64)), r_omega)
            g = TargetFunction.from_json(doc["g"]) if doc.get("g") is not None else None
            L = None
            if isinstance(doc.get("L"), list):
                L = [_cplx(v) for v in doc["L"]]
            elif isinstance(doc.get("L"), dict):
                grid = doc["L"]
                rho = float(grid.get("rho_L", doc.get("rho_L", 0.3 * r_omega)))
                L = default_l_grid(rho, int(grid.get("radii", 5)), int(grid.get("angles", 5)))
            return cls(
                r_omega=r_omega,
                plan=plan,
                synth=doc.get("synth"),
                selector=doc.get("selector", {"kind": "auto"}),
                L=L,
                rho_l=doc.get("rho_L"),
                radii=tuple(doc.get("radii", (1.0, 2.0, 4.0))),
                zeta0=_cplx(doc.get("zeta0", 0)),
                K=K,
                g=g,
                burn_in=int(doc.get("burn_in", 0)),
                tolerance=None if doc.get("tolerance") is None else float(doc["tolerance"]),
                outputs=dict(doc.get("outputs", {})),
                base_dir=base,
            )
        except (KeyError, TypeError) as exc:
            raise PlanError(f"malformed experiment config: {exc!r}") from exc
        except ValueError as exc:
            if isinstance(exc, PlanError):
                raise
            raise PlanError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_json(doc, base_dir=path.parent)


def selection_from_config(entry: dict, lam: IndexSequence | None = None, stream: IndexStream | None = None) -> GapSelection:
    """Build a :class:`GapSelection` from a config ``selector`` entry.

    ``explicit`` takes ``lambda_pairs`` (coefficient space) and ``k0``;
    ``polynomial`` and ``geometric`` run the selectors; ``auto`` picks by the
    kind of ``lam``.
    """
    kind = entry.get("kind", "auto")
    if kind == "explicit":
        pairs = tuple((int(p), int(q)) for p, q in entry["lambda_pairs"])
        idx = tuple((int(p), int(q)) for p, q in entry.get("pairs", entry["lambda_pairs"]))
        return GapSelection(int(entry.get("k0", 1)), idx, pairs, source="explicit")
    if lam is None:
        if kind == "polynomial":
            lam = IndexSequence.polynomial_floor(entry["poly"], int(entry.get("horizon", 10**15)))
        elif kind == "geometric":
            lam = IndexSequence.geometric(
                int(entry.get("first", 1)), entry["ratio"], entry["theta"], entry["M"], int(entry.get("horizon", 400))
            )
        else:
            raise PlanError(f"selector kind {kind!r} needs a lambda sequence")
    if stream is None:
        stream = IndexStream.parse(str(entry.get("nk", "identity")))
    count = entry.get("count")
    if kind == "auto":
        kind = {"polynomial_floor": "polynomial", "geometric": "geometric"}.get(lam.kind)
        if kind is None:
            raise PlanError(f"no automatic selector for lambda of kind {lam.kind!r}; give explicit pairs")
    if kind == "polynomial":
        return select_gaps_polynomial(lam, stream, count)
    if kind == "geometric":
        return select_gaps_geometric(lam, stream, count)
    raise PlanError(f"unknown selector kind {kind!r}")


def _sigma_rule(rule):
    if rule == "zero":
        return lambda m: 0.0
    if rule == "inverse":
        return lambda m: 1.0 / m
    if isinstance(rule, (int, float)):
        return lambda m: float(rule)
    if isinstance(rule, list):
        return [float(v) for v in rule]
    raise PlanError(f"unknown sigma rule {rule!r}")


def synthesize_from_config(entry: dict, sel: GapSelection) -> TaylorPoly:
    return synthesize_gap_series(
        sel,
        _sigma_rule(entry.get("sigma", "zero")),
        off_window=entry.get("off_window", "unit"),
        degree=entry.get("degree"),
    )


# --------------------------------------------------------------------------------
# Traces


def _split(v: LogMag | None) -> tuple:
    if v is None:
        return None, None
    lin = v.linear
    return v.value, (lin if lin < LINEAR_CAP else None)


@dataclass(frozen=True)
class TraceRow:
    k: int
    lambda_p: int
    lambda_q: int
    D1: LogMag
    D2: LogMag | None
    D3: LogMag | None

    def csv_cells(self) -> list:
        cells = [self.k, self.lambda_p, self.lambda_q]
        for v in (self.D1, self.D2, self.D3):
            lg, lin = _split(v)
            cells.append("" if lg is None else repr(lg))
            cells.append("" if lin is None else repr(lin))
        return cells


@dataclass(frozen=True)
class Trend:
    """Nonincreasing check of one trace column from ``burn_in`` onward."""

    burn_in: int
    nonincreasing: bool
    observed_burn_in: int
    final_log: float | None

    def to_json(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "nonincreasing_after_burn_in": self.nonincreasing,
            "observed_burn_in": self.observed_burn_in,
            "final_log": self.final_log,
        }


def _steps_ok(vals: list) -> list[bool]:
    out = []
    for a, b in zip(vals, vals[1:]):
        la, lb = a.linear, b.linear
        if la < LINEAR_CAP and lb < LINEAR_CAP:
            out.append(lb <= la + TREND_SLACK)
        else:
            out.append(b.value <= a.value + TREND_SLACK * max(1.0, abs(a.value)))
    return out


def column_trend(vals: list, burn_in: int) -> Trend | None:
    if not vals or any(v is None for v in vals):
        return None
    steps = _steps_ok(vals)
    observed = len(steps)
    while observed > 0 and steps[observed - 1]:
        observed -= 1
    ok = all(steps[burn_in:])
    return Trend(burn_in, ok, observed, vals[-1].value)


@dataclass(frozen=True)
class ConvergenceTrace:
    rows: tuple
    burn_in: int = 0

    @property
    def trends(self) -> dict:
        return {
            name: column_trend([getattr(r, name) for r in self.rows], self.burn_in)
            for name in ("D1", "D2", "D3")
        }

    def column(self, name: str) -> list[float]:
        """Linear values of one column (``inf`` where not representable)."""
        return [getattr(r, name).linear for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_cells())
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "rows": len(self.rows),
            "trends": {k: (None if v is None else v.to_json()) for k, v in self.trends.items()},
        }


def run_transport_experiment(f: TaylorPoly, sel: GapSelection, config: ExperimentConfig) -> ConvergenceTrace:
    """Per selected pair k:

    * ``D1``: largest sampled norm of ``S_q - S_p`` (center ``zeta0``) over the radii;
    * ``D2``: largest ``|S_p(f, zeta) - S_p(f, zeta0)|`` over the L grid and K;
    * ``D3``: largest ``|S_p(f, zeta) - g|`` over the L grid and K (needs ``g``).
    """
    if not sel.lambda_pairs:
        raise ValueError("the selection has no pairs")
    top = sel.lambda_pairs[-1][1]
    if f.degree < top:
        raise ValueError(f"degree {f.degree} of f is below lambda_q = {top} of the last pair")
    config.validate()
    base = f if f.center == config.zeta0 else recenter(f, config.zeta0)
    zk = None if config.K is None else config.K.nodes
    gk = None if (zk is None or config.g is None) else config.g(zk)
    rows = []
    for k, (lp, lq) in zip(sel.ks, sel.lambda_pairs):
        window = np.zeros(lq + 1, dtype=complex)
        window[lp + 1 :] = base.coeffs[lp + 1 : lq + 1]
        diff = TaylorPoly(base.center, window)
        d1 = max((circle_norm(diff, r) for r in config.radii), key=lambda c: c.sampled.value).sampled
        d2 = d3 = None
        if zk is not None:
            ref = evaluate(partial_sum(base, lp), zk)
            worst2 = worst3 = 0.0
            for zeta in config.L:
                vals = evaluate(partial_sum_at(f, lp, zeta), zk)
                worst2 = max(worst2, float(np.abs(vals - ref).max()))
                if gk is not None:
                    worst3 = max(worst3, float(np.abs(vals - gk).max()))
            d2 = LogMag.of(worst2)
            d3 = LogMag.of(worst3) if gk is not None else None
        rows.append(TraceRow(k, lp, lq, d1, d2, d3))
    return ConvergenceTrace(tuple(rows), config.burn_in)


# --------------------------------------------------------------------------------
# End to end


@dataclass(frozen=True)
class CenterIndependenceResult:
    build: BuildResult
    selection: GapSelection
    trace: ConvergenceTrace
    verdict: str
    reasons: tuple
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def summary(self) -> dict:
        d3 = self.trace.rows[-1].D3 if self.trace.rows else None
        return {
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "tolerance": self.tolerance,
            "D3_final": None if d3 is None else d3.linear,
            "failed_stages": self.build.failed_stages,
            "selection": self.selection.to_json(),
            "trace": self.trace.summary(),
            "disclaimer": DISCLAIMER,
        }


def run_center_independence(config: ExperimentConfig) -> CenterIndependenceResult:
    """Build ``f`` from the plan, select gaps among the stage indices, run the
    transport experiment and issue a PASS/FAIL verdict.

    PASS needs every stage within its requested residual, the final ``D3`` at
    most the tolerance, and ``D2`` nonincreasing after the burn-in.
    """
    plan = config.plan
    if plan is None:
        raise PlanError("center-independence runs need a build plan")
    targets = {json.dumps(s.g.to_json(), sort_keys=True) for s in plan.stages}
    if len(targets) != 1:
        raise PlanError("all stages must share one target g")
    tol = config.tolerance
    if tol is None:
        raise PlanError("a tolerance is required for the verdict")
    build = build_universal_polynomial(plan)
    stream = IndexStream(values=tuple(s.n for s in plan.stages))
    sel = selection_from_config(config.selector, plan.lam, stream)
    trace = run_transport_experiment(build.f, sel, config)
    reasons = []
    if build.failed_stages:
        reasons.append(f"stages {build.failed_stages} missed their residual or E targets")
    last = trace.rows[-1].D3
    if last is None or not last.linear <= tol:
        reasons.append(f"D3_final={None if last is None else last.linear!r} exceeds tolerance {tol}")
    d2 = trace.trends["D2"]
    if d2 is None or not d2.nonincreasing:
        reasons.append(f"D2 is not nonincreasing after burn-in {config.burn_in}")
    verdict = "FAIL" if reasons else "PASS"
    return CenterIndependenceResult(build, sel, trace, verdict, tuple(reasons), tol)


# --------------------------------------------------------------------------------
# Factorial probe


@dataclass(frozen=True)
class FeasibilityReport:
    stream: str
    horizon: int
    rows: tuple
    first_infeasible_k: int | None
    candidates: tuple = ()
    header: str = FACTORIAL_HEADER

    def to_json(self) -> dict:
        return {
            "header": self.header,
            "stream": self.stream,
            "horizon": self.horizon,
            "first_infeasible_k": self.first_infeasible_k,
            "rows": list(self.rows),
            "candidates": list(self.candidates),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def _fact_ratio(p: int, q: int):
    """``q!/p!`` exactly as an int together with its natural log."""
    exact = math.prod(range(p + 1, q + 1))
    return exact, math.log(exact) if exact < 2**1000 else math.lgamma(q + 1) - math.lgamma(p + 1)


def probe_factorial(stream: IndexStream, horizon: int, enumerate_limit: int = 12) -> FeasibilityReport:
    """Exhaustive search for pairs under ``lambda_n = n!`` up to ``horizon``.

    Stage ``k`` may use ``q = n_j`` with ``j >= k`` (so the ``q``'s can form a
    subsequence) and any ``1 <= p < q``.  Since ``q!/p!`` grows with ``q`` and
    falls with ``p``, the minimum is attained at ``q = n_k``, ``p = n_k - 1``;
    the full candidate list is enumerated for horizons up to
    ``enumerate_limit`` and serves as the brute-force record.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be positive")
    qs = []
    j = 1
    while True:
        if stream.length is not None and j > stream.length:
            break
        n = stream(j)
        if n > horizon:
            break
        qs.append(n)
        j += 1
    if not any(q >= 2 for q in qs):
        raise ValueError(f"horizon {horizon} is too small to place any pair for n_k = {stream.describe()}")
    rows = []
    first_bad = None
    for k in range(1, len(qs) + 1):
        usable = [q for q in qs[k - 1 :] if q >= 2]
        if not usable:
            row = {"k": k, "q": None, "p": None, "min_ratio": None, "log_min_ratio": None, "admissible": False}
        else:
            q = usable[0]
            exact, lg = _fact_ratio(q - 1, q)
            row = {"k": k, "q": q, "p": q - 1, "min_ratio": exact, "log_min_ratio": lg, "admissible": exact <= k}
        rows.append(row)
        if not row["admissible"] and first_bad is None:
            first_bad = k
    cands = []
    if horizon <= enumerate_limit:
        for k in range(1, len(qs) + 1):
            for q in qs[k - 1 :]:
                for p in range(1, q):
                    exact, _ = _fact_ratio(p, q)
                    cands.append({"k": k, "p": p, "q": q, "ratio": exact, "admissible": exact <= k})
    return FeasibilityReport(stream.describe(), horizon, tuple(rows), first_bad, tuple(cands))
