"""Finite-stage universal Taylor polynomials built from least-squares blocks.

The domain is the open disk ``|z| < R_omega``.  Compact sets outside it are
finite unions of segments and arcs (span below ``2 pi``), so their complement
is connected by construction.  Stage ``j`` adds a block supported on the
exponents ``(lambda_{n_{j-1}}, lambda_{n_j}]``; blocks never touch lower
exponents, so earlier partial sums are frozen bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .exceptions import PlanError, RankDeficiencyError
from .gap_engine import GapSelection, IndexSequence
from .poly_core import TaylorPoly, evaluate

__all__ = [
    "Segment",
    "Arc",
    "CompactSetSample",
    "discretize",
    "descriptor_from_json",
    "TargetFunction",
    "LSResult",
    "ls_approximate",
    "Stage",
    "BuildPlan",
    "StageDiagnostics",
    "BuildResult",
    "build_universal_polynomial",
    "synthesize_gap_series",
    "MIN_DENSITY",
]

MIN_DENSITY = 8
_TINY = 1e-290
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------------------
# Compact sets


def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


@dataclass(frozen=True)
class Segment:
    a: complex
    b: complex

    @property
    def length(self) -> float:
        return abs(complex(self.b) - complex(self.a))

    def points(self, density: float) -> np.ndarray:
        count = max(1, math.ceil(self.length * density - 1e-9))
        t = np.arange(count + 1) / count
        return complex(self.a) + t * (complex(self.b) - complex(self.a))

    def min_modulus(self) -> float:
        a, b = complex(self.a), complex(self.b)
        d = b - a
        if d == 0:
            return abs(a)
        t = min(1.0, max(0.0, -(a.conjugate() * d).real / abs(d) ** 2))
        return abs(a + t * d)

    def to_json(self) -> dict:
        return {"type": "segment", "a": [self.a.real, self.a.imag], "b": [self.b.real, self.b.imag]}


@dataclass(frozen=True)
class Arc:
    """``center + radius * exp(i t)`` for ``start <= t <= start + span``."""

    center: complex
    radius: float
    start: float
    span: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("arc radius must be positive")
        if not 0 < self.span < 2 * math.pi:
            raise ValueError("arc span must lie in (0, 2 pi) so the complement stays connected")

    @property
    def length(self) -> float:
        return self.radius * self.span

    def points(self, density: float) -> np.ndarray:
        count = max(1, math.ceil(self.length * density - 1e-9))
        t = self.start + self.span * np.arange(count + 1) / count
        return complex(self.center) + self.radius * np.exp(1j * t)

    def min_modulus(self) -> float:
        c = complex(self.center)
        cands = [self.start, self.start + self.span]
        if c != 0:
            # the point of the full circle closest to the origin
            t = math.atan2(-c.imag, -c.real)
            rel = (t - self.start) % (2 * math.pi)
            if rel <= self.span:
                cands.append(t)
        return min(abs(c + self.radius * complex(math.cos(t), math.sin(t))) for t in cands)

    def to_json(self) -> dict:
        c = complex(self.center)
        return {"type": "arc", "center": [c.real, c.imag], "radius": self.radius, "start": self.start, "span": self.span}


Descriptor = Union[Segment, Arc, tuple]


def _parts(desc) -> tuple:
    if isinstance(desc, (Segment, Arc)):
        return (desc,)
    parts = tuple(desc)
    if not parts or not all(isinstance(p, (Segment, Arc)) for p in parts):
        raise ValueError("a union must list at least one segment or arc")
    return parts


def descriptor_from_json(doc) -> Descriptor:
    if isinstance(doc, list):
        return tuple(descriptor_from_json(d) for d in doc)
    kind = doc["type"]
    if kind == "segment":
        return Segment(_cplx(doc["a"]), _cplx(doc["b"]))
    if kind == "arc":
        return Arc(_cplx(doc.get("center", 0)), float(doc["radius"]), float(doc.get("start", 0.0)), float(doc["span"]))
    if kind == "union":
        return tuple(descriptor_from_json(d) for d in doc["parts"])
    raise ValueError(f"unknown compact set type {kind!r}")


def _descriptor_json(desc):
    parts = _parts(desc)
    if len(parts) == 1 and not isinstance(desc, tuple):
        return parts[0].to_json()
    return {"type": "union", "parts": [p.to_json() for p in parts]}


@dataclass(frozen=True, eq=False)
class CompactSetSample:
    descriptor: Descriptor
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    density: float = MIN_DENSITY

    @property
    def spacing(self) -> float:
        return 1.0 / self.density

    def min_modulus(self) -> float:
        return min(p.min_modulus() for p in _parts(self.descriptor))

    def to_json(self) -> dict:
        return {"set": _descriptor_json(self.descriptor), "density": self.density}


def discretize(descriptor: Descriptor, density: float, r_omega: float | None = None) -> CompactSetSample:
    """Equispaced, endpoint-inclusive nodes along every part; unit weights.

    With ``r_omega`` given, parts touching the closed disk ``|z| <= r_omega``
    are rejected.
    """
    if density < MIN_DENSITY:
        raise ValueError(f"density must be at least {MIN_DENSITY} nodes per unit length")
    parts = _parts(descriptor)
    if r_omega is not None:
        for part in parts:
            if part.min_modulus() <= r_omega:
                raise ValueError(f"{part} meets the closed disk |z| <= {r_omega}")
    nodes = np.concatenate([p.points(density) for p in parts])
    nodes.flags.writeable = False
    weights = np.ones(nodes.size)
    weights.flags.writeable = False
    return CompactSetSample(descriptor, nodes, weights, float(density))


def _sets_disjoint(a: CompactSetSample, b: CompactSetSample) -> bool:
    # conservative: nodes must stay farther apart than either sampling step
    gap = np.abs(a.nodes[:, None] - b.nodes[None, :]).min()
    return gap > max(a.spacing, b.spacing)


# --------------------------------------------------------------------------------
# Targets

_ENTIRE_RULES = {
    "exp": lambda n: 1.0 / math.factorial(n),
    "cos": lambda n: 0.0 if n % 2 else (-1) ** (n // 2) / math.factorial(n),
    "sin": lambda n: 0.0 if n % 2 == 0 else (-1) ** (n // 2) / math.factorial(n),
    "cosh": lambda n: 0.0 if n % 2 else 1.0 / math.factorial(n),
    "sinh": lambda n: 0.0 if n % 2 == 0 else 1.0 / math.factorial(n),
}


@dataclass(frozen=True)
class TargetFunction:
    """A function holomorphic near the compact sets it is sampled on.

    ``rational`` is ``numerator(z) / prod(z - pole)``; ``entire`` is the
    truncated series ``sum_{n <= order} c_n (scale z)**n`` of a named rule.
    """

    kind: str
    poly: TaylorPoly | None = None
    poles: tuple = ()
    rule: str = ""
    order: int = 0
    scale: complex = 1.0

    @classmethod
    def polynomial(cls, coeffs, center=0) -> "TargetFunction":
        return cls("polynomial", poly=TaylorPoly(center, coeffs))

    @classmethod
    def constant(cls, c) -> "TargetFunction":
        return cls.polynomial([c])

    @classmethod
    def rational(cls, numerator, poles) -> "TargetFunction":
        poles = tuple(complex(p) for p in poles)
        if not poles:
            raise ValueError("a rational target needs at least one pole")
        return cls("rational", poly=TaylorPoly(0, numerator), poles=poles)

    @classmethod
    def entire(cls, rule: str, order: int, scale=1.0) -> "TargetFunction":
        if rule not in _ENTIRE_RULES:
            raise ValueError(f"unknown entire rule {rule!r}; choose from {sorted(_ENTIRE_RULES)}")
        if order < 0:
            raise ValueError("order must be nonnegative")
        coeffs = [_ENTIRE_RULES[rule](n) * complex(scale) ** n for n in range(order + 1)]
        return cls("entire", poly=TaylorPoly(0, coeffs), rule=rule, order=int(order), scale=complex(scale))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = evaluate(self.poly, z)
        for p in self.poles:
            out = out / (z - p)
        return out

    def check_poles(self, nodes: np.ndarray, floor: float = 0.1) -> None:
        for p in self.poles:
            if nodes.size and np.abs(nodes - p).min() < floor:
                raise ValueError(f"pole {p} lies within {floor} of a sample node")

    def to_json(self) -> dict:
        if self.kind == "entire":
            s = self.scale
            return {"kind": "entire", "rule": self.rule, "order": self.order, "scale": [s.real, s.imag]}
        doc = {"kind": self.kind, "coeffs": [[c.real, c.imag] for c in self.poly.coeffs.tolist()]}
        if self.kind == "polynomial":
            doc["center"] = [self.poly.center.real, self.poly.center.imag]
        else:
            doc["poles"] = [[p.real, p.imag] for p in self.poles]
        return doc

    @classmethod
    def from_json(cls, doc) -> "TargetFunction":
        if isinstance(doc, (int, float)):
            return cls.constant(doc)
        kind = doc["kind"]
        if kind == "polynomial":
            return cls.polynomial([_cplx(c) for c in doc["coeffs"]], _cplx(doc.get("center", 0)))
        if kind == "rational":
            return cls.rational([_cplx(c) for c in doc["coeffs"]], [_cplx(p) for p in doc["poles"]])
        if kind == "entire":
            return cls.entire(doc["rule"], int(doc["order"]), _cplx(doc.get("scale", 1.0)))
        raise ValueError(f"unknown target kind {kind!r}")


# --------------------------------------------------------------------------------
# Block least squares


@dataclass(frozen=True)
class LSResult:
    """Block coefficients for exponents ``m..d`` and fit diagnostics."""

    coeffs: np.ndarray
    m: int
    d: int
    residual: float
    residual_basis: float
    weighted_sse: float

    def as_poly(self) -> TaylorPoly:
        c = np.zeros(self.d + 1, dtype=complex)
        c[self.m :] = self.coeffs
        return TaylorPoly(0, c)


def _block_values(coeffs: np.ndarray, m: int, z: np.ndarray) -> np.ndarray:
    acc = np.full(z.shape, coeffs[-1], dtype=complex)
    for a in coeffs[-2::-1]:
        acc = acc * z + a
    return acc * z**m


def _monomial_readout(H, c, nrm0, m, d, zmax) -> np.ndarray:
    # Evaluate the fitted block on the unit circle of the scaled variable by the
    # Arnoldi recurrence, then read coefficients off with an FFT.  Expanding the
    # basis polynomials in monomials instead would cancel catastrophically.
    width = d - m + 1
    size = 1 << max(d, 1).bit_length()
    y = np.exp(2j * np.pi * np.arange(size) / size)
    phi = y**m / nrm0
    vals = c[0] * phi
    basis = [phi]
    for j in range(width - 1):
        nxt = y * basis[j]
        for i in range(j + 1):
            nxt = nxt - H[i, j] * basis[i]
        nxt = nxt / H[j + 1, j]
        basis.append(nxt)
        vals = vals + c[j + 1] * nxt
    scaled = np.fft.fft(vals)[m : d + 1] / size
    expo = np.arange(m, d + 1)
    with np.errstate(divide="ignore", under="ignore"):
        mag = np.abs(scaled)
        return np.where(mag == 0, 0.0, np.exp(np.log(mag) - expo * math.log(zmax))) * np.exp(1j * np.angle(scaled))


def ls_approximate(
    nodes,
    targets,
    m: int,
    d: int,
    weights=None,
    constraint_nodes=None,
    mu: float = 1.0,
    constraint_targets=None,
    rank_tol: float = 1e-12,
) -> LSResult:
    """Weighted least squares over polynomials supported on ``z**m .. z**d``.

    Minimizes ``sum w_i |h(z_i) - t_i|**2`` plus ``mu`` times the squared
    misfit on ``constraint_nodes`` (target zero unless ``constraint_targets``
    is given).  The basis is built by Arnoldi on the scaled nodes, so the
    monomial Vandermonde matrix is never formed.
    """
    if not 0 <= m <= d:
        raise ValueError("need 0 <= m <= d")
    z_t = np.asarray(nodes, dtype=complex).ravel()
    t = np.asarray(targets, dtype=complex).ravel()
    if z_t.size != t.size or z_t.size == 0:
        raise ValueError("nodes and targets must be nonempty and of equal length")
    w_t = np.ones(z_t.size) if weights is None else np.asarray(weights, dtype=float).ravel()
    if np.any(w_t <= 0):
        raise ValueError("target weights must be positive")
    z_c = np.zeros(0, dtype=complex) if constraint_nodes is None else np.asarray(constraint_nodes, dtype=complex).ravel()
    t_c = np.zeros(z_c.size, dtype=complex) if constraint_targets is None else np.asarray(constraint_targets, dtype=complex).ravel()
    mu_c = np.broadcast_to(np.asarray(mu, dtype=float), z_c.shape)
    if np.any(mu_c < 0):
        raise ValueError("constraint weight must be nonnegative")
    z = np.concatenate([z_t, z_c])
    rhs = np.concatenate([t, t_c])
    sw = np.sqrt(np.concatenate([w_t, mu_c]))
    width = d - m + 1
    if z.size < width:
        raise RankDeficiencyError(
            f"{z.size} nodes cannot determine {width} coefficients; lower the degree budget or add nodes"
        )

    zmax = float(np.abs(z).max())
    if zmax == 0:
        zmax = 1.0
    x = z / zmax
    with np.errstate(divide="ignore", under="ignore"):
        lx = np.where(x == 0, -np.inf, np.log(np.abs(x)))
        v = sw * np.where(x == 0, 1.0 if m == 0 else 0.0, np.exp(m * lx) * np.exp(1j * m * np.angle(x)))
    v[np.abs(v) < _TINY * max(1.0, float(np.abs(v).max()))] = 0
    Q = np.zeros((z.size, width), dtype=complex, order="F")
    H = np.zeros((width, width), dtype=complex)
    nrm0 = np.linalg.norm(v)
    if nrm0 == 0:
        raise RankDeficiencyError("x**m vanishes on every weighted node; add nodes away from the origin")
    Q[:, 0] = v / nrm0
    for j in range(width - 1):
        w = x * Q[:, j]
        # subnormal entries carry no information and slow every later step
        w[np.abs(w) < _TINY] = 0
        before = np.linalg.norm(w)
        h = np.zeros(j + 1, dtype=complex)
        for _ in range(2):
            g = (w.conj() @ Q[:, : j + 1]).conj()
            w = w - Q[:, : j + 1] @ g
            h += g
        nrm = np.linalg.norm(w)
        if not nrm > rank_tol * before:
            raise RankDeficiencyError(
                f"basis degenerates at exponent {m + j + 1} (relative norm {nrm / before if before else 0:.2e}); "
                "lower the degree budget or use fewer constraints"
            )
        H[: j + 1, j] = h
        H[j + 1, j] = nrm
        Q[:, j + 1] = w / nrm
    b = sw * rhs
    c = (b.conj() @ Q).conj()
    fitted = (Q @ c)[: z_t.size] / sw[: z_t.size]
    residual_basis = float(np.abs(fitted - t).max())
    coeffs = _monomial_readout(H, c, nrm0, m, d, zmax)
    coeffs.flags.writeable = False
    direct = _block_values(coeffs, m, z)
    residual = float(np.abs(direct[: z_t.size] - t).max())
    sse = float(np.sum(sw**2 * np.abs(direct - rhs) ** 2))
    return LSResult(coeffs, m, d, residual, residual_basis, sse)


# --------------------------------------------------------------------------------
# Plans


@dataclass(frozen=True)
class Stage:
    n: int
    K: CompactSetSample
    g: TargetFunction
    eps: float
    E: CompactSetSample | None = None
    delta: float | None = None


@dataclass(frozen=True)
class BuildPlan:
    """Recipe for a finite-stage universal polynomial on ``|z| < r_omega``.

    ``mu`` is the total control weight relative to the total target weight
    of a stage (default 10); it is spread evenly over the control nodes.
    ``e_weight`` is the starting relative weight of ``E`` sets (default
    ``mu``); a small value turns ``E`` into a soft bound rather than a hard
    zero constraint.
    """

    r_omega: float
    lam: IndexSequence
    stages: tuple
    mu: float = 10.0
    control_nodes: int | None = None
    max_rescale: int = 8
    tolerance: float | None = None
    e_weight: float | None = None

    def rho(self, j: int) -> float:
        """Control radius of stage ``j`` (1-based)."""
        return self.r_omega * (1.0 - 2.0**-j)

    def lambdas(self) -> list[int]:
        return [self.lam.value(s.n) for s in self.stages]

    def control_circle(self, j: int) -> np.ndarray:
        lam = self.lam.value(self.stages[j - 1].n)
        count = self.control_nodes or 4 * lam + 64
        return self.rho(j) * np.exp(2j * np.pi * np.arange(count) / count)

    def validate(self) -> None:
        if not self.r_omega > 0:
            raise PlanError("r_omega must be positive")
        if not self.stages:
            raise PlanError("a plan needs at least one stage")
        if not self.mu > 0:
            raise PlanError("mu must be positive")
        if self.e_weight is not None and not self.e_weight > 0:
            raise PlanError("e_weight must be positive")
        ns = [s.n for s in self.stages]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise PlanError(f"stage indices must increase strictly, got {ns}")
        try:
            lams = self.lambdas()
        except (IndexError, ValueError) as exc:
            raise PlanError(f"stage index outside the sequence: {exc}") from exc
        prev = -1
        for j, lam in enumerate(lams, start=1):
            if lam <= prev:
                raise PlanError(f"stage {j} has empty block: lambda={lam} does not exceed {prev}")
            prev = lam
        for j, s in enumerate(self.stages, start=1):
            if not s.eps > 0:
                raise PlanError(f"stage {j}: eps must be positive")
            if not self.rho(j) < self.r_omega:
                raise PlanError(f"stage {j}: control radius not inside the domain")
            if np.abs(s.K.nodes).min() <= self.r_omega:
                raise PlanError(f"stage {j}: K has nodes in the closed domain")
            try:
                s.g.check_poles(s.K.nodes)
            except ValueError as exc:
                raise PlanError(f"stage {j}: {exc}") from exc
            if s.E is not None:
                if np.abs(s.E.nodes).min() <= self.r_omega:
                    raise PlanError(f"stage {j}: E has nodes in the closed domain")
                if s.delta is None or not s.delta > 0:
                    raise PlanError(f"stage {j}: E needs a positive delta")
        for j, s in enumerate(self.stages, start=1):
            if s.E is None:
                continue
            for i, t in enumerate(self.stages, start=1):
                if not _sets_disjoint(s.E, t.K):
                    raise PlanError(f"E of stage {j} meets K of stage {i}")

    # -- JSON ----------------------------------------------------------------------

    @classmethod
    def from_json(cls, doc: dict) -> "BuildPlan":
        try:
            r_omega = float(doc["r_omega"])
            lam = IndexSequence.from_json(doc["lambda"])
            defaults = doc.get("defaults", {})
            stages = []
            for sd in doc["stages"]:
                sd = {**defaults, **sd}
                dens = float(sd.get("density", 64))
                K = discretize(descriptor_from_json(sd["K"]), dens, r_omega)
                E = None
                if sd.get("E") is not None:
                    E = discretize(descriptor_from_json(sd["E"]), float(sd.get("E_density", dens)), r_omega)
                stages.append(
                    Stage(
                        int(sd["n"]),
                        K,
                        TargetFunction.from_json(sd["g"]),
                        float(sd["eps"]),
                        E,
                        None if sd.get("delta") is None else float(sd["delta"]),
                    )
                )
            plan = cls(
                r_omega,
                lam,
                tuple(stages),
                float(doc.get("mu", 10.0)),
                doc.get("control_nodes"),
                int(doc.get("max_rescale", 8)),
                None if doc.get("tolerance") is None else float(doc["tolerance"]),
                None if doc.get("e_weight") is None else float(doc["e_weight"]),
            )
        except (KeyError, TypeError) as exc:
            raise PlanError(f"malformed plan: {exc!r}") from exc
        except ValueError as exc:
            raise PlanError(str(exc)) from exc
        plan.validate()
        return plan

    @classmethod
    def load(cls, path) -> "BuildPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        stages = []
        for s in self.stages:
            sd = {"n": s.n, "K": s.K.to_json()["set"], "density": s.K.density, "g": s.g.to_json(), "eps": s.eps}
            if s.E is not None:
                sd.update(E=s.E.to_json()["set"], E_density=s.E.density, delta=s.delta)
            stages.append(sd)
        doc = {
            "r_omega": self.r_omega,
            "lambda": self.lam.describe(),
            "mu": self.mu,
            "max_rescale": self.max_rescale,
            "stages": stages,
        }
        if self.control_nodes is not None:
            doc["control_nodes"] = self.control_nodes
        if self.tolerance is not None:
            doc["tolerance"] = self.tolerance
        if self.e_weight is not None:
            doc["e_weight"] = self.e_weight
        return doc


# --------------------------------------------------------------------------------
# Build


@dataclass(frozen=True)
class StageDiagnostics:
    stage: int
    n: int
    lam: int
    residual: float
    omega_norm: float
    ek_norm: float | None
    requested_eps: float
    status: str
    rescales: int = 0

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "n": self.n,
            "lambda": self.lam,
            "residual": self.residual,
            "omega_norm": self.omega_norm,
            "ek_norm": self.ek_norm,
            "requested_eps": self.requested_eps,
            "status": self.status,
            "rescales": self.rescales,
        }


@dataclass(frozen=True)
class BuildResult:
    f: TaylorPoly
    diagnostics: tuple
    stage_lambdas: tuple

    @property
    def ok(self) -> bool:
        return all(d.status == "ok" for d in self.diagnostics)

    @property
    def failed_stages(self) -> list[int]:
        return [d.stage for d in self.diagnostics if d.status != "ok"]

    def stage_poly(self, j: int) -> TaylorPoly:
        """``f_j``, the partial sum of ``f`` at the ``j``-th stage index."""
        return TaylorPoly(0, self.f.coeffs[: self.stage_lambdas[j - 1] + 1])

    def jsonl(self) -> str:
        return "".join(json.dumps(d.to_json(), sort_keys=True) + "\n" for d in self.diagnostics)


def build_universal_polynomial(plan: BuildPlan) -> BuildResult:
    """Assemble ``f = sum_j h_j`` stage by stage.

    ``h_j`` fits ``g_j - f_{j-1}`` on ``K_j``, is pushed toward zero on the
    control circle of radius ``rho_j`` and, when ``E_j`` is given, makes
    ``f_j`` small there; the ``E_j`` weight grows tenfold until ``delta_j`` is
    met or ``max_rescale`` is reached.  Failed stages are reported, not fatal.
    """
    plan.validate()
    lams = plan.lambdas()
    coeffs = np.zeros(lams[-1] + 1, dtype=complex)
    diags = []
    prev = -1
    for j, (stage, lam) in enumerate(zip(plan.stages, lams), start=1):
        f_prev = TaylorPoly(0, coeffs[: max(prev, 0) + 1]) if prev >= 0 else None
        zk = stage.K.nodes
        base_k = evaluate(f_prev, zk) if f_prev is not None else np.zeros(zk.size, dtype=complex)
        target = stage.g(zk) - base_k
        circle = plan.control_circle(j)
        total = float(stage.K.weights.sum())
        mu_node = plan.mu * total / circle.size
        c_nodes, c_targets, c_weights = [circle], [np.zeros(circle.size, dtype=complex)], [np.full(circle.size, mu_node)]
        if stage.E is not None:
            ze = stage.E.nodes
            base_e = evaluate(f_prev, ze) if f_prev is not None else np.zeros(ze.size, dtype=complex)
            c_nodes.append(ze)
            c_targets.append(-base_e)
            e_rel = plan.mu if plan.e_weight is None else plan.e_weight
            c_weights.append(np.full(ze.size, e_rel * total / ze.size))
        rescales = 0
        while True:
            res = ls_approximate(
                zk,
                target,
                prev + 1,
                lam,
                weights=stage.K.weights,
                constraint_nodes=np.concatenate(c_nodes),
                mu=np.concatenate(c_weights),
                constraint_targets=np.concatenate(c_targets),
            )
            block = res.coeffs
            ek = None
            if stage.E is not None:
                ek = float(np.abs(base_e + _block_values(block, prev + 1, stage.E.nodes)).max())
                if ek > stage.delta and rescales < plan.max_rescale:
                    c_weights[-1] = c_weights[-1] * 10.0
                    rescales += 1
                    continue
            break
        coeffs[prev + 1 : lam + 1] = block
        f_j = TaylorPoly(0, coeffs[: lam + 1])
        residual = float(np.abs(evaluate(f_j, zk) - stage.g(zk)).max())
        omega = float(np.abs(evaluate(f_j, circle)).max())
        ok = residual <= stage.eps and (ek is None or ek <= stage.delta)
        diags.append(
            StageDiagnostics(j, stage.n, lam, residual, omega, ek, stage.eps, "ok" if ok else "failed", rescales)
        )
        prev = lam
    return BuildResult(TaylorPoly(0, coeffs), tuple(diags), tuple(lams))


# --------------------------------------------------------------------------------
# Synthetic gap series


def synthesize_gap_series(
    windows,
    sigma: Callable[[int], float] | Sequence[float],
    off_window: str | Callable[[int], complex] = "unit",
    degree: int | None = None,
    labels: Sequence[int] | None = None,
) -> TaylorPoly:
    """Dense series with ``|a_nu|**(1/nu) = sigma_m`` on each window ``(p_m, q_m]``.

    ``windows`` is a list of coefficient-index pairs or a :class:`GapSelection`
    (its lambda pairs and k labels are used).  ``sigma`` maps a window label
    to its magnitude and must be nonincreasing.  Off-window coefficients are
    ``"unit"`` (modulus one with deterministic phases), ``"zero"``, or given
    by a callable of ``nu``.
    """
    if isinstance(windows, GapSelection):
        labels = list(windows.ks) if labels is None else labels
        windows = windows.lambda_pairs
    windows = [(int(p), int(q)) for p, q in windows]
    labels = list(range(1, len(windows) + 1)) if labels is None else list(labels)
    if callable(sigma):
        sig = [float(sigma(m)) for m in labels]
    else:
        sig = [float(s) for s in sigma]
        if len(sig) != len(windows):
            raise ValueError("one sigma per window is required")
    if any(s < 0 for s in sig) or any(b > a for a, b in zip(sig, sig[1:])):
        raise ValueError("sigma must be nonnegative and nonincreasing")
    top = max((q for _, q in windows), default=0)
    if degree is None:
        degree = top
    if top > degree:
        raise ValueError(f"window end {top} exceeds the degree cap {degree}")
    nu = np.arange(degree + 1)
    if off_window == "unit":
        coeffs = np.exp(2j * np.pi * GOLDEN * nu)
    elif off_window == "zero":
        coeffs = np.zeros(degree + 1, dtype=complex)
    elif callable(off_window):
        coeffs = np.array([complex(off_window(int(v))) for v in nu])
    else:
        raise ValueError(f"unknown off-window rule {off_window!r}")
    for (p, q), s in zip(windows, sig):
        idx = np.arange(p + 1, q + 1)
        with np.errstate(under="ignore"):
            coeffs[idx] = float(s) ** idx if s > 0 else 0.0
    return TaylorPoly(0, coeffs)
