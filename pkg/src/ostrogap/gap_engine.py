"""Index sequences, gap-pair selection and Ostrowski-gap diagnostics.

All comparisons that the selection conditions require are done in exact
integer / rational arithmetic (Python ints and ``Fraction``); square roots
are removed by squaring both sides.  Floats appear only in the bisection
that seeds ``P^{-1}`` and in the log-domain diagnostics.
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import InfeasibleSelectionError, NormalizationError, SequenceOverflowError
from .poly_core import TaylorPoly, coeff_sum_bound, log_root_magnitudes

__all__ = [
    "IndexSequence",
    "IndexStream",
    "GapSelection",
    "ConditionReport",
    "GapReport",
    "ChainReport",
    "materialize",
    "check_gap_conditions",
    "select_gaps_polynomial",
    "select_gaps_geometric",
    "polynomial_p",
    "polynomial_witness",
    "polynomial_sandwich",
    "geometric_witness",
    "geometric_sandwich",
    "detect_ostrowski_gaps",
    "verify_decay_chain",
    "floor_log",
]

LN2 = math.log(2.0)
LN3 = math.log(3.0)


def _exact(x) -> Fraction:
    # decimal literal semantics for floats: 1.9 means 19/10
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def floor_log(k: int, base: Fraction) -> int:
    """``floor(log k / log base)`` computed exactly for ``base > 1``."""
    base = _exact(base)
    if base <= 1:
        raise ValueError("base must exceed 1")
    j, power = 0, base
    while power <= k:
        j += 1
        power *= base
    return j


# --------------------------------------------------------------------------------
# Sequences


@dataclass(frozen=True)
class IndexSequence:
    """The positive-integer sequence ``lambda_n``, materialized on demand.

    Use the constructors :meth:`explicit`, :meth:`polynomial_floor`,
    :meth:`geometric` and :meth:`factorial`.  Polynomial coefficients are
    given highest degree first (``[1, 0, 0]`` is ``n**2``).
    """

    kind: str
    horizon: int
    values: tuple = ()
    poly: tuple = ()
    first: int = 1
    ratio: Fraction = Fraction(0)
    theta: Fraction = Fraction(0)
    ratio_max: Fraction = Fraction(0)
    first_index: int = 1

    @classmethod
    def explicit(cls, values: Sequence[int]) -> "IndexSequence":
        vals = tuple(int(v) for v in values)
        if not vals or min(vals) < 1:
            raise ValueError("explicit sequences need positive integers")
        return cls("explicit", len(vals), values=vals)

    @classmethod
    def polynomial_floor(cls, coeffs: Sequence, horizon: int = 10**15) -> "IndexSequence":
        poly = tuple(_exact(c) for c in coeffs)
        while poly and poly[0] == 0:
            poly = poly[1:]
        if len(poly) < 2 or poly[0] <= 0:
            raise ValueError("P must have degree >= 1 and positive leading coefficient so that P(n) -> +inf")
        seq = cls("polynomial_floor", int(horizon), poly=poly)
        object.__setattr__(seq, "first_index", seq._increasing_threshold())
        if seq.first_index > seq.horizon:
            raise ValueError("horizon ends before P becomes increasing and positive")
        return seq

    @classmethod
    def geometric(cls, first: int, ratio, theta, ratio_max, horizon: int = 400) -> "IndexSequence":
        """``lambda_n = floor(first * ratio**(n-1))`` with the band ``theta < ratio_n < ratio_max``."""
        theta, ratio_max, ratio = _exact(theta), _exact(ratio_max), _exact(ratio)
        if theta <= 1:
            raise ValueError("geometric sequences need theta > 1")
        if not theta < ratio_max:
            raise ValueError("need theta < M")
        if int(first) < 1:
            raise ValueError("first term must be a positive integer")
        seq = cls("geometric", int(horizon), first=int(first), ratio=ratio, theta=theta, ratio_max=ratio_max)
        prev = seq.value(1)
        for n in range(2, seq.horizon + 1):
            cur = seq.value(n)
            if not (theta * prev < cur < ratio_max * prev):
                raise ValueError(f"ratio lambda_{n}/lambda_{n - 1} = {cur}/{prev} leaves ({theta}, {ratio_max})")
            prev = cur
        return seq

    @classmethod
    def factorial(cls, horizon: int = 170) -> "IndexSequence":
        return cls("factorial", int(horizon))

    # -- polynomial helpers ------------------------------------------------------

    def P(self, n) -> Fraction:
        """Exact value of the polynomial at a rational point."""
        acc = Fraction(0)
        n = _exact(n)
        for c in self.poly:
            acc = acc * n + c
        return acc

    def P_float(self, x: float) -> float:
        acc = 0.0
        for c in self.poly:
            acc = acc * x + float(c)
        return acc

    def _increasing_threshold(self) -> int:
        deg = len(self.poly) - 1
        deriv = [float(c) * (deg - i) for i, c in enumerate(self.poly[:-1])]
        a = 1
        if len(deriv) > 1:
            roots = np.roots(deriv)
            real = [r.real for r in roots if abs(r.imag) <= 1e-9 * (1 + abs(r))]
            if real:
                a = max(1, math.floor(max(real)) + 1)
        # guard against root-finding error, then require lambda_a >= 1
        while self.P(a) <= self.P(a - 1) and a > 1:
            a += 1
        while self.P(a + 1) <= self.P(a) or math.floor(self.P(a)) < 1:
            a += 1
        return a

    # -- values ---------------------------------------------------------------------

    def value(self, n: int) -> int:
        if self.kind == "explicit":
            return self.values[n - 1]
        if self.kind == "polynomial_floor":
            return math.floor(self.P(n))
        if self.kind == "geometric":
            return math.floor(self.first * self.ratio ** (n - 1))
        if self.kind == "factorial":
            return math.factorial(n)
        raise ValueError(f"unknown sequence kind {self.kind!r}")

    def log_value(self, n: int) -> float:
        if self.kind == "factorial":
            return math.lgamma(n + 1)
        return math.log(self.value(n))

    def describe(self) -> dict:
        if self.kind == "explicit":
            return {"kind": "explicit", "values": list(self.values)}
        if self.kind == "polynomial_floor":
            return {"kind": "polynomial_floor", "coeffs": [str(c) for c in self.poly], "horizon": self.horizon}
        if self.kind == "geometric":
            return {
                "kind": "geometric",
                "first": self.first,
                "ratio": str(self.ratio),
                "theta": str(self.theta),
                "M": str(self.ratio_max),
                "horizon": self.horizon,
            }
        return {"kind": "factorial", "horizon": self.horizon}

    @classmethod
    def from_json(cls, doc: dict) -> "IndexSequence":
        kind = doc["kind"]
        if kind == "explicit":
            return cls.explicit(doc["values"])
        if kind == "polynomial_floor":
            return cls.polynomial_floor(doc["coeffs"], doc.get("horizon", 10**15))
        if kind == "geometric":
            return cls.geometric(doc.get("first", 1), doc["ratio"], doc["theta"], doc["M"], doc.get("horizon", 400))
        if kind == "factorial":
            return cls.factorial(doc.get("horizon", 170))
        raise ValueError(f"unknown sequence kind {kind!r}")


def materialize(seq: IndexSequence, n: int, max_bits: int | None = None) -> int:
    """``lambda_n`` as an exact integer.

    Python integers do not overflow; pass ``max_bits=63`` to enforce a
    fixed-width contract, in which case oversize values raise
    :class:`SequenceOverflowError` and callers fall back to ``log_value``.
    """
    if n < seq.first_index:
        raise IndexError(f"index {n} precedes the first valid index {seq.first_index}")
    if n > seq.horizon:
        raise IndexError(f"index {n} beyond horizon {seq.horizon}")
    v = seq.value(n)
    if max_bits is not None and v.bit_length() > max_bits:
        raise SequenceOverflowError(f"lambda_{n} needs {v.bit_length()} bits (> {max_bits})")
    return v


# --------------------------------------------------------------------------------
# Index streams (n_k)

_AFFINE = re.compile(r"^\s*(\d*)\s*k\s*(?:([+-])\s*(\d+))?\s*$")


@dataclass(frozen=True)
class IndexStream:
    """A strictly increasing stream ``n_1 < n_2 < ...`` (1-based)."""

    step: int = 1
    offset: int = 0
    values: tuple | None = None

    def __post_init__(self):
        if self.values is not None:
            vals = tuple(int(v) for v in self.values)
            if any(b <= a for a, b in zip(vals, vals[1:])) or (vals and vals[0] < 1):
                raise ValueError("stream must be strictly increasing positive integers")
            object.__setattr__(self, "values", vals)
        elif self.step < 1 or self.step + self.offset < 1:
            raise ValueError("affine stream must be increasing and positive")

    @classmethod
    def parse(cls, text: str) -> "IndexStream":
        """``identity``, ``2k``, ``3k+1`` or a comma list ``1,4,9``."""
        text = text.strip()
        if text == "identity":
            return cls()
        m = _AFFINE.match(text)
        if m:
            step = int(m.group(1) or 1)
            off = int(m.group(3) or 0) * (-1 if m.group(2) == "-" else 1)
            return cls(step, off)
        return cls(values=tuple(int(t) for t in text.split(",") if t.strip()))

    def __call__(self, k: int) -> int:
        if k < 1:
            raise IndexError("streams are 1-based")
        if self.values is not None:
            return self.values[k - 1]
        return self.step * k + self.offset

    @property
    def length(self) -> int | None:
        return None if self.values is None else len(self.values)

    def describe(self) -> str:
        if self.values is not None:
            return ",".join(map(str, self.values))
        if self.step == 1 and self.offset == 0:
            return "identity"
        tail = "" if self.offset == 0 else f"{self.offset:+d}"
        return f"{self.step}k{tail}"

    def index_of(self, value: int) -> int | None:
        if self.values is not None:
            lo, hi = 0, len(self.values)
            while lo < hi:
                mid = (lo + hi) // 2
                if self.values[mid] < value:
                    lo = mid + 1
                else:
                    hi = mid
            return lo + 1 if lo < len(self.values) and self.values[lo] == value else None
        k, rem = divmod(value - self.offset, self.step)
        return k if rem == 0 and k >= 1 else None

    def first_index_where(self, pred: Callable[[int], bool], start: int) -> int | None:
        """Smallest ``k >= start`` with ``pred(n_k)``; ``pred`` must be monotone."""
        n = self.length
        if n is not None and start > n:
            return None
        if pred(self(start)):
            return start
        lo, step = start, 1
        while True:
            hi = lo + step
            if n is not None and hi > n:
                hi = n
                if not pred(self(hi)):
                    return None
                break
            if pred(self(hi)):
                break
            lo, step = hi, step * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pred(self(mid)):
                hi = mid
            else:
                lo = mid
        return hi


# --------------------------------------------------------------------------------
# Selections


@dataclass(frozen=True)
class GapSelection:
    """Pairs ``(p_k, q_k)`` for ``k = k0, k0+1, ...``."""

    k0: int
    pairs: tuple
    lambda_pairs: tuple
    source: str = ""
    q_indices: tuple = ()
    notes: tuple = ()

    @property
    def ks(self) -> range:
        return range(self.k0, self.k0 + len(self.pairs))

    @property
    def ratios(self) -> list[Fraction]:
        return [Fraction(lq, lp) for lp, lq in self.lambda_pairs]

    def to_json(self) -> dict:
        return {
            "k0": self.k0,
            "pairs": [list(p) for p in self.pairs],
            "lambda_pairs": [list(p) for p in self.lambda_pairs],
            "ratios": [float(r) for r in self.ratios],
            "source": self.source,
            "notes": list(self.notes),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GapSelection":
        return cls(
            k0=int(doc["k0"]),
            pairs=tuple((int(p), int(q)) for p, q in doc["pairs"]),
            lambda_pairs=tuple((int(p), int(q)) for p, q in doc["lambda_pairs"]),
            source=doc.get("source", ""),
            notes=tuple(doc.get("notes", ())),
        )

    @classmethod
    def from_pairs(cls, seq: IndexSequence, k0: int, pairs: Iterable, source: str = "") -> "GapSelection":
        pairs = tuple((int(p), int(q)) for p, q in pairs)
        lam = tuple((seq.value(p), seq.value(q)) for p, q in pairs)
        return cls(k0, pairs, lam, source)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "p_k", "q_k", "lambda_p", "lambda_q", "ratio", "bound_k"])
        for k, (p, q), (lp, lq), r in zip(self.ks, self.pairs, self.lambda_pairs, self.ratios):
            w.writerow([k, p, q, lp, lq, repr(float(r)), k])
        return buf.getvalue()


@dataclass
class ConditionReport:
    cond1: bool
    cond2: bool
    cond3: bool
    cond4_le_k: bool
    ratios: list
    witness_ok: bool | None = None
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.cond1 and self.cond2 and self.cond3 and self.cond4_le_k and self.witness_ok is not False


def _ge(r: Fraction, w) -> bool:
    if isinstance(w, (int, Fraction)):
        return r >= w
    w = float(w)
    if math.isnan(w):
        return False
    if math.isinf(w):
        return w < 0
    return r >= Fraction(w)


def check_gap_conditions(
    seq: IndexSequence,
    stream: IndexStream,
    sel: GapSelection,
    witness: Callable[[int], object] | None = None,
) -> ConditionReport:
    """Exact check of the four selection conditions on a finite horizon.

    Divergence of the ratios cannot be certified on a finite range; with a
    ``witness`` the report only states whether ``ratio_k >= witness(k)``.
    """
    for p, q in sel.pairs:
        for n in (p, q):
            if n < seq.first_index or n > seq.horizon:
                raise IndexError(f"index {n} outside [{seq.first_index}, {seq.horizon}]")
    lam = [(seq.value(p), seq.value(q)) for p, q in sel.pairs]
    failures = []
    positions = [stream.index_of(q) for _, q in sel.pairs]
    cond1 = all(i is not None for i in positions) and all(
        b > a for a, b in zip(positions, positions[1:])
    )
    if not cond1:
        failures.append("(1) q_k is not a subsequence of n_k")
    ps = [p for p, _ in sel.pairs]
    cond2 = all(b > a for a, b in zip(ps, ps[1:]))
    if not cond2:
        failures.append("(2) p_k not strictly increasing")
    cond3 = all(lp < lq for lp, lq in lam) and all(
        lam[i][1] <= lam[i + 1][0] for i in range(len(lam) - 1)
    )
    if not cond3:
        failures.append("(3) lambda_p < lambda_q <= lambda_p(next) violated")
    ratios = [Fraction(lq, lp) for lp, lq in lam]
    cond4 = all(r <= k for k, r in zip(sel.ks, ratios))
    if not cond4:
        failures.append("(4) ratio exceeds k")
    witness_ok = None
    if witness is not None:
        witness_ok = all(_ge(r, witness(k)) for k, r in zip(sel.ks, ratios))
        if not witness_ok:
            failures.append("(4) ratio below divergence witness")
    return ConditionReport(cond1, cond2, cond3, cond4, [float(r) for r in ratios], witness_ok, failures)


def _pair_ok(k, p, lp, lq, prev) -> bool:
    if not lp < lq or lq > k * lp:
        return False
    if prev is not None:
        p_prev, lq_prev = prev
        return p > p_prev and lq_prev <= lp
    return True


def _p_inverse(seq: IndexSequence, target: float, lo: float, hi: float, tol: float = 1e-9) -> float:
    while seq.P_float(hi) < target:
        hi *= 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if seq.P_float(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _above(seq: IndexSequence, n: int, pq: Fraction, k: int) -> bool:
    # P(n) > P(q)/sqrt(k), squared
    pn = seq.P(n)
    return pn > 0 and k * pn * pn > pq * pq


def polynomial_p(seq: IndexSequence, q: int, k: int) -> tuple[int | None, str]:
    """``floor(P^{-1}(P(q)/sqrt(k))) + 1`` and a note when the float seed needed fixing.

    Returns ``(None, "")`` when ``P(q)/sqrt(k)`` lies below ``P(a)``, where the
    inverse is undefined.  The bisection seed is corrected with exact integer
    comparisons, so the result is the smallest ``n`` with ``P(n) > P(q)/sqrt(k)``.
    """
    a = seq.first_index
    pq = seq.P(q)
    if seq.P(a) * seq.P(a) * k > pq * pq:
        return None, ""
    x = _p_inverse(seq, float(pq) / math.sqrt(k), float(a), float(max(q, a + 1)))
    seeded = math.floor(x) + 1
    above = lambda n: _above(seq, n, pq, k)
    # gallop from the float seed to bracket the exact answer, then bisect
    lo, hi, step = seeded - 1, seeded, 1
    while lo >= a and above(lo):
        hi, lo, step = lo, max(lo - step, a - 1), step * 2
    while not above(hi):
        lo, hi, step = hi, hi + step, step * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if above(mid):
            hi = mid
        else:
            lo = mid
    p = max(hi, a)
    if p != seeded:
        return p, "bisection seed corrected by exact comparison"
    if abs(x - round(x)) <= 1e-9:
        return p, "inverse within tolerance of an integer, broken upward"
    return p, ""


def select_gaps_polynomial(
    seq: IndexSequence, stream: IndexStream, count: int, max_k: int | None = None
) -> GapSelection:
    """Greedy pair selection for ``lambda_n = floor(P(n))``.

    ``q_k`` is the first unused stream element with ``P(q_k) > sqrt(k) P(q_{k-1})``
    and ``p_k = floor(P^{-1}(P(q_k)/sqrt(k))) + 1``.  Pairs start at the
    smallest ``k0`` after which every emitted pair satisfies the conditions.
    ``count=None`` runs until a finite stream is exhausted.
    """
    if seq.kind != "polynomial_floor":
        raise ValueError("select_gaps_polynomial needs a polynomial_floor sequence")
    a = seq.first_index
    limit = max_k if max_k is not None else (count or 0) + 10_000
    k, pos = 1, 0
    q_prev = None
    k0 = 2
    pairs, lam, qidx, notes = [], [], [], []
    prev = None
    while count is None or len(pairs) < count:
        if k > limit:
            raise InfeasibleSelectionError(k, "no run of valid pairs within the search limit")
        if q_prev is None:
            pred = lambda n: n >= a
        else:
            pq_prev = seq.P(q_prev)
            # P(n) > sqrt(k) P(q_prev), squared
            pred = lambda n, kk=k, t=pq_prev: n >= a and seq.P(n) > 0 and seq.P(n) ** 2 > kk * t * t
        idx = stream.first_index_where(pred, pos + 1)
        if idx is None:
            if count is None and pairs:
                break
            raise InfeasibleSelectionError(k, "stream exhausted before an admissible q_k")
        q = stream(idx)
        if q > seq.horizon:
            if count is None and pairs:
                break
            raise InfeasibleSelectionError(k, f"q_k={q} beyond horizon {seq.horizon}")
        pos, q_prev = idx, q
        p, flag = polynomial_p(seq, q, k)
        if flag:
            notes.append(f"k={k}: {flag} (p_k={p})")
        valid = p is not None and p >= a and p <= seq.horizon
        if valid:
            lp, lq = seq.value(p), seq.value(q)
            valid = _pair_ok(k, p, lp, lq, prev)
        if valid:
            pairs.append((p, q))
            lam.append((lp, lq))
            qidx.append(idx)
            prev = (p, lq)
        else:
            pairs.clear()
            lam.clear()
            qidx.clear()
            prev = None
            k0 = k + 1
        k += 1
    return GapSelection(
        k0,
        tuple(pairs),
        tuple(lam),
        source=f"polynomial P={[str(c) for c in seq.poly]} n_k={stream.describe()}",
        q_indices=tuple(qidx),
        notes=tuple(n for n in notes if int(n.split(":")[0][2:]) >= k0),
    )


def select_gaps_geometric(
    seq: IndexSequence, stream: IndexStream, count: int, max_k: int | None = None
) -> GapSelection:
    """Pair selection for sequences with ``theta < lambda_{n+1}/lambda_n < M``.

    ``q_{k+1}`` is the first stream element with ``q_{k+1} - q_k > log(k+1)/log M``
    and ``p_k = q_k - floor(log k / log M)``.  Pairs start once the gap
    ``floor(log k / log M)`` is at least one.
    """
    if seq.kind != "geometric":
        raise ValueError("select_gaps_geometric needs a geometric sequence")
    M = seq.ratio_max
    limit = max_k if max_k is not None else (count or 0) + 10_000
    pos = stream.first_index_where(lambda n: n >= 1, 1)
    if pos is None:
        raise InfeasibleSelectionError(1, "empty stream")
    q = stream(pos)
    k = 1
    k0 = None
    pairs, lam, qidx = [], [], []
    prev = None
    while count is None or len(pairs) < count:
        if k > limit:
            raise InfeasibleSelectionError(k, "no run of valid pairs within the search limit")
        if q > seq.horizon:
            if count is None and pairs:
                break
            raise InfeasibleSelectionError(k, f"q_k={q} beyond horizon {seq.horizon}")
        gap = floor_log(k, M)
        p = q - gap
        valid = gap >= 1 and p >= 1
        if valid:
            lp, lq = seq.value(p), seq.value(q)
            valid = _pair_ok(k, p, lp, lq, prev)
        if valid:
            if k0 is None:
                k0 = k
            pairs.append((p, q))
            lam.append((lp, lq))
            qidx.append(pos)
            prev = (p, lq)
        else:
            pairs.clear()
            lam.clear()
            qidx.clear()
            prev = None
            k0 = None
        # M**(n - q) > k + 1  <=>  n - q > log(k+1)/log M
        target = q + floor_log(k + 1, M) + 1
        nxt = stream.first_index_where(lambda n, t=target: n >= t, pos + 1)
        if nxt is None:
            if count is None and pairs:
                break
            raise InfeasibleSelectionError(k + 1, "stream exhausted")
        pos, q = nxt, stream(nxt)
        k += 1
    return GapSelection(
        k0 if k0 is not None else k,
        tuple(pairs),
        tuple(lam),
        source=f"geometric theta={seq.theta} M={seq.ratio_max} n_k={stream.describe()}",
        q_indices=tuple(qidx),
    )


def polynomial_witness(seq: IndexSequence, sel: GapSelection) -> Callable[[int], float]:
    """``w(k) = sqrt(k) P(p_k - 1)/P(p_k) - 1/P(p_k)`` as a float function of k."""
    by_k = dict(zip(sel.ks, sel.pairs))

    def w(k):
        p = by_k[k][0]
        pp = float(seq.P(p))
        return math.sqrt(k) * float(seq.P(p - 1)) / pp - 1.0 / pp

    return w


def polynomial_sandwich(seq: IndexSequence, sel: GapSelection) -> list[tuple[int, bool, bool]]:
    """Exact check of ``w(k) <= ratio_k < sqrt(k) P(p)/(P(p) - 1)`` per k."""
    out = []
    for k, (p, _), r in zip(sel.ks, sel.pairs, sel.ratios):
        pp, pm = seq.P(p), seq.P(p - 1)
        # sqrt(k) pm - 1 <= r pp
        rhs = r * pp + 1
        lower = pm <= 0 or k * pm * pm <= rhs * rhs
        # r (pp - 1) < sqrt(k) pp   (pp > 1)
        upper = pp > 1 and r * r * (pp - 1) * (pp - 1) < k * pp * pp
        out.append((k, lower, upper))
    return out


def geometric_witness(seq: IndexSequence) -> Callable[[int], Fraction]:
    """``theta ** floor(log k / log M)``, exact."""
    return lambda k: seq.theta ** floor_log(k, seq.ratio_max)


def geometric_sandwich(seq: IndexSequence, sel: GapSelection) -> list[tuple[int, bool, bool]]:
    """Exact check of ``theta^(q-p) < ratio_k < M^(q-p)`` per k."""
    out = []
    for k, (p, q), r in zip(sel.ks, sel.pairs, sel.ratios):
        out.append((k, seq.theta ** (q - p) < r, r < seq.ratio_max ** (q - p)))
    return out


# --------------------------------------------------------------------------------
# Ostrowski gaps in coefficient streams


@dataclass
class GapReport:
    ordering_ok: bool
    ratios: list
    witness_ok: bool | None
    d_log: list
    nonincreasing: bool
    d_last_log: float
    eps: float
    passes: bool

    @property
    def d(self) -> list:
        return [None if v is None else math.exp(v) for v in self.d_log]


def detect_ostrowski_gaps(
    root_logs,
    windows,
    eps: float,
    nu0: int = 1,
    witness: Callable[[int], object] | None = None,
    labels: Sequence[int] | None = None,
    slack: float = 1e-12,
) -> GapReport:
    """Finite-horizon test for Ostrowski gaps ``(p_m, q_m]``.

    ``root_logs[nu]`` is ``log |a_nu|**(1/nu)`` (a :class:`TaylorPoly` is
    accepted directly).  ``windows`` is a list of coefficient-index pairs or
    a :class:`GapSelection`, whose lambda pairs and k labels are then used.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(root_logs, TaylorPoly):
        root_logs = log_root_magnitudes(root_logs)
    root_logs = np.asarray(root_logs, dtype=float)
    if isinstance(windows, GapSelection):
        labels = list(windows.ks) if labels is None else labels
        windows = windows.lambda_pairs
    windows = [(int(p), int(q)) for p, q in windows]
    labels = list(range(1, len(windows) + 1)) if labels is None else list(labels)
    for p, q in windows:
        if q <= p:
            raise ValueError(f"empty gap window ({p}, {q}]")
        if q >= root_logs.size:
            raise ValueError(f"window ({p}, {q}] exceeds the coefficient stream")
    ordering = all(p < q for p, q in windows) and all(
        windows[i][1] <= windows[i + 1][0] for i in range(len(windows) - 1)
    )
    ratios = [q / p for p, q in windows]
    witness_ok = None
    if witness is not None:
        witness_ok = all(_ge(Fraction(q, p), witness(m)) for m, (p, q) in zip(labels, windows))
    d_log = []
    for p, q in windows:
        lo = max(p + 1, nu0)
        d_log.append(None if lo > q else float(root_logs[lo : q + 1].max()))
    present = [v for v in d_log if v is not None]
    nonincreasing = all(b <= a + slack for a, b in zip(present, present[1:]))
    last = present[-1] if present else -math.inf
    passes = ordering and nonincreasing and last <= math.log(eps) + slack and witness_ok is not False
    return GapReport(ordering, ratios, witness_ok, d_log, nonincreasing, last, eps, passes)


# --------------------------------------------------------------------------------
# Cauchy decay chain


LINKS = ("cauchy", "normalized", "ratio", "condition4")


@dataclass
class ChainReport:
    rows: list
    worst_slack: dict
    holds: bool


def verify_decay_chain(polys: Sequence[TaylorPoly], sel: GapSelection, tol: float = 1e-9) -> ChainReport:
    """Check, in log domain, for each k and ``lambda_p <= nu <= lambda_q``::

        log|a_nu|^(1/nu) <= (lq/nu) ln2 - k ln3 <= (lq/lp) ln2 - k ln3 <= k ln2 - k ln3

    given ``||S_lq||_{|z|=3^k}^(1/lq) <= 2``, which is checked with the
    rigorous coefficient-sum bound.  The extra ``cauchy`` link reports the
    slack of the Cauchy estimate itself.
    """
    if len(polys) != len(sel.pairs):
        raise ValueError("one partial sum per selected pair is required")
    worst = {name: math.inf for name in LINKS}
    rows = []
    for k, s, (lp, lq) in zip(sel.ks, polys, sel.lambda_pairs):
        if s.degree > lq:
            raise ValueError(f"k={k}: polynomial degree {s.degree} exceeds lambda_q={lq}")
        radius = 3.0**k
        norm = coeff_sum_bound(s, radius, origin=s.center).value
        excess = norm / lq - LN2
        if excess > tol:
            raise NormalizationError(k, excess)
        nu = np.arange(max(lp, 1), lq + 1)
        logs = np.full(nu.size, -math.inf)
        coeffs = np.abs(s.coeffs)
        have = nu <= s.degree
        with np.errstate(divide="ignore"):
            logs[have] = np.log(coeffs[nu[have]]) / nu[have]
        cauchy = (norm - nu * math.log(radius)) / nu if norm > -math.inf else np.full(nu.size, -math.inf)
        l1 = (lq / nu) * LN2 - k * LN3
        l2 = (lq / lp) * LN2 - k * LN3
        l3 = k * LN2 - k * LN3
        with np.errstate(invalid="ignore"):
            slack = {
                "cauchy": float(np.min(np.where(logs == -math.inf, math.inf, cauchy - logs))),
                "normalized": float(np.min(np.where(logs == -math.inf, math.inf, l1 - logs))),
                "ratio": float(np.min(l2 - l1)),
                "condition4": float(l3 - l2),
            }
        for name in LINKS:
            worst[name] = min(worst[name], slack[name])
        rows.append({"k": k, "lambda_p": lp, "lambda_q": lq, "norm_log": norm, "normalization_excess": excess, **slack})
    holds = all(v >= -tol for v in worst.values())
    return ChainReport(rows, worst, holds)
