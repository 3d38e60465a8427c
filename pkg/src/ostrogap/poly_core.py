"""Finite Taylor polynomials around an explicit center.

Coefficients are stored densely (explicit zeros, trailing zeros kept) so a
partial sum remembers its formal index.  Norms on circles of large radius are
computed in log domain after rescaling by the largest term, because raw
evaluation at ``|z| = 3**k`` overflows doubles already for moderate degrees.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "LogMag",
    "TaylorPoly",
    "CircleNorm",
    "evaluate",
    "partial_sum",
    "recenter",
    "partial_sum_at",
    "circle_norm",
    "coeff_sum_bound",
    "root_coeff_magnitude",
    "log_root_magnitudes",
    "cauchy_root_bound",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True, order=True)
class LogMag:
    """Natural log of a nonnegative magnitude; ``-inf`` stands for zero.

    ``a + b`` multiplies the underlying magnitudes, :meth:`logaddexp` adds them.
    """

    value: float

    @classmethod
    def of(cls, x) -> "LogMag":
        x = abs(x)
        return cls(math.log(x) if x > 0 else -math.inf)

    @classmethod
    def zero(cls) -> "LogMag":
        return cls(-math.inf)

    @classmethod
    def sum(cls, logs) -> "LogMag":
        """Log of the sum of magnitudes given by ``logs`` (floats or LogMags)."""
        arr = np.asarray([float(v) for v in logs], dtype=float)
        if arr.size == 0:
            return cls.zero()
        top = arr.max()
        if top == -math.inf:
            return cls.zero()
        return cls(float(top + math.log(np.exp(arr - top).sum())))

    def __add__(self, other) -> "LogMag":
        return LogMag(self.value + float(other))

    def logaddexp(self, other) -> "LogMag":
        return LogMag(float(np.logaddexp(self.value, float(other))))

    def __float__(self) -> float:
        return self.value

    @property
    def is_zero(self) -> bool:
        return self.value == -math.inf

    @property
    def linear(self) -> float:
        """``exp(value)``, or ``inf`` when the magnitude is not representable."""
        if self.value > 690.0:
            return math.inf
        return math.exp(self.value)


Number = Union[int, float, complex]


@dataclass(frozen=True, eq=False)
class TaylorPoly:
    """``sum_nu coeffs[nu] * (z - center)**nu`` with a formal degree bound."""

    center: complex
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        if c.size == 0:
            raise ValueError("TaylorPoly needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise ValueError("TaylorPoly coefficients must be finite")
        center = complex(self.center)
        if not (math.isfinite(center.real) and math.isfinite(center.imag)):
            raise ValueError("TaylorPoly center must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", center)

    @property
    def degree(self) -> int:
        """Formal degree bound (``len(coeffs) - 1``)."""
        return self.coeffs.size - 1

    def __call__(self, z):
        return evaluate(self, z)

    def __repr__(self):
        return f"TaylorPoly(center={self.center!r}, degree={self.degree})"

    def to_json(self) -> dict:
        return {
            "center": [self.center.real, self.center.imag],
            "coeffs": [[c.real, c.imag] for c in self.coeffs.tolist()],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TaylorPoly":
        re, im = doc["center"]
        return cls(complex(re, im), [complex(a, b) for a, b in doc["coeffs"]])

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "TaylorPoly":
        return cls.from_json(json.loads(text))


def evaluate(p: TaylorPoly, z):
    """Horner evaluation at a scalar or an array of points."""
    w = np.asarray(z, dtype=complex) - p.center
    acc = np.full(w.shape, p.coeffs[-1], dtype=complex)
    for a in p.coeffs[-2::-1]:
        acc = acc * w + a
    return acc[()] if acc.ndim == 0 else acc


def partial_sum(p: TaylorPoly, n: int) -> TaylorPoly:
    """Truncation ``S_n`` around ``p.center``; degree bound exactly ``n``."""
    if n < 0:
        raise ValueError("partial sum index must be nonnegative")
    out = np.zeros(n + 1, dtype=complex)
    keep = min(n + 1, p.coeffs.size)
    out[:keep] = p.coeffs[:keep]
    return TaylorPoly(p.center, out)


def recenter(p: TaylorPoly, new_center: Number) -> TaylorPoly:
    """Taylor shift by repeated synthetic division.

    The Horner passes are reordered along anti-diagonals, so each of the ``d``
    sweeps is one vector update using only values from the previous sweep.
    """
    new_center = complex(new_center)
    h = new_center - p.center
    c = p.coeffs.copy()
    d = c.size - 1
    if h != 0:
        for j in range(d - 1, -1, -1):
            c[j:d] += h * c[j + 1 : d + 1]
    return TaylorPoly(new_center, c)


def partial_sum_at(p: TaylorPoly, n: int, center: Number) -> TaylorPoly:
    """``S_n`` of the polynomial's expansion around ``center``."""
    if complex(center) == p.center:
        return partial_sum(p, n)
    return partial_sum(recenter(p, center), n)


@dataclass(frozen=True)
class CircleNorm:
    """Sampled maximum of ``|p|`` on a circle and a rigorous upper bound."""

    sampled: LogMag
    bound: LogMag
    samples: int


def _scaled_terms(p: TaylorPoly, radius: float, origin: complex):
    if p.center != origin:
        p = recenter(p, origin)
    mags = np.abs(p.coeffs)
    with np.errstate(divide="ignore"):
        logs = np.log(mags) + np.arange(p.coeffs.size) * math.log(radius)
    return p, logs


def _sum_bound(logs: np.ndarray, extra: int) -> float:
    top = logs.max()
    if top == -math.inf:
        return -math.inf
    total = np.exp(logs - top).sum()
    # inflate by a rounding allowance so the bound dominates any computed sample
    total *= 1.0 + 8.0 * (logs.size + extra) * _EPS
    return float(top + math.log(total))


def coeff_sum_bound(p: TaylorPoly, radius: float, origin: Number = 0) -> LogMag:
    """``log sum_nu |a_nu| radius**nu`` for the expansion around ``origin``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    _, logs = _scaled_terms(p, radius, complex(origin))
    return LogMag(_sum_bound(logs, 0))


def circle_norm(p: TaylorPoly, radius: float, m: int | None = None, origin: Number = 0) -> CircleNorm:
    """Max of ``|p|`` over ``m`` equispaced points of ``|z - origin| = radius``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if m is None:
        m = 4 * p.degree + 64
    if m < 4:
        raise ValueError("circle norm needs at least 4 samples")
    q, logs = _scaled_terms(p, radius, complex(origin))
    top = logs.max()
    if top == -math.inf:
        zero = LogMag.zero()
        return CircleNorm(zero, zero, m)
    scaled = np.exp(logs - top) * np.exp(1j * np.angle(q.coeffs))
    if scaled.size > m:
        pad = (-scaled.size) % m
        scaled = np.concatenate([scaled, np.zeros(pad, dtype=complex)]).reshape(-1, m).sum(axis=0)
    # sum_nu b_nu exp(2 pi i j nu / m) for every j
    values = np.fft.ifft(scaled, n=m) * m
    peak = np.abs(values).max()
    sampled = top + math.log(peak) if peak > 0 else -math.inf
    return CircleNorm(LogMag(float(sampled)), LogMag(_sum_bound(logs, m)), m)


def root_coeff_magnitude(p: TaylorPoly, nu: int) -> LogMag:
    """``log |a_nu|**(1/nu)``."""
    if nu < 1:
        raise ValueError("root magnitude is defined for nu >= 1")
    if nu > p.degree:
        raise ValueError(f"nu={nu} exceeds degree bound {p.degree}")
    a = abs(p.coeffs[nu])
    return LogMag(math.log(a) / nu if a > 0 else -math.inf)


def log_root_magnitudes(p: TaylorPoly) -> np.ndarray:
    """Vector of ``log |a_nu|**(1/nu)``; entry 0 is ``-inf`` by convention."""
    nu = np.arange(p.coeffs.size, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(p.coeffs))
    out = np.full(p.coeffs.size, -math.inf)
    out[1:] = logs[1:] / nu[1:]
    return out


def cauchy_root_bound(norm_log, radius: float, nu: int, lam_q: int) -> LogMag:
    """Log of the Cauchy bound on ``|a_nu|**(1/nu)`` from a degree-``lam_q`` norm.

    Evaluates both ``(log N - nu log R) / nu`` and the regrouped
    ``(lam_q / nu) * (log N / lam_q) - log R`` and insists they agree.
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    if nu > lam_q:
        raise ValueError(f"nu={nu} exceeds lam_q={lam_q}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    norm_log = float(norm_log)
    log_r = math.log(radius)
    if norm_log == -math.inf:
        return LogMag.zero()
    direct = (norm_log - nu * log_r) / nu
    regrouped = (lam_q / nu) * (norm_log / lam_q) - log_r
    if abs(direct - regrouped) > 1e-12 * (1.0 + abs(direct) + abs(norm_log) / nu):
        raise ArithmeticError(f"Cauchy bound forms disagree: {direct!r} vs {regrouped!r}")
    return LogMag(direct)
