"""Young functions, their complementary functions, and the series c_phi.

A Young function phi is convex, nondecreasing, phi(0) = 0 and phi(t) -> inf.
Its complementary function is psi(s) = sup_{t>0} (s t - phi(t)).

All conjugate work is done in the logarithmic domain.  For a differentiable
phi the supremum is attained where phi'(t) = s, and there

    psi(phi'(t)) = t phi'(t) - phi(t),

so both psi and its inverse can be obtained by solving a monotone scalar
equation in z = log t, without ever forming t itself.  This matters for
psi^{-1}(2^{2^k}): the argument overflows a double for k >= 10, while
log2 of it does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BoundedConjugateRange, DomainError

__all__ = [
    "YoungFunction",
    "CPhi",
    "builtin_young",
    "young_from_spec",
    "young_to_spec",
    "eval_phi",
    "log_phi",
    "conjugate",
    "log_conjugate",
    "conjugate_inverse",
    "c_phi",
    "check_young",
]

KINDS = ("power", "loglog", "linear", "table")

SOLVE_RTOL = 1e-9
ROUNDTRIP_RTOL = 1e-7
C_PHI_MAX_TERMS = 64
C_PHI_FLOOR = 1e-3

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class YoungFunction:
    """A Young function from the built-in catalog.

    ``kind`` is one of ``power`` (t**p), ``loglog`` (t*log(e+t)**delta),
    ``linear`` (t) or ``table`` (convex piecewise-linear interpolant through
    the knots, extended with the last slope).
    """

    kind: str
    p: float | None = None
    delta: float | None = None
    table: tuple[tuple[float, float], ...] | None = None
    domain_cap: float = 1e300

    @property
    def degenerate(self) -> bool:
        """True when psi is not finite valued (phi grows only linearly)."""
        return self.kind == "linear"

    @property
    def params(self) -> dict:
        if self.kind == "power":
            return {"p": self.p}
        if self.kind == "loglog":
            return {"delta": self.delta}
        if self.kind == "table":
            return {"table": [list(k) for k in self.table]}
        return {}

    def __call__(self, t):
        return eval_phi(self, t)

    # table helpers -------------------------------------------------------
    def _knots(self):
        ts = np.array([k[0] for k in self.table], dtype=float)
        vs = np.array([k[1] for k in self.table], dtype=float)
        return ts, vs

    def _slopes(self):
        ts, vs = self._knots()
        return np.diff(vs) / np.diff(ts)


class CPhi(NamedTuple):
    """Partial sum of the series sum_k 1 / psi^{-1}(2^(2^k))."""

    value: float
    terms: int
    divergent: bool
    converged: bool


def builtin_young(kind: str, p: float | None = None, delta: float | None = None,
                  table: Sequence[Sequence[float]] | None = None,
                  domain_cap: float = 1e300) -> YoungFunction:
    """Construct a catalog Young function and validate it on a sample."""
    if kind not in KINDS:
        raise DomainError(f"unknown Young function kind {kind!r}")
    if kind == "power":
        if p is None or not math.isfinite(p) or p <= 1:
            raise DomainError(f"power kind needs p > 1, got p={p}")
        phi = YoungFunction("power", p=float(p), domain_cap=domain_cap)
    elif kind == "loglog":
        if delta is None or not math.isfinite(delta) or delta <= 0:
            raise DomainError(f"loglog kind needs delta > 0, got delta={delta}")
        phi = YoungFunction("loglog", delta=float(delta), domain_cap=domain_cap)
    elif kind == "linear":
        phi = YoungFunction("linear", domain_cap=domain_cap)
    else:
        phi = YoungFunction("table", table=_normalize_table(table),
                            domain_cap=domain_cap)
    check_young(phi)
    return phi


def _normalize_table(table) -> tuple[tuple[float, float], ...]:
    if table is None or len(table) == 0:
        raise DomainError("table kind needs a nonempty list of [t, phi(t)] knots")
    knots = [(float(t), float(v)) for t, v in table]
    if any(not (math.isfinite(t) and math.isfinite(v)) for t, v in knots):
        raise DomainError("table knots must be finite")
    if knots[0][0] > 0:
        knots.insert(0, (0.0, 0.0))
    if knots[0] != (0.0, 0.0):
        raise DomainError("table must start at phi(0) = 0")
    ts = np.array([k[0] for k in knots])
    vs = np.array([k[1] for k in knots])
    if np.any(np.diff(ts) <= 0):
        raise DomainError("table abscissae must be strictly increasing")
    slopes = np.diff(vs) / np.diff(ts)
    if slopes[0] < 0:
        raise DomainError("table is not nondecreasing")
    if np.any(np.diff(slopes) < -1e-12 * np.maximum(1.0, np.abs(slopes[1:]))):
        raise DomainError("table is not convex: slopes must be nondecreasing")
    if slopes[-1] <= 0:
        raise DomainError("table must grow without bound (last slope > 0)")
    return tuple(knots)


def young_from_spec(spec: dict) -> YoungFunction:
    """Build a Young function from ``{"kind": ..., "p": ..., "delta": ..., "table": ...}``."""
    if "kind" not in spec:
        raise DomainError("Young function spec needs a 'kind'")
    kind = spec["kind"]
    return builtin_young(
        kind,
        p=_opt_float(spec.get("p")),
        delta=_opt_float(spec.get("delta")),
        table=spec.get("table"),
    )


def young_to_spec(phi: YoungFunction) -> dict:
    return {"kind": phi.kind, **phi.params}


def _opt_float(x):
    return None if x is None else float(x)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _phi_unchecked(phi: YoungFunction, t: np.ndarray) -> np.ndarray:
    """Vectorized phi without argument validation (t >= 0 assumed)."""
    with np.errstate(over="ignore"):
        if phi.kind == "power":
            return np.power(t, phi.p)
        if phi.kind == "loglog":
            return t * np.power(np.log(math.e + t), phi.delta)
        if phi.kind == "linear":
            return np.asarray(t, dtype=float)
        ts, vs = phi._knots()
        slope = (vs[-1] - vs[-2]) / (ts[-1] - ts[-2])
        inside = np.interp(t, ts, vs)
        return np.where(t > ts[-1], vs[-1] + slope * (t - ts[-1]), inside)


def eval_phi(phi: YoungFunction, t):
    """Evaluate phi at t >= 0 (scalar or array)."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("phi is defined on finite t >= 0")
    out = _phi_unchecked(phi, arr)
    big = arr > phi.domain_cap
    if np.any(big):
        out = np.where(big, np.exp(np.vectorize(lambda x: log_phi(phi, math.log(x)))(
            np.where(big, arr, 1.0))), out)
    if np.ndim(t) == 0:
        return float(out)
    return out


def log_phi(phi: YoungFunction, z: float) -> float:
    """Natural log of phi(e^z), usable far beyond the floating-point range of t."""
    if phi.kind == "power":
        return phi.p * z
    if phi.kind == "loglog":
        return z + phi.delta * math.log(np.logaddexp(1.0, z))
    if phi.kind == "linear":
        return z
    t = math.exp(z)
    v = float(_phi_unchecked(phi, np.array(t)))
    return math.log(v) if v > 0 else -math.inf


def _slope_at_zero(phi: YoungFunction) -> float:
    if phi.kind == "power":
        return 0.0
    if phi.kind in ("loglog", "linear"):
        return 1.0
    return float(phi._slopes()[0])


def _log_dphi(phi: YoungFunction, z: float) -> float:
    """log phi'(e^z) for the differentiable catalog kinds."""
    if phi.kind == "power":
        return math.log(phi.p) + (phi.p - 1.0) * z
    x = float(np.logaddexp(1.0, z))  # log(e + t)
    d = phi.delta
    return d * math.log(x) + math.log1p(d * math.exp(z - x) / x)


def _log_envelope(phi: YoungFunction, z: float) -> float:
    """log(t phi'(t) - phi(t)) at t = e^z; equals log psi(phi'(t))."""
    if phi.kind == "power":
        return math.log(phi.p - 1.0) + phi.p * z
    x = float(np.logaddexp(1.0, z))
    d = phi.delta
    return 2.0 * z - x + math.log(d) + (d - 1.0) * math.log(x)


def _solve_increasing(fn, target: float) -> float:
    """Find z with fn(z) = target for an increasing fn on the real line.

    The bracket starts at [-1, 1] and doubles outward until it straddles the
    target; bisection then runs to floating-point resolution.
    """
    lo, hi = -1.0, 1.0
    for _ in range(2100):
        if fn(hi) >= target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ArithmeticError("upper bracket did not straddle the target")
    for _ in range(2100):
        if fn(lo) < target:
            break
        hi, lo = lo, 2.0 * lo if lo < 0 else -1.0
    else:
        raise ArithmeticError("lower bracket did not straddle the target")
    for _ in range(2100):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# conjugation
# --------------------------------------------------------------------------

def log_conjugate(phi: YoungFunction, s: float) -> float:
    """Natural log of psi(s); -inf when psi(s) = 0 and +inf when psi(s) = inf."""
    if not (s > 0 and math.isfinite(s)):
        raise DomainError(f"conjugate needs finite s > 0, got {s}")
    if s <= _slope_at_zero(phi):
        return -math.inf
    if phi.kind == "linear":
        return math.inf
    if phi.kind == "table":
        ts, vs = phi._knots()
        slopes = phi._slopes()
        if s > slopes[-1]:
            return math.inf
        val = float(np.max(s * ts - vs))
        return math.log(val) if val > 0 else -math.inf
    z = _solve_increasing(lambda z: _log_dphi(phi, z), math.log(s))
    return _log_envelope(phi, z)


def conjugate(phi: YoungFunction, s: float) -> float:
    """The complementary function psi(s) = sup_{t>0} (s t - phi(t)).

    Returns ``math.inf`` when the supremum is infinite (linear growth with
    s above the asymptotic slope).
    """
    lg = log_conjugate(phi, s)
    if lg == -math.inf:
        return 0.0
    if lg > 709.0:
        return math.inf
    return math.exp(lg)


def conjugate_inverse(phi: YoungFunction, log2_y: float) -> float:
    """psi^{-1}(y) for y = 2**log2_y, never forming y itself."""
    if not (log2_y > 0 and math.isfinite(log2_y)):
        raise DomainError(f"conjugate_inverse needs finite log2_y > 0, got {log2_y}")
    if phi.kind == "linear":
        raise BoundedConjugateRange(
            "psi of a linear Young function is 0 on [0,1] and infinite beyond; "
            "it has no finite inverse")
    target = log2_y * _LN2
    if phi.kind == "table":
        return _table_conjugate_inverse(phi, target)
    z = _solve_increasing(lambda z: _log_envelope(phi, z), target)
    lg = _log_dphi(phi, z)
    return math.inf if lg > 709.0 else math.exp(lg)


def _table_conjugate_inverse(phi: YoungFunction, target: float) -> float:
    # psi is finite on [0, s_max] and infinite beyond, so the generalized
    # inverse inf{s : psi(s) >= y} saturates at s_max.
    s_max = float(phi._slopes()[-1])
    if log_conjugate(phi, s_max) < target:
        return s_max
    lo, hi = _slope_at_zero(phi), s_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if log_conjugate(phi, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def c_phi(phi: YoungFunction, tol: float = 1e-9) -> CPhi:
    """Partial sums of sum_{k>=1} 1/psi^{-1}(2^(2^k)).

    Summation stops once a term drops below ``tol`` times the running sum, or
    after 64 terms.  The series is declared divergent if the terms have not
    fallen below 1e-3 by then.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if phi.degenerate:
        return CPhi(math.inf, 0, True, False)
    total = 0.0
    term = math.inf
    for k in range(1, C_PHI_MAX_TERMS + 1):
        term = 1.0 / conjugate_inverse(phi, 2.0 ** k)
        total += term
        if term < tol * total:
            return CPhi(total, k, False, True)
    if term >= C_PHI_FLOOR:
        return CPhi(math.inf, C_PHI_MAX_TERMS, True, False)
    return CPhi(total, C_PHI_MAX_TERMS, False, False)


def check_young(phi: YoungFunction, n: int = 1000, rtol: float = 1e-12) -> None:
    """Check phi(0) = 0, monotonicity and convexity on an n-point sample."""
    t = np.concatenate(([0.0], np.logspace(-6, 6, n - 1)))
    v = _phi_unchecked(phi, t)
    if v[0] != 0.0:
        raise DomainError("phi(0) must be 0")
    if np.any(np.diff(v) < 0):
        raise DomainError("phi must be nondecreasing")
    slopes = np.diff(v) / np.diff(t)
    if np.any(np.diff(slopes) < -rtol * np.maximum(1.0, np.abs(slopes[1:]))):
        raise DomainError("phi must be convex")
