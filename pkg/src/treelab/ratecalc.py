"""Exact moment functionals and large-deviation rate calculus for finite laws.

All laws are finitely supported, so moments and moment generating functions
are exact weighted sums.  The optimizations behind the phase-transition
constant, the lower-tail rate, and the upper-tail exponent are all convex
one-dimensional problems; they are solved by golden-section search with
expanding brackets, and infima attained only in a limit (at an endpoint of a
half-line) are detected analytically and returned exactly.

Conventions for nonnegative laws that may carry atoms at 0 or +inf:
0**0 == 0 and inf**0 == 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ResourceCapError, UnsupportedCaseError, ValidationError
from . import rng

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # golden ratio conjugate
_WEIGHT_TOL = 1e-12
_CONVOLVE_MERGE_TOL = 1e-12
_DEFAULT_CONVOLVE_CAP = 1 << 22


# ---------------------------------------------------------------------------
# Law representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Distribution:
    """A finitely supported law given by distinct support points and weights.

    Support points are floats; +inf is allowed (for nonnegative transition
    ratio laws only).  Weights must be positive and sum to 1 within 1e-12.
    """

    support: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) == 0:
            raise ValidationError("distribution needs at least one support point")
        if len(self.support) != len(self.weights):
            raise ValidationError("support and weights must have equal length")
        if len(set(self.support)) != len(self.support):
            raise ValidationError("support points must be distinct")
        for s in self.support:
            if math.isnan(s) or s == -math.inf:
                raise ValidationError(f"bad support point {s!r}")
        for w in self.weights:
            if not (w > 0.0) or not math.isfinite(w):
                raise ValidationError("weights must be positive and finite")
        if abs(math.fsum(self.weights) - 1.0) > _WEIGHT_TOL:
            raise ValidationError("weights must sum to 1 within 1e-12")

    # -- constructors -------------------------------------------------------

    @classmethod
    def point(cls, value: float) -> "Distribution":
        return cls((float(value),), (1.0,))

    @classmethod
    def uniform(cls, values: Sequence[float]) -> "Distribution":
        vals = tuple(float(v) for v in values)
        return cls(vals, (1.0 / len(vals),) * len(vals))

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "Distribution":
        return cls(tuple(float(v) for v, _ in pairs), tuple(float(w) for _, w in pairs))

    # -- cached views -------------------------------------------------------

    @cached_property
    def _sorted(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(self.support, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        order = np.argsort(s)
        return s[order], w[order]

    @cached_property
    def _cum_weights(self) -> np.ndarray:
        _, w = self._sorted
        cw = np.cumsum(w)
        cw[-1] = 1.0  # guard against fsum drift so sampling never overruns
        return cw

    # -- basic functionals --------------------------------------------------

    @property
    def ess_inf(self) -> float:
        return float(self._sorted[0][0])

    @property
    def ess_sup(self) -> float:
        return float(self._sorted[0][-1])

    @property
    def mean(self) -> float:
        s, w = self._sorted
        return float(np.dot(s, w))

    def prob(self, value: float) -> float:
        """Point mass at `value` (0.0 if not an atom)."""
        for s, w in zip(self.support, self.weights):
            if s == value:
                return w
        return 0.0

    @property
    def is_a_type(self) -> bool:
        """Usable as a transition-ratio law: support in [0, +inf]."""
        return all(s >= 0.0 for s in self.support)

    @property
    def is_x_type(self) -> bool:
        """Usable as a passage-time law: all support points finite reals."""
        return all(math.isfinite(s) for s in self.support)

    def reflected(self) -> "Distribution":
        """The law of -X; only defined for finite-support real laws."""
        self.require_x_type()
        return Distribution(tuple(-s for s in self.support), self.weights)

    def scaled(self, c: float) -> "Distribution":
        return Distribution(tuple(c * s for s in self.support), self.weights)

    def require_a_type(self) -> "Distribution":
        if not self.is_a_type:
            raise ValidationError("law must be nonnegative (support in [0, inf])")
        return self

    def require_x_type(self) -> "Distribution":
        if not self.is_x_type:
            raise ValidationError("law must have finite real support")
        return self

    def require_positive_finite(self) -> "Distribution":
        """Require 0 < value < inf almost surely."""
        if any(s == 0.0 or math.isinf(s) for s in self.support):
            raise UnsupportedCaseError(
                "laws with mass at 0 or +inf are out of scope here"
            )
        return self.require_a_type()

    # -- sampling -----------------------------------------------------------

    def sample_values(self, key: int, counters) -> np.ndarray:
        """Draw i.i.d. values keyed by (key, counter); reproducible, order-free."""
        u = rng.uniforms(key, counters)
        s, _ = self._sorted
        idx = np.searchsorted(self._cum_weights, u, side="right")
        return s[idx]

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        def enc(v: float):
            return "inf" if v == math.inf else v

        return {
            "schema": 1,
            "support": [enc(s) for s in self.support],
            "weights": list(self.weights),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Distribution":
        try:
            raw_support = doc["support"]
            raw_weights = doc["weights"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"distribution document missing field: {exc}")

        def dec(v) -> float:
            if isinstance(v, str):
                if v.strip().lower() in ("inf", "+inf", "infinity"):
                    return math.inf
                raise ValidationError(f"bad support token {v!r}")
            return float(v)

        return cls(tuple(dec(v) for v in raw_support),
                   tuple(float(w) for w in raw_weights))

    @classmethod
    def load(cls, path) -> "Distribution":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# 1-D convex minimization helpers
# ---------------------------------------------------------------------------

def _golden_min(f, lo: float, hi: float, xtol: float = 1e-12) -> tuple[float, float]:
    """Minimize a unimodal f on [lo, hi]; returns (argmin, min).

    Endpoints are checked explicitly so boundary minima are returned exactly.
    """
    a, b = lo, hi
    h = b - a
    if h <= xtol:
        mid = 0.5 * (a + b)
        return mid, f(mid)
    c = b - _INV_PHI * h
    d = a + _INV_PHI * h
    fc, fd = f(c), f(d)
    while h > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            h = b - a
            c = b - _INV_PHI * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + _INV_PHI * h
            fd = f(d)
    x = c if fc <= fd else d
    fx = min(fc, fd)
    for e in (lo, hi):
        fe = f(e)
        if fe <= fx:
            x, fx = e, fe
    return x, fx


def _expand_right(f, start: float = 1.0, limit: float = 2.0**60) -> float:
    """Return hi such that a convex f on [0, inf) has its minimum in [0, hi].

    Assumes f(x) -> inf as x -> inf, so doubling terminates.
    """
    hi = start
    while f(hi) < f(hi / 2.0):
        hi *= 2.0
        if hi > limit:
            raise ValidationError("bracket expansion failed; objective not coercive")
    return hi


def _log_sum_exp(terms: np.ndarray) -> float:
    m = np.max(terms)
    if m == -math.inf:
        return -math.inf
    return float(m + np.log(np.sum(np.exp(terms - m))))


# ---------------------------------------------------------------------------
# Fractional moments and the phase-transition constant
# ---------------------------------------------------------------------------

def fractional_moment(law: Distribution, x: float) -> float:
    """E[A**x] for a nonnegative law, exact, with 0**0 == 0 and inf**0 == 1."""
    law.require_a_type()
    total = 0.0
    for s, w in zip(law.support, law.weights):
        if s == 0.0:
            term = 0.0 if x >= 0.0 else math.inf
        elif s == math.inf:
            term = 1.0 if x == 0.0 else (math.inf if x > 0.0 else 0.0)
        else:
            term = s**x
        total += w * term
        if total == math.inf:
            return math.inf
    return total


def _log_moment_positive_part(law: Distribution, x: float) -> float:
    """log sum over finite positive atoms of w * a**x; -inf if there are none."""
    terms = [math.log(w) + x * math.log(s)
             for s, w in zip(law.support, law.weights)
             if 0.0 < s < math.inf]
    if not terms:
        return -math.inf
    return _log_sum_exp(np.asarray(terms))


def p_value(law: Distribution) -> tuple[float, float]:
    """Minimize x |-> E[A**x] over [0, 1]; returns (minimum, a minimizer).

    This is the constant whose product with the branching number locates the
    transient/recurrent transition.  For laws with A <= 1 a.s. it equals E[A].
    """
    law.require_a_type()
    p_pos = sum(w for s, w in zip(law.support, law.weights) if s > 0.0)
    if p_pos <= 0.0:
        raise ValidationError("law must satisfy P[A > 0] > 0")
    if any(s == math.inf for s in law.support):
        # E[A**x] is infinite for every x > 0; the minimum sits at x = 0.
        return p_pos, 0.0
    x, fx = _golden_min(lambda x: fractional_moment(law, x), 0.0, 1.0)
    return fx, x


def dual_p(law: Distribution) -> tuple[float, float]:
    """max over y in (0, 1] of inf over x >= 0 of y**(1-x) * E[A**x].

    The conjugate expression for the same constant as `p_value`; the two agree
    by convex duality.  Returns (value, maximizing y).
    """
    law.require_a_type()
    p_pos = sum(w for s, w in zip(law.support, law.weights) if s > 0.0)
    if p_pos <= 0.0:
        raise ValidationError("law must satisfy P[A > 0] > 0")
    if any(s == math.inf for s in law.support):
        # Inner objective is infinite for x > 0, so inf sits at x = 0 with
        # value y * P[A > 0]; the outer max is then at y = 1.
        return p_pos, 1.0

    pos = [(s, w) for s, w in zip(law.support, law.weights) if s > 0.0]
    a_max = max(s for s, _ in pos)
    a_min = min(s for s, _ in pos)

    def log_inner(y: float) -> float:
        log_y = math.log(y)

        def log_h(x: float) -> float:
            return (1.0 - x) * log_y + _log_moment_positive_part(law, x)

        if a_max <= y:
            # h is convex with a finite limit y * P[A == y] at x -> inf,
            # hence nonincreasing; the infimum is attained in the limit.
            mass = law.prob(y)
            return math.log(y * mass) if mass > 0.0 else -math.inf
        hi = _expand_right(log_h)
        _, val = _golden_min(log_h, 0.0, hi, xtol=1e-11)
        return val

    # log of the objective is concave in t = log y; the maximizer satisfies
    # y* in [a_min, min(1, a_max)], extended slightly on the left for safety.
    t_hi = min(0.0, math.log(a_max))
    t_lo = min(math.log(a_min) - 1.0, t_hi - 1.0)
    t, neg = _golden_min(lambda t: -log_inner(math.exp(t)), t_lo, t_hi, xtol=1e-11)
    return math.exp(-neg), math.exp(t)


# ---------------------------------------------------------------------------
# Lower-tail rate m, its inverse, and the upper-tail exponent gamma
# ---------------------------------------------------------------------------

def rate_m(law: Distribution, y: float) -> float:
    """Lower-tail rate inf over x <= 0 of E[exp(x (X - y))], in [0, 1].

    Equals 0 below the essential infimum, the mass of the essential infimum
    exactly at it (an infimum attained in the limit x -> -inf), and 1 at or
    above the mean.
    """
    law.require_x_type()
    lo = law.ess_inf
    if y < lo:
        return 0.0
    if y >= law.mean:
        return 1.0
    if y == lo:
        return law.prob(lo)

    s, w = law._sorted
    logw = np.log(w)

    def log_h(neg_x: float) -> float:
        # parametrized by t = -x >= 0 so the bracket expands rightward
        return _log_sum_exp(logw + (-neg_x) * (s - y))

    hi = _expand_right(log_h)
    _, val = _golden_min(log_h, 0.0, hi, xtol=1e-12)
    return min(1.0, math.exp(val))


def m_is_trivial(law: Distribution) -> bool:
    """Whether the lower-tail rate is identically one.

    For finitely supported laws the rate is 0 strictly below the essential
    infimum, so it can never be identically 1; kept as an explicit guard for
    the excluded case of the transit-rate formula.
    """
    law.require_x_type()
    return False


def m_inverse(law: Distribution, z: float) -> float:
    """Generalized inverse sup{y : m(y) < z} of the lower-tail rate, z in (0, 1].

    Found by bisection on the nondecreasing map y |-> m(y) between the
    essential infimum (where m jumps from 0) and the mean (where m reaches 1).
    Agrees with inf{y : m(y) > z} wherever that form is well defined.
    """
    law.require_x_type()
    if not (0.0 < z <= 1.0):
        raise ValidationError("z must lie in (0, 1]")
    if z == 1.0 and m_is_trivial(law):
        raise UnsupportedCaseError("m identically 1 has no inverse at z = 1")
    lo = law.ess_inf - 1.0   # m == 0 here, strictly below z
    hi = law.mean            # m == 1 here, >= z
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if rate_m(law, mid) < z:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gamma(law: Distribution, a: float) -> float:
    """Upper-tail exponent inf over theta >= 0 of (-a*theta + log E[exp(theta X)]).

    Equals 0 at or below the mean and -inf above the essential supremum; at
    the essential supremum the infimum is the log-mass there, attained in the
    limit theta -> inf.
    """
    law.require_x_type()
    if a <= law.mean:
        return 0.0
    hi_pt = law.ess_sup
    if a > hi_pt:
        return -math.inf
    if a == hi_pt:
        return math.log(law.prob(hi_pt))

    s, w = law._sorted
    logw = np.log(w)

    def g(theta: float) -> float:
        return -a * theta + _log_sum_exp(logw + theta * s)

    hi = _expand_right(g)
    _, val = _golden_min(g, 0.0, hi, xtol=1e-12)
    return min(0.0, val)


# ---------------------------------------------------------------------------
# Exact n-fold convolution tails
# ---------------------------------------------------------------------------

def _merge_close(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort and combine point masses whose positions agree within 1e-12."""
    order = np.argsort(values)
    values = values[order]
    probs = probs[order]
    if len(values) == 1:
        return values, probs
    new_group = np.empty(len(values), dtype=bool)
    new_group[0] = True
    np.greater(np.diff(values), _CONVOLVE_MERGE_TOL, out=new_group[1:])
    group_id = np.cumsum(new_group) - 1
    merged_vals = values[new_group]
    merged_probs = np.bincount(group_id, weights=probs)
    return merged_vals, merged_probs


def _convolve(d1, d2, cap: int):
    v1, p1 = d1
    v2, p2 = d2
    if len(v1) * len(v2) > cap:
        raise ResourceCapError(
            f"convolution would produce {len(v1) * len(v2)} point masses (cap {cap})"
        )
    vals = np.add.outer(v1, v2).ravel()
    probs = np.multiply.outer(p1, p2).ravel()
    vals, probs = _merge_close(vals, probs)
    if len(vals) > cap:
        raise ResourceCapError(f"convolution grew past cap {cap}")
    return vals, probs


def sum_distribution(law: Distribution, n: int,
                     cap: int = _DEFAULT_CONVOLVE_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Exact law of the sum of n independent copies, as (values, probs) arrays.

    Computed by square-and-multiply convolution; point masses at equal
    positions (within 1e-12) are combined, so lattice laws stay linear-sized.
    """
    law.require_x_type()
    if n < 1:
        raise ValidationError("n must be >= 1")
    s, w = law._sorted
    base = (s.copy(), w.copy())
    result = None
    k = n
    while k:
        if k & 1:
            result = base if result is None else _convolve(result, base, cap)
        k >>= 1
        if k:
            base = _convolve(base, base, cap)
    return result


def exact_tail(law: Distribution, n: int, a: float,
               cap: int = _DEFAULT_CONVOLVE_CAP) -> float:
    """Exact P[S_n >= n*a] for the sum S_n of n independent copies of the law.

    The tail threshold uses the same 1e-12 position tolerance as the
    convolution merging, so lattice ties land on the correct side.
    """
    vals, probs = sum_distribution(law, n, cap=cap)
    threshold = n * a - _CONVOLVE_MERGE_TOL
    return float(probs[vals >= threshold].sum())


def exact_tail_below(law: Distribution, n: int, y: float,
                     cap: int = _DEFAULT_CONVOLVE_CAP) -> float:
    """Exact P[S_n <= n*y], via the upper tail of the reflected law."""
    return exact_tail(law.reflected(), n, -y, cap=cap)


# ---------------------------------------------------------------------------
# Summary container
# ---------------------------------------------------------------------------

@dataclass
class RateSummary:
    """Requested rate-function evaluations for one law, with argmin witnesses."""

    law: Distribution
    p: float | None = None
    x_star: float | None = None
    dual: float | None = None
    y_star: float | None = None
    m_table: list[tuple[float, float]] = field(default_factory=list)
    m_inverse_table: list[tuple[float, float]] = field(default_factory=list)
    gamma_table: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        def clean(v):
            if v is None:
                return None
            if v == -math.inf:
                return "-inf"
            if v == math.inf:
                return "inf"
            return v

        return {
            "schema": 1,
            "law": self.law.to_json(),
            "p": clean(self.p),
            "x_star": clean(self.x_star),
            "dual": clean(self.dual),
            "y_star": clean(self.y_star),
            "m": [[y, m] for y, m in self.m_table],
            "m_inverse": [[z, clean(y)] for z, y in self.m_inverse_table],
            "gamma": [[a, clean(g)] for a, g in self.gamma_table],
        }


def summarize(law: Distribution,
              y_grid: Sequence[float] = (),
              z_grid: Sequence[float] = (),
              a_grid: Sequence[float] = ()) -> RateSummary:
    """Evaluate every rate functional the law's type supports."""
    out = RateSummary(law=law)
    if law.is_a_type:
        out.p, out.x_star = p_value(law)
        out.dual, out.y_star = dual_p(law)
    if law.is_x_type:
        out.m_table = [(float(y), rate_m(law, float(y))) for y in y_grid]
        out.m_inverse_table = [(float(z), m_inverse(law, float(z))) for z in z_grid]
        out.gamma_table = [(float(a), gamma(law, float(a))) for a in a_grid]
    return out
