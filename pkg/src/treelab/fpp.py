"""First-passage percolation on trees: passage times, fastest finite-depth
transit, and level-set profiles against the rate-function predictions.

Edge v gets an i.i.d. time X_v; S_v is the sum along the root path.  The
finite-depth minimum B_n = min S_v / n over depth-n vertices with extendable
lineage proxies the fastest sustainable transit rate m1(1/br), and the
level-set growth exponent (1/n) log card{S_v <= y n} proxies the dimension
log(m(y) br) of the boundary set transited at rate y.  Level counts follow
the full level (their expectation is M_n times an exact tail), while the
minimum is restricted to lineages that actually continue, so dead ends never
fake a fast ray.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedCaseError, ValidationError
from .ratecalc import Distribution, m_inverse, m_is_trivial, rate_m
from .trees import Tree, TreeSpec, build_truncation, extendable_lineage
from .branching import branching_number
from . import rng

_TAG_PASSAGE = 0xF22A


@dataclass
class PassageSample:
    """Per-edge times and per-vertex root-path sums for one seed."""

    tree: Tree
    law: Distribution
    seed: int
    x: np.ndarray  # X_v, entry 0 unused (0.0)
    s: np.ndarray  # S_v = sum of X along the root path; S_root = 0


def sample_passage_times(tree: Tree, law: Distribution, seed: int) -> PassageSample:
    """Draw i.i.d. edge times keyed by (seed, vertex id) and accumulate sums."""
    law.require_x_type()
    v = tree.n_vertices
    x = np.zeros(v)
    if v > 1:
        x[1:] = law.sample_values(rng.derive(seed, _TAG_PASSAGE),
                                  np.arange(1, v, dtype=np.uint64))
    s = x.copy()
    for k in range(2, tree.truncation_depth + 1):
        sl = tree.level_slice(k)
        s[sl] += s[tree.parent[sl]]
    return PassageSample(tree=tree, law=law, seed=seed, x=x, s=s)


def first_passage_min(sample: PassageSample, n: int) -> float:
    """B_n: the minimum of S_v / n over depth-n vertices with extendable lineage."""
    tree = sample.tree
    if not 1 <= n <= tree.truncation_depth:
        raise ValidationError("n must be in 1..truncation_depth")
    sl = tree.level_slice(n)
    sel = extendable_lineage(tree)[sl]
    if not sel.any():
        raise ValidationError(f"level {n} has no vertices with extendable lineage")
    return float(sample.s[sl][sel].min()) / n


@dataclass
class ProfileStats:
    """Level-set counts at one depth with the matching rate predictions."""

    depth: int
    seed: int
    b_n: float
    y: np.ndarray
    counts: np.ndarray
    exponents: np.ndarray                 # (1/n) log N_n(y); -inf where empty
    predicted_rate: float | None = None   # m1(1 / br)
    predicted_exponents: np.ndarray | None = None  # log(m(y) * br)

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self.y)):
            row = {
                "seed": self.seed,
                "n": self.depth,
                "y": float(self.y[i]),
                "count": int(self.counts[i]),
                "exponent": float(self.exponents[i]),
            }
            if self.predicted_exponents is not None:
                row["predicted_exponent"] = float(self.predicted_exponents[i])
            out.append(row)
        return out


def level_profile(sample: PassageSample, n: int, y_grid) -> ProfileStats:
    """Exact counts N_n(y) = card{|v| = n : S_v <= y n} over a y grid."""
    tree = sample.tree
    if not 1 <= n <= tree.truncation_depth:
        raise ValidationError("n must be in 1..truncation_depth")
    y = np.asarray(list(y_grid), dtype=np.float64)
    s_level = sample.s[tree.level_slice(n)]
    counts = np.array([(s_level <= yy * n).sum() for yy in y], dtype=np.int64)
    with np.errstate(divide="ignore"):
        exponents = np.where(counts > 0, np.log(np.maximum(counts, 1)) / n, -np.inf)
    return ProfileStats(depth=n, seed=sample.seed, b_n=first_passage_min(sample, n),
                        y=y, counts=counts, exponents=exponents)


# ---------------------------------------------------------------------------
# Aggregated report
# ---------------------------------------------------------------------------

@dataclass
class FppReport:
    """Per-seed profiles plus their common predictions for one (spec, law)."""

    spec: TreeSpec
    law: Distribution
    depth: int
    branching: float
    branching_is_exact: bool
    predicted_rate: float
    profiles: list[ProfileStats] = field(default_factory=list)

    @property
    def b_values(self) -> np.ndarray:
        return np.array([p.b_n for p in self.profiles])

    def rows(self) -> list[dict]:
        return [row for p in self.profiles for row in p.rows()]

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "spec": self.spec.to_json(),
            "law": self.law.to_json(),
            "depth": self.depth,
            "branching": self.branching,
            "branching_is_exact": self.branching_is_exact,
            "predicted_rate": self.predicted_rate,
            "b_values": [p.b_n for p in self.profiles],
            "mean_b": float(self.b_values.mean()),
            "y_grid": [float(v) for v in (self.profiles[0].y if self.profiles else [])],
            "predicted_exponents": (
                [float(v) for v in self.profiles[0].predicted_exponents]
                if self.profiles and self.profiles[0].predicted_exponents is not None
                else None),
            "rows": self.rows(),
        }


def _branching_for(spec: TreeSpec, depth: int, *,
                   vertex_cap: int | None = None) -> tuple[float, bool]:
    exact = spec.known_branching()
    if exact is not None:
        return exact, True
    est = branching_number(spec, max(4, min(depth, 24)), 0.05,
                           vertex_cap=vertex_cap)
    return est.midpoint, False


def fpp_report(spec: TreeSpec, law: Distribution, depth: int, seeds: int,
               y_grid, *, seed: int = 0,
               vertex_cap: int | None = None) -> FppReport:
    """Replicated profiles with the transit-rate and exponent predictions.

    Replicate i uses the derived seed (seed, i), so reports are reproducible
    and worker-independent.  The degenerate combination of branching number 1
    with a trivial lower-tail rate is rejected: the transit rate is not
    determined by (m, br) there.
    """
    law.require_x_type()
    if seeds < 1:
        raise ValidationError("need at least one seed")
    br, br_exact = _branching_for(spec, depth, vertex_cap=vertex_cap)
    if br <= 1.0 + 1e-12 and m_is_trivial(law):
        raise UnsupportedCaseError(
            "branching number 1 with trivial lower-tail rate is out of scope")
    predicted_rate = m_inverse(law, min(1.0, 1.0 / br))
    y = np.asarray(list(y_grid), dtype=np.float64)
    with np.errstate(divide="ignore"):
        predicted_exp = np.array(
            [math.log(rate_m(law, float(yy)) * br)
             if rate_m(law, float(yy)) > 0.0 else -math.inf
             for yy in y])
    tree = build_truncation(spec, depth, vertex_cap=vertex_cap)
    report = FppReport(spec=spec, law=law, depth=depth, branching=br,
                       branching_is_exact=br_exact, predicted_rate=predicted_rate)
    for i in range(seeds):
        sample = sample_passage_times(tree, law, rng.derive(seed, i))
        prof = level_profile(sample, depth, y)
        prof.predicted_rate = predicted_rate
        prof.predicted_exponents = predicted_exp
        report.profiles.append(prof)
    return report
