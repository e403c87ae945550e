"""
hellinger.py — Orthogonality diagnostics between independent measures.

For two latent points g′, g″ the item affinities h_j = Σ_l √(β_jl(g′)β_jl(g″))
give the Hellinger integral H = Π_j h_j and the series
H⁺ = Σ_j Σ_l (√β_jl(g′) − √β_jl(g″))² = 2 Σ_j (1 − h_j).
P_g′ ⊥ P_g″ exactly when H = 0. A finite computation only sees the first N
factors, so verdicts lean on per-family tail certificates where they exist
and fall back to thresholds (flagged heuristic) where they don't.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from model import (
    FAMILY_CONSTANT_TAIL, FAMILY_PERIODIC, TOL, LatentPoint, ModelError, ModelSpec,
    as_point, in_Q,
)
from workers import parallel_map

logger = logging.getLogger(__name__)

DEFAULT_N = 10_000
DEFAULT_DECAY_THRESHOLD = 1e-8
DEFAULT_FLOOR_THRESHOLD = 1e-6

VERDICT_ZERO_FACTOR = "orthogonal-zero-factor"
VERDICT_DECAY = "orthogonal-by-decay"
VERDICT_NON_ORTHOGONAL = "non-orthogonal"
VERDICT_UNDECIDED = "undecided"

ORTHOGONAL_VERDICTS = (VERDICT_ZERO_FACTOR, VERDICT_DECAY)

# Tail behaviour of H⁺ certified from the generator's closed form
TAIL_LINEAR = "linear"            # limiting rows differ: terms bounded below
TAIL_POWER = "power"              # terms ~ 1/√j (a limiting probability is 0)
TAIL_LOGARITHMIC = "logarithmic"  # terms ~ c/j
TAIL_FINITE = "finite"            # generated rows identical: H is the head product

SIMPLE_INEQUALITY_CONSTANT = 1.5 - math.sqrt(2.0)
MIDPOINT_SLACK = 1e-9


class DomainError(ValueError):
    """Argument outside the domain an inequality is stated on."""


# ------------------------------------------------------------------
# Item affinities
# ------------------------------------------------------------------

def _rows(g1: LatentPoint, g2: LatentPoint, model: ModelSpec, stop: int, start: int = 1):
    coords = np.vstack([g1.array, g2.array])
    prof = np.clip(model.profile(coords, stop, start), 0.0, None)
    return prof[0], prof[1]


def _affinities(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    h = np.sqrt(p * q).sum(axis=-1)
    h = np.minimum(h, 1.0)
    h[np.all(p == q, axis=-1)] = 1.0
    return h


def _sum_terms(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return ((np.sqrt(p) - np.sqrt(q)) ** 2).sum(axis=-1)


def hellinger_item(g1, g2, j: int, model: ModelSpec) -> float:
    """h_j = Σ_l √(β_jl(g′) β_jl(g″)), in [0, 1]; exactly 1 on identical rows."""
    p, q = _rows(as_point(g1), as_point(g2), model, j, start=j)
    return float(_affinities(p, q)[0])


def hellinger_factors(g1, g2, N: int, model: ModelSpec) -> np.ndarray:
    """h_1..h_N as an array."""
    if N < 1:
        raise ValueError("N must be at least 1")
    p, q = _rows(as_point(g1), as_point(g2), model, N)
    return _affinities(p, q)


def _log_product(factors: np.ndarray) -> float:
    if np.any(factors == 0.0):
        return -math.inf
    return math.fsum(np.log(factors))


def hellinger_product(g1, g2, N: int, model: ModelSpec) -> float:
    """
    Π_{j≤N} h_j.

    Accumulated in the log domain; any exactly-zero factor returns exactly 0.
    """
    return math.exp(_log_product(hellinger_factors(g1, g2, N, model)))


def hellinger_sum(g1, g2, N: int, model: ModelSpec) -> float:
    """H⁺ partial sum Σ_{j≤N} Σ_l (√β_jl(g′) − √β_jl(g″))²."""
    if N < 1:
        raise ValueError("N must be at least 1")
    p, q = _rows(as_point(g1), as_point(g2), model, N)
    return math.fsum(_sum_terms(p, q))


# ------------------------------------------------------------------
# Tail certificates
# ------------------------------------------------------------------

@dataclass(frozen=True)
class TailCertificate:
    """What the generator's closed form says about Σ_{j>horizon} (1 − h_j)."""
    kind: str
    rate: float | None = None
    detail: str = ""

    @property
    def divergent(self) -> bool:
        return self.kind in (TAIL_LINEAR, TAIL_POWER, TAIL_LOGARITHMIC)


def tail_certificate(g1, g2, model: ModelSpec) -> TailCertificate | None:
    """
    Certificate for the generated items, or None when the model has no generator.

    constant-tail: one tail affinity repeats forever, so H⁺ either grows
    linearly or stops at the horizon. Affine rows A + B/√j: different limits
    A give linear growth; equal A with different B give terms ≈ c/j with
    c = Σ_l (ΔB_l)² / (4 A_l), i.e. H⁺ ≈ c·ln N. periodic: the period's
    affinities repeat, so any h < 1 in it gives linear growth.
    """
    gen = model.generator
    if gen is None:
        return None
    a, b = as_point(g1).array, as_point(g2).array

    if gen.family == FAMILY_CONSTANT_TAIL:
        r1, r2 = a @ gen.tail, b @ gen.tail
        if np.all(np.abs(r1 - r2) <= TOL):
            return TailCertificate(TAIL_FINITE, detail="constant tails coincide")
        h = float(_affinities(np.clip(r1, 0, None)[None], np.clip(r2, 0, None)[None])[0])
        return TailCertificate(TAIL_LINEAR, rate=1.0 - h,
                               detail=f"constant tail affinity {h:.6g} < 1")

    if gen.family == FAMILY_PERIODIC:
        p, q = _rows(as_point(a), as_point(b), model, model.horizon)
        h = _affinities(p, q)
        deficit = float(np.sum(1.0 - h))
        if deficit > 0.0:
            return TailCertificate(TAIL_LINEAR, rate=deficit / model.horizon,
                                   detail=f"period of {model.horizon} items loses {deficit:.6g}")
        return TailCertificate(TAIL_FINITE, detail="periodic rows coincide")

    A1, A2 = a @ gen.center, b @ gen.center
    dB = a @ gen.slope - b @ gen.slope
    if np.any(np.abs(A1 - A2) > TOL):
        h = float(_affinities(np.clip(A1, 0, None)[None], np.clip(A2, 0, None)[None])[0])
        return TailCertificate(TAIL_LINEAR, rate=1.0 - h,
                               detail=f"limiting rows differ, limit affinity {h:.6g}")
    moving = np.abs(dB) > TOL
    if not np.any(moving):
        return TailCertificate(TAIL_FINITE, detail="generated rows coincide")
    if np.any(moving & (A1 <= TOL)):
        return TailCertificate(TAIL_POWER, detail="a limiting probability is 0, terms ~ 1/√j")
    c = float(np.sum(dB[moving] ** 2 / (4.0 * A1[moving])))
    return TailCertificate(TAIL_LOGARITHMIC, rate=c,
                           detail=f"terms ~ {c:.6g}/j, H⁺ ~ {c:.6g}·ln N")


# ------------------------------------------------------------------
# Verdicts
# ------------------------------------------------------------------

@dataclass
class HellingerReport:
    pair: tuple[tuple[float, ...], tuple[float, ...]]
    N: int
    factors: np.ndarray
    product: float
    log_product: float
    sum: float
    zero_factor_at: int | None
    verdict: str
    basis: dict = field(default_factory=dict)
    truncated: bool = False

    @property
    def orthogonal(self) -> bool:
        return self.verdict in ORTHOGONAL_VERDICTS

    def to_dict(self, include_factors: bool = False) -> dict:
        doc = {
            "pair": [list(self.pair[0]), list(self.pair[1])],
            "N": self.N,
            "truncated": self.truncated,
            "product_N": self.product,
            "log_product_N": self.log_product if math.isfinite(self.log_product) else None,
            "sum_N": self.sum,
            "zero_factor_at": self.zero_factor_at,
            "verdict": self.verdict,
            "verdict_basis": self.basis,
        }
        if include_factors:
            doc["factors"] = self.factors.tolist()
        return doc


def orthogonality_verdict(g1, g2, model: ModelSpec, N: int = DEFAULT_N,
                          decay_threshold: float = DEFAULT_DECAY_THRESHOLD,
                          floor_threshold: float = DEFAULT_FLOOR_THRESHOLD) -> HellingerReport:
    """
    Diagnose whether P_g′ ⊥ P_g″.

    Rules, first match wins:
      1. tail certificate says H⁺ diverges           → orthogonal-by-decay
      2. some h_j = 0 with j ≤ N                      → orthogonal-zero-factor
      3. tail certificate says finite, H > floor      → non-orthogonal
      4. log Π_{j≤N} h_j < log decay_threshold        → orthogonal-by-decay (heuristic)
      5. otherwise                                    → undecided

    Without a generator N is clamped to the horizon and the report is
    flagged truncated.
    """
    if decay_threshold <= 0 or floor_threshold <= 0:
        raise ValueError("Thresholds must be positive")
    if N < 1:
        raise ValueError("N must be at least 1")
    g1, g2 = as_point(g1), as_point(g2)

    depth = model.reach(N)
    truncated = depth < N
    p, q = _rows(g1, g2, model, depth)
    factors = _affinities(p, q)
    zeros = np.flatnonzero(factors == 0.0)
    zero_at = int(zeros[0]) + 1 if zeros.size else None
    log_product = _log_product(factors)
    product = math.exp(log_product)
    total = math.fsum(_sum_terms(p, q))

    thresholds = {"decay_threshold": decay_threshold, "floor_threshold": floor_threshold}
    cert = tail_certificate(g1, g2, model)

    if cert is not None and cert.divergent:
        verdict = VERDICT_DECAY
        basis = {"rule": "tail-certificate", "family": model.generator.family,
                 "growth": cert.kind, "rate": cert.rate, "detail": cert.detail}
    elif zero_at is not None:
        verdict = VERDICT_ZERO_FACTOR
        basis = {"rule": "zero-factor", "item": zero_at}
    elif cert is not None and cert.kind == TAIL_FINITE:
        head = factors[:model.horizon] if depth >= model.horizon else hellinger_factors(
            g1, g2, model.horizon, model)
        limit = math.exp(_log_product(head))
        basis = {"rule": "finite-tail", "family": model.generator.family,
                 "limit_product": limit, "detail": cert.detail}
        verdict = VERDICT_NON_ORTHOGONAL if limit > floor_threshold else VERDICT_UNDECIDED
    elif log_product < math.log(decay_threshold):
        verdict = VERDICT_DECAY
        basis = {"rule": "product-below-threshold", "heuristic": True}
    else:
        verdict = VERDICT_UNDECIDED
        basis = {"rule": "no-certificate", "heuristic": True}
    basis.update(thresholds)

    return HellingerReport(
        pair=(g1.coords, g2.coords),
        N=depth,
        factors=factors,
        product=product,
        log_product=log_product,
        sum=total,
        zero_factor_at=zero_at,
        verdict=verdict,
        basis=basis,
        truncated=truncated,
    )


# ------------------------------------------------------------------
# Pairwise scan
# ------------------------------------------------------------------

@dataclass
class PairScan:
    grid: list[LatentPoint]
    verdicts: list[list[str]]
    reports: dict[tuple[int, int], HellingerReport]
    thresholds: dict

    @property
    def off_diagonal(self) -> list[str]:
        n = len(self.grid)
        return [self.verdicts[i][j] for i in range(n) for j in range(i + 1, n)]

    @property
    def undecided_dominant(self) -> bool:
        """At least half of the distinct pairs came out undecided."""
        pairs = self.off_diagonal
        if not pairs:
            return False
        return 2 * sum(v == VERDICT_UNDECIDED for v in pairs) >= len(pairs)


def _scan_pair(task):
    model, g1, g2, N, decay_threshold, floor_threshold = task
    return orthogonality_verdict(g1, g2, model, N, decay_threshold, floor_threshold)


def pairwise_scan(model: ModelSpec, grid, N: int = DEFAULT_N,
                  decay_threshold: float = DEFAULT_DECAY_THRESHOLD,
                  floor_threshold: float = DEFAULT_FLOOR_THRESHOLD,
                  jobs: int = 1) -> PairScan:
    """
    Verdict for every pair of grid points.

    The matrix is symmetric; the diagonal is non-orthogonal (h ≡ 1).
    """
    grid = [as_point(g) for g in grid]
    for i, g in enumerate(grid):
        membership = in_Q(g, model)
        if not membership:
            raise ModelError(f"Grid point {i} {g.coords} lies outside Q")

    pairs = [(i, j) for i in range(len(grid)) for j in range(i + 1, len(grid))]
    logger.info(f"Scanning {len(pairs)} pairs at N = {N}")
    tasks = [(model, grid[i], grid[j], N, decay_threshold, floor_threshold) for i, j in pairs]
    results = parallel_map(_scan_pair, tasks, jobs)

    n = len(grid)
    verdicts = [[VERDICT_NON_ORTHOGONAL] * n for _ in range(n)]
    reports = {}
    for (i, j), report in zip(pairs, results):
        verdicts[i][j] = verdicts[j][i] = report.verdict
        reports[(i, j)] = report
        logger.debug(f"Pair ({i}, {j}): {report.verdict}")

    return PairScan(
        grid=grid,
        verdicts=verdicts,
        reports=reports,
        thresholds={"N": N, "decay_threshold": decay_threshold,
                    "floor_threshold": floor_threshold},
    )


# ------------------------------------------------------------------
# Inequality checks
# ------------------------------------------------------------------

@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool


def simple_inequality_check(a: float, b: float) -> InequalityCheck:
    """(3/2 − √2)(√a − √b)² ≤ (√((a+b)/2) − √b)² for a, b ∈ [0, 1]."""
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise DomainError(f"Arguments must lie in [0, 1], got a={a!r}, b={b!r}")
    lhs = SIMPLE_INEQUALITY_CONSTANT * (math.sqrt(a) - math.sqrt(b)) ** 2
    rhs = (math.sqrt((a + b) / 2.0) - math.sqrt(b)) ** 2
    return InequalityCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-15)


@dataclass(frozen=True)
class MidpointCheck:
    sum_pair: float
    sum_midpoint: float
    bound: float
    holds: bool


def midpoint_divergence_check(g1, g2, model: ModelSpec, N: int) -> MidpointCheck:
    """
    H⁺_N((g′+g″)/2, g″) ≥ (3/2 − √2)·H⁺_N(g′, g″), term by term.

    If H⁺(g′, g″) diverges, so does H⁺ between g″ and the midpoint.
    """
    g1, g2 = as_point(g1), as_point(g2)
    mid = LatentPoint.midpoint(g1, g2)
    if not in_Q(mid, model):
        raise ModelError(f"Midpoint {mid.coords} lies outside Q")
    depth = model.reach(N)
    sum_pair = hellinger_sum(g1, g2, depth, model)
    sum_mid = hellinger_sum(mid, g2, depth, model)
    bound = SIMPLE_INEQUALITY_CONSTANT * sum_pair
    return MidpointCheck(sum_pair=sum_pair, sum_midpoint=sum_mid, bound=bound,
                         holds=sum_mid >= bound - MIDPOINT_SLACK)


@dataclass(frozen=True)
class SupportCheck:
    holds: bool
    mismatch: tuple[int, int] | None = None


def interior_support_check(g1, g2, model: ModelSpec, N: int | None = None,
                           positions=(0.25, 0.5, 0.75)) -> SupportCheck:
    """
    Interior points of [g′, g″] share their zero pattern.

    Since β is affine along the segment, an entry can vanish at an interior
    point only if it vanishes on the whole segment; zeros that come and go
    happen at the endpoints only.
    """
    g1, g2 = as_point(g1), as_point(g2)
    depth = model.horizon if N is None else model.reach(N)
    points = np.vstack([LatentPoint.blend(g1, g2, t).array for t in positions])
    prof = model.profile(points, depth)
    counts = model.items.counts_range(depth)
    real = np.arange(model.lmax)[None, :] < counts[:, None]

    zero = prof <= TOL
    disagree = (zero.any(axis=0) & ~zero.all(axis=0)) & real
    bad = np.argwhere(disagree)
    if bad.size:
        j, l = (int(x) + 1 for x in bad[0])
        return SupportCheck(holds=False, mismatch=(j, l))
    return SupportCheck(holds=True)


def equivalence_bound_holds(report: HellingerReport) -> bool:
    """−ln Π h_j ≥ Σ (1 − h_j); vacuous when a factor is 0."""
    if report.zero_factor_at is not None:
        return True
    deficit = math.fsum(1.0 - report.factors)
    return -report.log_product >= deficit - 1e-12
