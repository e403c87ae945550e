"""
converge.py — Distances between measures on Q and the convergence curve.

Weak convergence of μ̂ₙ to μ is watched through two metrics:
  - wasserstein1_1d: exact W1 between weighted samples projected onto one
    coordinate or direction (effectively one-dimensional latent spaces)
  - energy_distance: 2E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖ for any K

convergence_curve runs R independent pushforward estimates per n and reads a
verdict off the resulting curve. Distances are compared against the noise
baseline: the distance an M-point sample of μ_ref itself shows, which is what
a perfect estimator would score.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from measure import MixingMeasure, refine_quadrature
from model import ModelSpec
from posterior import EmpiricalMeasureQ, pushforward_estimate
from workers import Seed, derive_seed, make_rng, parallel_map

logger = logging.getLogger(__name__)

METRIC_WASSERSTEIN = "wasserstein"
METRIC_ENERGY = "energy"
METRICS = (METRIC_WASSERSTEIN, METRIC_ENERGY)

# Exact energy distance up to this many point pairs; subsampled above
ENERGY_PAIR_BUDGET = 4_000_000
CDIST_CHUNK = 2048

# Replicate streams are (cell, i); the distance stream takes a two-part key
# so it never coincides with one of them.
DISTANCE_STREAM = (0, 0)

VERDICT_CONVERGING = "converging"
VERDICT_PLATEAU = "plateau"
VERDICT_UNDECIDED = "undecided"

# Verdict thresholds, echoed into every curve report
NOISE_SIGMAS = 4.0
DECAY_FACTOR = 5.0
FLOOR_SIGMAS_CONVERGING = 2.0
FLOOR_SIGMAS_PLATEAU = 5.0
TREND_T = 5.0
DROP_SIGMAS = 5.0
ZERO_DISTANCE = 1e-12


# ------------------------------------------------------------------
# Metrics
# ------------------------------------------------------------------

def _as_empirical(m) -> EmpiricalMeasureQ:
    if isinstance(m, MixingMeasure):
        return EmpiricalMeasureQ.from_mixing(m)
    return m


def project(e: EmpiricalMeasureQ, projection) -> np.ndarray:
    """Scalar values of each point: a coordinate index or a dot with a direction."""
    if isinstance(projection, (int, np.integer)):
        if not 0 <= projection < e.K:
            raise ValueError(f"Projection index {projection} is out of range for K = {e.K}")
        return e.points[:, int(projection)]
    direction = np.asarray(projection, dtype=float).ravel()
    if direction.shape[0] != e.K:
        raise ValueError(f"Projection direction has {direction.shape[0]} entries, K = {e.K}")
    return e.points @ direction


def wasserstein1_1d(e1, e2, projection=0) -> float:
    """Exact W1 between the projected weighted samples."""
    e1, e2 = _as_empirical(e1), _as_empirical(e2)
    return float(wasserstein_distance(
        project(e1, projection), project(e2, projection), e1.weights, e2.weights
    ))


def _mean_distance(x: np.ndarray, wx: np.ndarray, y: np.ndarray, wy: np.ndarray) -> float:
    total = 0.0
    for lo in range(0, x.shape[0], CDIST_CHUNK):
        d = cdist(x[lo:lo + CDIST_CHUNK], y)
        total += float(wx[lo:lo + CDIST_CHUNK] @ d @ wy)
    return total


def _subsample(e: EmpiricalMeasureQ, size: int, rng: np.random.Generator):
    if e.size <= size:
        return e.points, e.weights
    idx = rng.choice(e.size, size=size, replace=True, p=e.weights)
    return e.points[idx], np.full(size, 1.0 / size)


def energy_distance(e1, e2, seed: Seed = 0, budget: int = ENERGY_PAIR_BUDGET) -> float:
    """
    2E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖ over the weighted atoms.

    Exact while every pair count stays within budget; larger inputs are
    resampled by weight to √budget points each using the given seed.
    """
    e1, e2 = _as_empirical(e1), _as_empirical(e2)
    x, wx, y, wy = e1.points, e1.weights, e2.points, e2.weights
    if max(e1.size, e2.size) ** 2 > budget:
        rng = make_rng(seed)
        size = int(math.isqrt(budget))
        x, wx = _subsample(e1, size, rng)
        y, wy = _subsample(e2, size, rng)
        logger.debug(f"Energy distance subsampled to {size} points per side")
    d = (2.0 * _mean_distance(x, wx, y, wy)
         - _mean_distance(x, wx, x, wx)
         - _mean_distance(y, wy, y, wy))
    return max(d, 0.0)


def distance(e1, e2, metric: str, projection=0, seed: Seed = 0) -> float:
    if metric == METRIC_WASSERSTEIN:
        return wasserstein1_1d(e1, e2, projection)
    if metric == METRIC_ENERGY:
        return energy_distance(e1, e2, seed)
    raise ValueError(f"Unknown metric {metric!r}; expected one of {', '.join(METRICS)}")


# ------------------------------------------------------------------
# Convergence curve
# ------------------------------------------------------------------

@dataclass(frozen=True)
class CurveRow:
    n: int
    M: int
    R: int
    mean: float
    stderr: float


@dataclass
class ConvergenceCurve:
    scenario: str
    metric: str
    rows: list[CurveRow]
    verdict: str
    stats: dict = field(default_factory=dict)
    distances: np.ndarray | None = None

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean for r in self.rows])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([r.stderr for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "metric": self.metric,
            "verdict": self.verdict,
            "rows": [
                {"n": r.n, "M": r.M, "R": r.R, "mean_distance": r.mean, "stderr": r.stderr}
                for r in self.rows
            ],
            **self.stats,
        }


def _stderr(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def _pooled(values: np.ndarray, errors: np.ndarray) -> tuple[float, float]:
    """Inverse-variance weighted mean and its standard error."""
    if np.all(errors > 0):
        w = 1.0 / errors**2
        return float(w @ values / w.sum()), float(1.0 / math.sqrt(w.sum()))
    return float(values.mean()), float(np.sqrt(np.mean(errors**2) / values.size))


def _trend(n_grid: np.ndarray, means: np.ndarray, errors: np.ndarray) -> tuple[float, float, float]:
    """Least-squares slope of mean distance on ln n, its standard error and -slope/se."""
    if n_grid.size < 2:
        return 0.0, 0.0, 0.0
    x = np.log(n_grid.astype(float))
    dx = x - x.mean()
    sxx = float(dx @ dx)
    slope = float(dx @ (means - means.mean()) / sxx)
    se = float(math.sqrt(float((dx**2) @ (errors**2))) / sxx)
    if se == 0.0:
        t = math.inf if slope < 0 else 0.0
    else:
        t = -slope / se
    return slope, se, t


def classify_curve(n_grid, means, errors, baseline: float, baseline_se: float) -> tuple[str, dict]:
    """
    Verdict from a curve of mean distances and their standard errors.

    Works on the excess over the noise baseline. Converging when the excess
    is already at noise level, or it drops by DECAY_FACTOR into a floor
    indistinguishable from 0, or there is a significant downward trend in
    ln n. Plateau when the floor sits well above noise with no such trend.
    """
    n_grid = np.asarray(n_grid)
    means = np.asarray(means, dtype=float)
    errors = np.asarray(errors, dtype=float)
    excess = means - baseline
    excess_se = np.sqrt(errors**2 + baseline_se**2)

    pooled, pooled_se = _pooled(excess, excess_se)
    tail = slice(len(means) // 2, None)
    floor, floor_se = _pooled(means[tail], errors[tail])
    floor_excess = floor - baseline
    floor_excess_se = math.sqrt(floor_se**2 + baseline_se**2)
    slope, slope_se, t = _trend(n_grid, means, errors)
    drop_se = math.sqrt(excess_se[0] ** 2 + excess_se[-1] ** 2)

    if np.all(means <= ZERO_DISTANCE) or abs(pooled) <= max(NOISE_SIGMAS * pooled_se, ZERO_DISTANCE):
        verdict, route = VERDICT_CONVERGING, "noise-floor"
    elif (excess[-1] < excess[0] / DECAY_FACTOR
          and abs(floor_excess) <= FLOOR_SIGMAS_CONVERGING * floor_excess_se):
        verdict, route = VERDICT_CONVERGING, "decay-factor"
    elif t >= TREND_T and excess[-1] < excess[0] - DROP_SIGMAS * drop_se:
        verdict, route = VERDICT_CONVERGING, "trend"
    elif floor_excess > FLOOR_SIGMAS_PLATEAU * floor_excess_se and t < TREND_T:
        verdict, route = VERDICT_PLATEAU, "floor"
    else:
        verdict, route = VERDICT_UNDECIDED, None

    stats = {
        "route": route,
        "baseline": baseline,
        "baseline_stderr": baseline_se,
        "pooled_excess": pooled,
        "pooled_excess_stderr": pooled_se,
        "floor": floor,
        "floor_stderr": floor_se,
        "floor_excess": floor_excess,
        "slope_log_n": slope,
        "slope_stderr": slope_se,
        "trend_t": t if math.isfinite(t) else None,
        "thresholds": {
            "noise_sigmas": NOISE_SIGMAS,
            "decay_factor": DECAY_FACTOR,
            "floor_sigmas_converging": FLOOR_SIGMAS_CONVERGING,
            "floor_sigmas_plateau": FLOOR_SIGMAS_PLATEAU,
            "trend_t": TREND_T,
            "drop_sigmas": DROP_SIGMAS,
            "zero_distance": ZERO_DISTANCE,
        },
    }
    return verdict, stats


def _curve_cell(task) -> float:
    kind, mu, model, ref, n, M, metric, projection, cell_seed = task
    if kind == "baseline":
        rng = make_rng(cell_seed)
        idx = rng.choice(ref.size, size=M, replace=True, p=ref.weights)
        estimate = EmpiricalMeasureQ(ref.points[idx])
    else:
        estimate = pushforward_estimate(mu, model, n, M, cell_seed)
    return distance(estimate, ref, metric, projection, distance_seed(cell_seed))


def distance_seed(cell_seed: Seed) -> np.random.SeedSequence:
    return derive_seed(cell_seed, *DISTANCE_STREAM)


def convergence_curve(model: ModelSpec, mu: MixingMeasure, mu_ref: MixingMeasure,
                      n_grid, M: int, R: int, metric: str, seed: Seed,
                      projection=0, jobs: int = 1, scenario: str = "") -> ConvergenceCurve:
    """
    d(μ̂ₙ, μ_ref) for each n in n_grid, R repeats of M replicates each.

    Cell (k, r) uses the stream derived from (seed, k, r); the baseline
    repeats use (seed, len(n_grid), r). Results don't depend on jobs.
    """
    n_grid = [int(n) for n in n_grid]
    if not n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
        raise ValueError("n_grid must be strictly increasing positive integers")
    if M < 1 or R < 1:
        raise ValueError("M and R must be at least 1")
    if metric not in METRICS:
        raise ValueError(f"Unknown metric {metric!r}; expected one of {', '.join(METRICS)}")
    for n in n_grid:
        if model.reach(n) < n:
            raise ValueError(f"n = {n} is beyond the model horizon {model.horizon}")

    ref = EmpiricalMeasureQ.from_mixing(mu_ref)
    tasks = [
        ("estimate", mu, model, ref, n, M, metric, projection, derive_seed(seed, k, r))
        for k, n in enumerate(n_grid) for r in range(R)
    ]
    tasks += [
        ("baseline", mu, model, ref, 0, M, metric, projection, derive_seed(seed, len(n_grid), r))
        for r in range(R)
    ]
    logger.info(f"Convergence curve: {len(n_grid)} grid points x {R} repeats, M = {M}")
    results = np.array(parallel_map(_curve_cell, tasks, jobs))

    table = results[:len(n_grid) * R].reshape(len(n_grid), R)
    base = results[len(n_grid) * R:]
    rows = [
        CurveRow(n=n, M=M, R=R, mean=float(table[k].mean()), stderr=_stderr(table[k]))
        for k, n in enumerate(n_grid)
    ]
    for row in rows:
        logger.debug(f"n = {row.n}: {row.mean:.6g} ± {row.stderr:.2g}")

    verdict, stats = classify_curve(
        n_grid, [r.mean for r in rows], [r.stderr for r in rows],
        float(base.mean()), _stderr(base),
    )
    stats["projection"] = projection if isinstance(projection, int) else list(projection)
    return ConvergenceCurve(scenario, metric, rows, verdict, stats, table)


def discretization_error(mu_ref: MixingMeasure, model: ModelSpec, metric: str,
                         projection=0, seed: Seed = 0) -> float | None:
    """Distance between a quadrature μ_ref and its 2× refinement; None if not a quadrature."""
    finer = refine_quadrature(mu_ref, model, 2)
    if finer is None:
        return None
    return distance(mu_ref, finer, metric, projection, seed)
