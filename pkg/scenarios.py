"""
scenarios.py — Built-in models with known answers.

Each scenario bundles a model, a mixing measure, a reference measure for the
convergence curve, a grid of latent points for pair scans, default run
parameters and the diagnosis the lab is expected to reach. Scalar latent
examples are embedded in the K = 2 hyperplane; the embedding travels with
the scenario so projections can map back to the scalar.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from converge import VERDICT_CONVERGING, VERDICT_PLATEAU
from hellinger import VERDICT_DECAY, VERDICT_NON_ORTHOGONAL, VERDICT_ZERO_FACTOR
from measure import MixingMeasure, uniform_segment_quadrature
from model import (
    FAMILY_CONSTANT_TAIL, FAMILY_PERIODIC, FAMILY_SQRT_DECAY, Generator, LatentPoint,
    ModelSpec, as_point, points_array,
)
from workers import Seed, make_rng

logger = logging.getLogger(__name__)

DEFAULT_QUADRATURE = 400
REMARK_FLOOR = 5.0 / 36.0

EMBED_UNIT = "unit-interval"
EMBED_SYMMETRIC = "symmetric"

RANDOM_SEPARATED = "separated"
RANDOM_TAIL_CONSTANT = "tail-constant"

# Rejection attempts before a random family is declared infeasible
MAX_ATTEMPTS = 200


class InfeasibleScenarioError(ValueError):
    """Requested random-family parameters can't be satisfied."""


# ------------------------------------------------------------------
# Types
# ------------------------------------------------------------------

@dataclass(frozen=True)
class Embedding:
    """Map from a scalar latent value s to a point on the K = 2 hyperplane."""
    name: str

    def embed(self, s: float) -> LatentPoint:
        if self.name == EMBED_UNIT:
            return LatentPoint((s, 1.0 - s))
        if self.name == EMBED_SYMMETRIC:
            return LatentPoint(((1.0 + s) / 2.0, (1.0 - s) / 2.0))
        raise ValueError(f"Unknown embedding {self.name!r}")

    def scalar(self, g) -> float:
        g = as_point(g)
        if self.name == EMBED_UNIT:
            return g.coords[0]
        return g.coords[0] - g.coords[1]

    @property
    def projection(self):
        """Projection that reads the scalar back off an embedded point."""
        return 0 if self.name == EMBED_UNIT else [1.0, -1.0]


@dataclass
class Scenario:
    id: str
    description: str
    model: ModelSpec
    mixing: MixingMeasure
    grid: list[LatentPoint]
    expected: dict
    reference: MixingMeasure | None = None
    embedding: Embedding | None = None
    defaults: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mixing.check(self.model)
        if self.reference is None:
            self.reference = self.mixing
        else:
            self.reference.check(self.model)

    @property
    def projection(self):
        return self.embedding.projection if self.embedding else 0

    def point(self, s: float) -> LatentPoint:
        if self.embedding is None:
            raise ValueError(f"Scenario {self.id} has no scalar embedding")
        return self.embedding.embed(s)


def _curve_defaults(**overrides) -> dict:
    defaults = {
        "n_grid": [10, 50, 200, 400],
        "M": 2000,
        "R": 10,
        "metric": "wasserstein",
        "N": 10_000,
        "J": 2,
    }
    defaults.update(overrides)
    return defaults


# ------------------------------------------------------------------
# Two-item-layout family: item 1 decides, every later item is a fair coin
# ------------------------------------------------------------------

def _coin_tail_model() -> ModelSpec:
    tail = Generator(FAMILY_CONSTANT_TAIL, {"tail": [[0.5, 0.5], [0.5, 0.5]]})
    return ModelSpec.build([[(1.0, 0.0)], [(0.0, 1.0)]], generator=tail)


def scenario_binary_counterexample() -> Scenario:
    """
    λ¹ = (1,0 | ½,½ | ...), λ² = (0,1 | ½,½ | ...), μ = ½δ_g′ + ½δ_g″.

    The first item alone separates the two atoms: H = 0 and H⁺ = 2.
    """
    model = _coin_tail_model()
    embedding = Embedding(EMBED_UNIT)
    g1, g2 = embedding.embed(1.0), embedding.embed(0.0)
    mixing = MixingMeasure.create([g1, g2], [0.5, 0.5], model)
    return Scenario(
        id="binary-counterexample",
        description=SCENARIO_NOTES["binary-counterexample"][0],
        model=model,
        mixing=mixing,
        grid=[g1, g2],
        expected={
            "orthogonality": VERDICT_ZERO_FACTOR,
            "convergence": VERDICT_CONVERGING,
            "constants": {"hellinger_product": 0.0, "hellinger_sum": 2.0, "zero_factor_at": 1},
        },
        embedding=embedding,
        defaults=_curve_defaults(),
    )


def remark_posterior_values(q: int) -> tuple[float, float]:
    """First coordinate of e_n after a_1 = 2 and a_1 = 1 under a q-atom midpoint quadrature."""
    correction = 1.0 / (6.0 * q * q)
    return 1.0 / 3.0 + correction, 2.0 / 3.0 - correction


def scenario_remark_tail_equivalent(quadrature: int = DEFAULT_QUADRATURE) -> Scenario:
    """
    Same basis as the binary counterexample with μ uniform on Q = [0, 1].

    Interior points share the coin tail, so P_¼ ∼ P_¾ and μ̂ₙ never gets past
    ½δ_{1/3} + ½δ_{2/3}: the curve stalls at W1 = 5/36.
    """
    model = _coin_tail_model()
    embedding = Embedding(EMBED_UNIT)
    mixing = uniform_segment_quadrature(model, embedding.embed(0.0), embedding.embed(1.0),
                                        quadrature)
    refinement = {q: list(remark_posterior_values(q)) for q in (100, 200, 400, 800)}
    return Scenario(
        id="remark-tail-equivalent",
        description=SCENARIO_NOTES["remark-tail-equivalent"][0],
        model=model,
        mixing=mixing,
        grid=[embedding.embed(s) for s in (0.25, 0.5, 0.75)],
        expected={
            "orthogonality": VERDICT_NON_ORTHOGONAL,
            "convergence": VERDICT_PLATEAU,
            "constants": {
                "floor": REMARK_FLOOR,
                "limit_support": [1.0 / 3.0, 2.0 / 3.0],
                "quadrature_size": quadrature,
                "quadrature_support": list(remark_posterior_values(quadrature)),
                "refinement": refinement,
            },
        },
        embedding=embedding,
        defaults=_curve_defaults(),
    )


def sqrt_decay_rows(horizon: int) -> list[list[tuple[float, float]]]:
    """Tabulated λ¹, λ² with P(X_j = 1) = ½ ± 1/(2√j)."""
    lam1, lam2 = [], []
    for j in range(1, horizon + 1):
        d = 0.5 / math.sqrt(j)
        lam1.append((0.5 + d, 0.5 - d))
        lam2.append((0.5 - d, 0.5 + d))
    return [lam1, lam2]


def scenario_sqrt_decay(horizon: int = 8) -> Scenario:
    """
    P_g(X_j = 1) = ½ + g/(2√j) on Q = [−1, 1].

    Every pair of distinct points is orthogonal, but only just: H⁺ grows
    like ((g − g′)²/4)·ln N.
    """
    model = ModelSpec.build(sqrt_decay_rows(horizon), generator=Generator(FAMILY_SQRT_DECAY))
    embedding = Embedding(EMBED_SYMMETRIC)
    atoms = [embedding.embed(s) for s in (-0.8, 0.0, 0.7)]
    mixing = MixingMeasure.create(atoms, [0.3, 0.4, 0.3], model)
    return Scenario(
        id="sqrt-decay",
        description=SCENARIO_NOTES["sqrt-decay"][0],
        model=model,
        mixing=mixing,
        grid=[embedding.embed(s) for s in (-1.0, -0.5, 0.0, 0.5, 1.0)],
        expected={
            "orthogonality": VERDICT_DECAY,
            "convergence": VERDICT_CONVERGING,
            "constants": {"growth_rate": "(g - g')^2 / 4", "drift_exponent": 0.75},
        },
        embedding=embedding,
        defaults=_curve_defaults(),
    )


# ------------------------------------------------------------------
# Random families
# ------------------------------------------------------------------

def _random_rows(rng: np.random.Generator, K: int, items: int, categories: int,
                 concentration: float) -> np.ndarray:
    return rng.dirichlet(np.full(categories, concentration), size=(K, items))


def _min_separation(rows: np.ndarray) -> float:
    """Smallest L1 distance between two basis rows at the same item."""
    K = rows.shape[0]
    gaps = [np.abs(rows[a] - rows[b]).sum(axis=-1).min()
            for a in range(K) for b in range(a + 1, K)]
    return float(min(gaps)) if gaps else math.inf


def scenario_random(family: str = RANDOM_SEPARATED, K: int = 2, items: int = 6,
                    categories: int = 2, atoms: int = 2, separation: float = 0.2,
                    concentration: float = 5.0, seed: Seed = 0) -> Scenario:
    """
    Random basis and mixing measure, fully determined by the seed.

    "separated": `items` random rows repeated periodically, every item's
    basis rows at least `separation` apart in L1. Distinct atoms stay
    distinguishable at every item, so pairs are orthogonal.
    "tail-constant": `items` informative rows, then one shared row for
    every basis vector; the estimator's information stops after `items`.
    """
    if family not in (RANDOM_SEPARATED, RANDOM_TAIL_CONSTANT):
        raise InfeasibleScenarioError(f"Unknown random family {family!r}")
    if K < 2 or items < 1 or categories < 2 or atoms < 1:
        raise InfeasibleScenarioError("Need K ≥ 2, items ≥ 1, categories ≥ 2, atoms ≥ 1")
    if K > items * (categories - 1) + 1:
        raise InfeasibleScenarioError(
            f"K = {K} independent profiles don't fit in {items} items of {categories} categories"
        )
    if separation < 0 or separation >= 2:
        raise InfeasibleScenarioError(f"Separation {separation} is outside [0, 2)")

    rng = make_rng(seed)
    for attempt in range(MAX_ATTEMPTS):
        rows = _random_rows(rng, K, items, categories, concentration)
        if family == RANDOM_TAIL_CONSTANT or _min_separation(rows) >= separation:
            break
    else:
        raise InfeasibleScenarioError(
            f"No basis with separation {separation} found in {MAX_ATTEMPTS} attempts"
        )

    if family == RANDOM_SEPARATED:
        generator = Generator(FAMILY_PERIODIC)
    else:
        shared = rng.dirichlet(np.full(categories, concentration))
        generator = Generator(FAMILY_CONSTANT_TAIL, {"tail": [shared.tolist()] * K})

    try:
        model = ModelSpec.build([[tuple(r) for r in rows[k]] for k in range(K)],
                                generator=generator)
    except ValueError as e:
        raise InfeasibleScenarioError(f"Random basis is unusable: {e}") from e

    points = rng.dirichlet(np.ones(K), size=atoms)
    points[:, -1] = 1.0 - points[:, :-1].sum(axis=1)
    weights = rng.dirichlet(np.ones(atoms))
    mixing = MixingMeasure(points, weights / weights.sum())
    mixing.check(model)

    if family == RANDOM_SEPARATED:
        expected = {"orthogonality": VERDICT_DECAY, "convergence": VERDICT_CONVERGING}
        n_grid = [10, 50, 200, 400]
    else:
        expected = {"orthogonality": VERDICT_NON_ORTHOGONAL, "convergence": VERDICT_PLATEAU}
        n_grid = [items, 4 * items, 16 * items]
    expected["constants"] = {"min_separation": _min_separation(rows)}

    logger.debug(f"Random {family} scenario after {attempt + 1} attempt(s)")
    return Scenario(
        id=f"random-{family}",
        description=f"Random {family} family: K={K}, {items} items, {atoms} atoms.",
        model=model,
        mixing=mixing,
        grid=mixing.points,
        expected=expected,
        defaults=_curve_defaults(n_grid=n_grid, M=500, R=5, metric="energy", J=min(items, 4)),
    )


# ------------------------------------------------------------------
# Helpers
# ------------------------------------------------------------------

def lln_drift(model: ModelSpec, g1, g2, n: int, exponent: float = 0.75) -> float:
    """|Σ_{j≤n} β_j1(g′) − Σ_{j≤n} β_j1(g″)| / n^exponent."""
    coords = points_array([g1, g2])
    first = model.profile(coords, n)[:, :, 0]
    return abs(math.fsum(first[0]) - math.fsum(first[1])) / n**exponent


def random_points(model: ModelSpec, count: int, seed: Seed) -> list[LatentPoint]:
    """Uniform points in the simplex spanned by the basis vertices (always inside Q)."""
    rng = make_rng(seed)
    pts = rng.dirichlet(np.ones(model.K), size=count)
    pts[:, -1] = 1.0 - pts[:, :-1].sum(axis=1)
    return [LatentPoint(tuple(p)) for p in pts]


# ------------------------------------------------------------------
# Registry
# ------------------------------------------------------------------

# id -> (description, anchor naming the known result the scenario reproduces)
SCENARIO_NOTES: dict[str, tuple[str, str]] = {
    "binary-counterexample": (
        "Binary items where item 1 is (1,0) vs (0,1) and every later item a fair coin, "
        "so the two atoms are orthogonal through a single zero factor.",
        "zero-factor counterexample (H = 0, H+ = 2)",
    ),
    "remark-tail-equivalent": (
        "Uniform mixing over [0, 1] on the single-informative-item basis, "
        "where interior pairs are equivalent and the estimator plateaus.",
        "tail-equivalence counterexample (W1 floor 5/36)",
    ),
    "sqrt-decay": (
        "Binary items with P(X_j = 1) = 1/2 + g/(2 sqrt j) on [-1, 1], "
        "where all pairs are orthogonal with logarithmically growing H+.",
        "binary law-of-large-numbers example (H+ ~ (g - g')^2 ln N / 4)",
    ),
    "random": (
        "Seeded random models: separated rows that decay to orthogonality, "
        "or a constant tail that keeps atoms equivalent.",
        "synthetic",
    ),
}

SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "binary-counterexample": scenario_binary_counterexample,
    "remark-tail-equivalent": scenario_remark_tail_equivalent,
    "sqrt-decay": scenario_sqrt_decay,
    "random": scenario_random,
}


def get_scenario(scenario_id: str, params: dict | None = None) -> Scenario:
    if scenario_id not in SCENARIOS:
        raise KeyError(
            f"Unknown scenario {scenario_id!r}; expected one of {', '.join(SCENARIOS)}"
        )
    return SCENARIOS[scenario_id](**(params or {}))


def list_scenarios() -> list[tuple[str, str, str]]:
    """(id, one-sentence description, anchor) for every registered constructor."""
    return [(sid, *SCENARIO_NOTES[sid]) for sid in SCENARIOS]
