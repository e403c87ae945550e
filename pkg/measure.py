"""
measure.py — Independent measures P_g, mixtures and sampling.

Provides:
  - Cylinder, OutcomeSequence, MixingMeasure
  - cylinder_prob / mixture_cylinder_prob: P_g(C) = Π β_{j,l}(g) and its
    μ-average Σ_i w_i P_{g_i}(C)
  - sample_outcomes / sample_joint / sample_joint_batch: seeded draws from
    P_g and from the joint law of (G, a)
  - finite_robbins_identity: ∫ f dP_μ = Σ_i w_i ∫ f dP_{g_i} by exact
    enumeration over the first n items
  - uniform_segment_quadrature: atomic stand-in for a uniform μ on a segment

Continuous mixing measures are always carried as quadrature atoms, so every
integral against μ is a finite sum.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from model import (
    TOL, LatentPoint, ModelSpec, StructureError, as_point, in_Q, points_array,
)
from workers import Seed, make_rng

logger = logging.getLogger(__name__)

# Exact enumeration refuses more than this many outcome sequences
MAX_ENUMERATION = 10**6

KIND_DISCRETE = "discrete"
KIND_QUADRATURE = "quadrature"

DENSITY_UNIFORM_SEGMENT = "uniform-segment"


class EnumerationBudgetError(ValueError):
    """Exact enumeration would exceed MAX_ENUMERATION outcome sequences."""


# ------------------------------------------------------------------
# Types
# ------------------------------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    """Finite set of constraints X_j = l (1-based items and categories)."""
    assignments: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        pairs = tuple(sorted((int(j), int(l)) for j, l in self.assignments))
        items = [j for j, _ in pairs]
        if len(set(items)) != len(items):
            raise StructureError(f"Cylinder constrains an item twice: {pairs}")
        if any(j < 1 or l < 1 for j, l in pairs):
            raise StructureError(f"Cylinder indices are 1-based: {pairs}")
        object.__setattr__(self, "assignments", pairs)

    @classmethod
    def from_map(cls, mapping: dict[int, int]) -> "Cylinder":
        return cls(tuple(mapping.items()))

    def check(self, model: ModelSpec):
        for j, l in self.assignments:
            L = model.items.count(j)
            if l > L:
                raise StructureError(f"Category {l} is out of range 1..{L} at item {j}")


@dataclass(frozen=True)
class OutcomeSequence:
    """Observed categories a_1..a_n (1-based)."""
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(a) for a in self.values))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=int)

    def check(self, model: ModelSpec):
        """Raise StructureError unless every a_j lies in 1..L_j."""
        n = len(self.values)
        if n == 0:
            return
        counts = model.items.counts_range(n)
        a = self.array
        bad = np.flatnonzero((a < 1) | (a > counts))
        if bad.size:
            j = int(bad[0])
            raise StructureError(
                f"Category {a[j]} is out of range 1..{counts[j]} at item {j + 1}"
            )


@dataclass(frozen=True, eq=False)
class MixingMeasure:
    """
    Finite atomic measure Σ_i w_i δ_{g_i} on Q.

    kind is "discrete" for genuinely atomic μ, "quadrature" when the atoms
    stand in for a density; descriptor then says which one.
    """
    atoms: np.ndarray
    weights: np.ndarray
    kind: str = KIND_DISCRETE
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != weights.shape[0]:
            raise StructureError(f"{atoms.shape[0]} atoms but {weights.shape[0]} weights")
        if np.any(weights <= 0):
            raise StructureError("Mixing weights must be strictly positive")
        if abs(math.fsum(weights) - 1.0) > TOL:
            raise StructureError(f"Mixing weights sum to {math.fsum(weights)!r}, not 1")
        if np.any(np.abs(atoms.sum(axis=1) - 1.0) > TOL):
            raise StructureError("Every atom must satisfy Σ g_k = 1")
        if self.kind not in (KIND_DISCRETE, KIND_QUADRATURE):
            raise StructureError(f"Unknown mixing kind {self.kind!r}")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def create(cls, points, weights, model: ModelSpec, kind: str = KIND_DISCRETE,
               descriptor: dict | None = None) -> "MixingMeasure":
        """Build and check every atom is in Q."""
        mu = cls(points_array(points), weights, kind, dict(descriptor or {}))
        mu.check(model)
        return mu

    @classmethod
    def dirac(cls, g, model: ModelSpec) -> "MixingMeasure":
        return cls.create([g], [1.0], model)

    def check(self, model: ModelSpec):
        if self.K != model.K:
            raise StructureError(f"Atoms have {self.K} coordinates, model has K = {model.K}")
        for i, g in enumerate(self.points):
            membership = in_Q(g, model)
            if not membership:
                v = membership.violation
                raise StructureError(
                    f"Atom {i} lies outside Q (item {v.item}, category {v.category}, "
                    f"β = {v.value!r})"
                )

    @property
    def K(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def points(self) -> list[LatentPoint]:
        return [LatentPoint(tuple(row)) for row in self.atoms]

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def blend(self, other: "MixingMeasure", alpha: float) -> "MixingMeasure":
        """α·self + (1 - α)·other as one atomic measure."""
        atoms = np.vstack([self.atoms, other.atoms])
        weights = np.concatenate([alpha * self.weights, (1 - alpha) * other.weights])
        keep = weights > 0
        weights = weights[keep] / weights[keep].sum()
        return MixingMeasure(atoms[keep], weights, KIND_DISCRETE)

    def to_dict(self) -> dict:
        doc = {
            "atoms": [{"g": list(map(float, g)), "w": float(w)}
                      for g, w in zip(self.atoms, self.weights)],
            "kind": self.kind,
        }
        if self.descriptor:
            doc["descriptor"] = self.descriptor
        return doc

    @classmethod
    def from_dict(cls, doc: dict, model: ModelSpec | None = None) -> "MixingMeasure":
        if "atoms" not in doc:
            raise StructureError("Mixing document is missing 'atoms'")
        points = [a["g"] for a in doc["atoms"]]
        weights = [a["w"] for a in doc["atoms"]]
        kind = doc.get("kind", KIND_DISCRETE)
        mu = cls(np.array(points, dtype=float), weights, kind, dict(doc.get("descriptor") or {}))
        if model is not None:
            mu.check(model)
        return mu


# ------------------------------------------------------------------
# Quadrature
# ------------------------------------------------------------------

def uniform_segment_quadrature(model: ModelSpec, start, end, size: int) -> MixingMeasure:
    """Uniform μ on the segment [start, end] of Q, as `size` midpoint atoms."""
    if size < 1:
        raise ValueError("Quadrature needs at least one atom")
    a, b = as_point(start).array, as_point(end).array
    t = (np.arange(size) + 0.5) / size
    atoms = (1.0 - t)[:, None] * a + t[:, None] * b
    atoms[:, -1] = 1.0 - atoms[:, :-1].sum(axis=1)
    weights = np.full(size, 1.0 / size)
    weights /= weights.sum()
    descriptor = {
        "density": DENSITY_UNIFORM_SEGMENT,
        "start": a.tolist(),
        "end": b.tolist(),
        "size": size,
    }
    mu = MixingMeasure(atoms, weights, KIND_QUADRATURE, descriptor)
    mu.check(model)
    return mu


def refine_quadrature(mu: MixingMeasure, model: ModelSpec, factor: int = 2) -> MixingMeasure | None:
    """Same density at `factor` times the atoms, or None if μ can't be rebuilt."""
    d = mu.descriptor
    if mu.kind != KIND_QUADRATURE or d.get("density") != DENSITY_UNIFORM_SEGMENT:
        return None
    return uniform_segment_quadrature(model, d["start"], d["end"], int(d["size"]) * factor)


# ------------------------------------------------------------------
# Cylinder probabilities
# ------------------------------------------------------------------

def _cylinder_factors(coords: np.ndarray, c: Cylinder, model: ModelSpec) -> np.ndarray:
    c.check(model)
    if not c.assignments:
        return np.ones(coords.shape[:-1] + (0,))
    last = c.assignments[-1][0]
    prof = model.profile(coords, last)
    js = np.array([j - 1 for j, _ in c.assignments])
    ls = np.array([l - 1 for _, l in c.assignments])
    return prof[..., js, ls]


def cylinder_prob(g, c: Cylinder, model: ModelSpec) -> float:
    """P_g(X_j1 = l1, ..., X_jp = lp) = Π β_{j,l}(g)."""
    g = as_point(g)
    return float(np.prod(_cylinder_factors(g.array, c, model)))


def mixture_cylinder_prob(mu: MixingMeasure, c: Cylinder, model: ModelSpec) -> float:
    """P_μ(C) = Σ_i w_i P_{g_i}(C)."""
    factors = _cylinder_factors(mu.atoms, c, model)
    return float(mu.weights @ np.prod(factors, axis=-1))


# ------------------------------------------------------------------
# Sampling
# ------------------------------------------------------------------

def _cumulative(profile: np.ndarray) -> np.ndarray:
    return np.cumsum(profile, axis=-1)


def _draw(rng: np.random.Generator, cum: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """One outcome per item by inversion; cum is (n, L) cumulative rows."""
    u = rng.random(cum.shape[0])
    a = (u[:, None] >= cum).sum(axis=1) + 1
    return np.minimum(a, counts)


def sample_outcomes(g, n: int, model: ModelSpec, seed: Seed) -> OutcomeSequence:
    """a_1..a_n drawn independently from the rows of β(g)."""
    g = as_point(g)
    if n == 0:
        return OutcomeSequence(())
    cum = _cumulative(model.profile(g.array, n))
    counts = model.items.counts_range(n)
    return OutcomeSequence(tuple(_draw(make_rng(seed), cum, counts)))


def sample_joint_batch(mu: MixingMeasure, n: int, model: ModelSpec, size: int,
                       seed: Seed, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw replicates start..start+size-1 of (G, a_1..a_n).

    Replicate i uses the stream derived from (seed, i), so any split of the
    index range across workers reproduces the same draws.

    Returns:
        (atom indices shape (size,), outcomes shape (size, n), 1-based)
    """
    cumw = np.cumsum(mu.weights)
    counts = model.items.counts_range(n)
    cum = _cumulative(model.profile(mu.atoms, n)) if n else None

    idx = np.empty(size, dtype=int)
    outcomes = np.empty((size, n), dtype=int)
    for r in range(size):
        rng = make_rng(seed, start + r)
        i = min(int(np.searchsorted(cumw, rng.random() * cumw[-1], side="right")), mu.size - 1)
        idx[r] = i
        if n:
            outcomes[r] = _draw(rng, cum[i], counts)
    return idx, outcomes


def sample_joint(mu: MixingMeasure, n: int, model: ModelSpec,
                 seed: Seed) -> tuple[LatentPoint, OutcomeSequence]:
    """One draw from ν: G ~ μ, then a ~ P_G."""
    idx, outcomes = sample_joint_batch(mu, n, model, 1, seed)
    return mu.points[idx[0]], OutcomeSequence(tuple(outcomes[0]))


# ------------------------------------------------------------------
# Exact enumeration
# ------------------------------------------------------------------

def enumerate_outcomes(model: ModelSpec, n: int) -> np.ndarray:
    """Every length-n outcome sequence, lexicographic, shape (S, n)."""
    counts = model.items.counts_range(n)
    total = math.prod(int(c) for c in counts)
    if total > MAX_ENUMERATION:
        raise EnumerationBudgetError(
            f"{total} outcome sequences over {n} items exceeds the budget of {MAX_ENUMERATION}"
        )
    if n == 0:
        return np.zeros((1, 0), dtype=int)
    return np.indices(tuple(counts)).reshape(n, -1).T + 1


def sequence_probs(atoms: np.ndarray, model: ModelSpec, n: int) -> np.ndarray:
    """P_{g_i}(a) for every atom and every enumerated sequence, shape (A, S)."""
    atoms = np.atleast_2d(atoms)
    counts = model.items.counts_range(n)
    total = math.prod(int(c) for c in counts)
    if total > MAX_ENUMERATION:
        raise EnumerationBudgetError(
            f"{total} outcome sequences over {n} items exceeds the budget of {MAX_ENUMERATION}"
        )
    probs = np.ones((atoms.shape[0], 1))
    if n == 0:
        return probs
    prof = model.profile(atoms, n)
    for j, L in enumerate(counts):
        row = prof[:, j, :L]
        probs = (probs[:, :, None] * row[:, None, :]).reshape(atoms.shape[0], -1)
    return probs


@dataclass(frozen=True)
class RobbinsCheck:
    lhs: float
    rhs: float
    gap: float
    n: int


def finite_robbins_identity(f: Callable[[tuple[int, ...]], float], mu: MixingMeasure,
                            model: ModelSpec, n: int) -> RobbinsCheck:
    """
    Finite-horizon analogue of Robbins' identity for f ≥ 0 depending on a_1..a_n.

    lhs integrates f against the mixture P_μ sequence by sequence; rhs
    integrates f against each P_{g_i} and then averages over μ.
    """
    outcomes = enumerate_outcomes(model, n)
    values = np.array([float(f(tuple(int(x) for x in a))) for a in outcomes])
    if np.any(values < 0):
        raise ValueError("f must be nonnegative")
    probs = sequence_probs(mu.atoms, model, n)

    mixture = mu.weights @ probs
    lhs = math.fsum(values * mixture)
    rhs = math.fsum(mu.weights * (probs @ values))
    return RobbinsCheck(lhs=lhs, rhs=rhs, gap=abs(lhs - rhs), n=n)
