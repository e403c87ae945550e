"""
posterior.py — Posterior means eₙ(a) and the pushforward estimator μ̂ₙ.

eₙ(a) = E(G | a_1..a_n) = Σ_i w_i L_i(a) g_i / Σ_i w_i L_i(a), where
L_i(a) = Π_{j≤n} β_{j a_j}(g_i). μ̂ₙ is the law of eₙ(a) when a ~ P_μ; it is
approximated by M Monte Carlo replicates or, for small n, computed exactly by
enumeration. e∞ is never available: the largest n computed stands in for it.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from measure import (
    MixingMeasure, OutcomeSequence, enumerate_outcomes, sample_joint_batch,
    sample_outcomes, sequence_probs,
)
from model import ModelError, ModelSpec, StructureError, as_point, in_Q
from workers import Seed, parallel_map

logger = logging.getLogger(__name__)

# Rows of outcomes scored per matrix product
CHUNK_ROWS = 512


class ZeroEvidenceError(ValueError):
    """Every atom gives the observed outcomes probability 0."""

    def __init__(self, message: str, rows: list[int] | None = None):
        super().__init__(message)
        self.rows = rows or []


# ------------------------------------------------------------------
# Types
# ------------------------------------------------------------------

@dataclass
class PosteriorResult:
    point: np.ndarray
    posteriors: np.ndarray
    log_likelihoods: np.ndarray
    n: int

    @property
    def top_mass(self) -> float:
        return float(self.posteriors.max())

    @property
    def top_atom(self) -> int:
        return int(np.argmax(self.posteriors))


@dataclass(eq=False)
class EmpiricalMeasureQ:
    """Weighted point cloud on Q, shape (M, K), weights uniform unless given."""
    points: np.ndarray
    weights: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] == 0:
            raise ValueError("An empirical measure needs at least one point")
        if self.weights is None:
            self.weights = np.full(self.points.shape[0], 1.0 / self.points.shape[0])
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError("Points and weights differ in length")
        if np.any(self.weights <= 0):
            raise ValueError("Empirical weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"Empirical weights sum to {self.weights.sum()!r}")

    @classmethod
    def from_mixing(cls, mu: MixingMeasure) -> "EmpiricalMeasureQ":
        return cls(np.array(mu.atoms), np.array(mu.weights),
                   {"source": mu.kind, **mu.descriptor})

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def K(self) -> int:
        return self.points.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def support(self, decimals: int = 10) -> np.ndarray:
        """Distinct points after rounding."""
        return np.unique(np.round(self.points, decimals), axis=0)


# ------------------------------------------------------------------
# Likelihoods
# ------------------------------------------------------------------

def _log_table(atoms: np.ndarray, model: ModelSpec, n: int):
    """log β and a zero mask, flattened to (A, n·lmax)."""
    prof = np.clip(model.profile(atoms, n), 0.0, None)
    impossible = prof <= 0.0
    logp = np.where(impossible, 0.0, np.log(np.where(impossible, 1.0, prof)))
    A = atoms.shape[0]
    return logp.reshape(A, -1), impossible.reshape(A, -1).astype(float)


def log_likelihoods(atoms: np.ndarray, model: ModelSpec, outcomes: np.ndarray) -> np.ndarray:
    """
    log L_i(a) for every row of outcomes (M, n) and every atom, shape (M, A).

    Rows impossible under an atom get -inf.
    """
    outcomes = np.atleast_2d(np.asarray(outcomes, dtype=int))
    M, n = outcomes.shape
    atoms = np.atleast_2d(atoms)
    if n == 0:
        return np.zeros((M, atoms.shape[0]))
    logp, impossible = _log_table(atoms, model, n)
    width = model.lmax
    cols = np.arange(n) * width + (outcomes - 1)

    out = np.empty((M, atoms.shape[0]))
    for lo in range(0, M, CHUNK_ROWS):
        block = cols[lo:lo + CHUNK_ROWS]
        onehot = np.zeros((block.shape[0], n * width))
        np.put_along_axis(onehot, block, 1.0, axis=1)
        ll = onehot @ logp.T
        dead = (onehot @ impossible.T) > 0
        ll[dead] = -np.inf
        out[lo:lo + CHUNK_ROWS] = ll
    return out


def _check_outcomes(outcomes: np.ndarray, model: ModelSpec):
    if outcomes.shape[1] == 0:
        return
    counts = model.items.counts_range(outcomes.shape[1])
    bad = np.argwhere((outcomes < 1) | (outcomes > counts[None, :]))
    if bad.size:
        r, j = (int(x) for x in bad[0])
        raise StructureError(
            f"Row {r}: category {outcomes[r, j]} is out of range 1..{counts[j]} at item {j + 1}"
        )


def posterior_batch(mu: MixingMeasure, model: ModelSpec, outcomes: np.ndarray,
                    strict: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Posterior means for many sequences of the same length.

    Returns:
        (points (M, K), posteriors (M, A), zero-evidence mask (M,)). With
        strict=True any zero-evidence row raises; otherwise its point and
        posteriors are NaN and the mask flags it.
    """
    outcomes = np.atleast_2d(np.asarray(outcomes, dtype=int))
    _check_outcomes(outcomes, model)
    ll = log_likelihoods(mu.atoms, model, outcomes)
    with np.errstate(divide="ignore"):
        joint = ll + np.log(mu.weights)[None, :]
    evidence = logsumexp(joint, axis=1)
    zero = ~np.isfinite(evidence)
    if strict and zero.any():
        rows = np.flatnonzero(zero).tolist()
        raise ZeroEvidenceError(
            f"{len(rows)} outcome sequence(s) have probability 0 under every atom", rows
        )
    post = np.full_like(joint, np.nan)
    ok = ~zero
    post[ok] = np.exp(joint[ok] - evidence[ok, None])
    points = post @ mu.atoms
    return points, post, zero


def posterior_mean(mu: MixingMeasure, model: ModelSpec, a) -> PosteriorResult:
    """eₙ(a) for one outcome sequence; n = 0 gives the mean of μ."""
    seq = a if isinstance(a, OutcomeSequence) else OutcomeSequence(tuple(a))
    seq.check(model)
    outcomes = seq.array.reshape(1, -1)
    points, post, _ = posterior_batch(mu, model, outcomes)
    return PosteriorResult(
        point=points[0],
        posteriors=post[0],
        log_likelihoods=log_likelihoods(mu.atoms, model, outcomes)[0],
        n=len(seq),
    )


# ------------------------------------------------------------------
# Pushforward
# ------------------------------------------------------------------

def _pushforward_chunk(task):
    mu, model, n, size, seed, start = task
    _, outcomes = sample_joint_batch(mu, n, model, size, seed, start)
    points, _, _ = posterior_batch(mu, model, outcomes)
    return points


def pushforward_estimate(mu: MixingMeasure, model: ModelSpec, n: int, M: int,
                         seed: Seed, jobs: int = 1) -> EmpiricalMeasureQ:
    """
    μ̂ₙ as the empirical law of eₙ(a⁽ⁱ⁾) over M replicates a⁽ⁱ⁾ ~ P_μ.

    Replicate i always uses the stream for (seed, i), so the points come out
    in the same order for any jobs.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    parts = max(1, min(M, jobs * 4)) if jobs > 1 else 1
    bounds = np.linspace(0, M, parts + 1).astype(int)
    tasks = [
        (mu, model, n, int(hi - lo), seed, int(lo))
        for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
    ]
    points = np.vstack(parallel_map(_pushforward_chunk, tasks, jobs))
    seed_label = seed if isinstance(seed, int) else list(getattr(seed, "spawn_key", ()))
    return EmpiricalMeasureQ(points, provenance={"n": n, "M": M, "seed": seed_label})


def exact_pushforward(mu: MixingMeasure, model: ModelSpec, n: int,
                      decimals: int = 12) -> EmpiricalMeasureQ:
    """
    μ̂ₙ exactly: every length-n sequence weighted by P_μ(a), equal points merged.

    Raises EnumerationBudgetError past the enumeration budget.
    """
    outcomes = enumerate_outcomes(model, n)
    probs = mu.weights @ sequence_probs(mu.atoms, model, n)
    keep = probs > 0
    points, _, _ = posterior_batch(mu, model, outcomes[keep])

    keys, inverse = np.unique(np.round(points, decimals), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    weights = np.bincount(inverse, weights=probs[keep], minlength=len(keys))
    merged = np.zeros_like(keys)
    np.add.at(merged, inverse, points * probs[keep, None])
    merged /= weights[:, None]
    return EmpiricalMeasureQ(merged, weights / weights.sum(),
                             {"n": n, "exact": True, "sequences": int(keep.sum())})


def individual_trajectory(g, mu: MixingMeasure, model: ModelSpec, n_list,
                          seed: Seed) -> list[tuple[int, np.ndarray]]:
    """
    Posterior means along one outcome stream a ~ P_g at each n in n_list.

    Raises ZeroEvidenceError if the stream becomes impossible under μ.
    """
    g = as_point(g)
    if not in_Q(g, model):
        raise ModelError(f"Point {g.coords} lies outside Q")
    n_list = sorted(int(n) for n in n_list)
    if not n_list:
        return []
    stream = sample_outcomes(g, n_list[-1], model, seed).array
    prefixes = [stream[:n] for n in n_list]
    trajectory = []
    for n, prefix in zip(n_list, prefixes):
        points, _, _ = posterior_batch(mu, model, prefix.reshape(1, -1))
        trajectory.append((n, points[0]))
    return trajectory
