"""
identify.py — Identifiability diagnostics from the mixing covariance.

μ is identifiable from the mixture when the covariance of the β-coordinates
under μ has the right rank. On the hyperplane Σ g_k = 1 one direction is
lost to centering, so a rank-K mixing measure shows centered rank K − 1 while
its stacked atom profiles show rank K. Ranks come from singular values with
a relative threshold; minor_rank is the exhaustive cross-check.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import svdvals

from measure import MixingMeasure, sample_joint_batch
from model import ModelSpec
from workers import Seed

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-9
MINOR_TOL = 1e-10

PROVENANCE_EXACT = "exact-from-atoms"
PROVENANCE_MONTE_CARLO = "monte-carlo"

VERDICT_CONSISTENT = "consistent"
VERDICT_INCONSISTENT = "inconsistent"
VERDICT_DEGENERATE = "degenerate"


@dataclass(frozen=True, eq=False)
class CovarianceBlock:
    """Cov_μ(β_jl, β_j′l′) over every (j, l) with j ≤ J."""
    index: tuple[tuple[int, int], ...]
    matrix: np.ndarray
    provenance: str = PROVENANCE_EXACT
    sample_size: int | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.index), len(self.index)):
            raise ValueError(f"Matrix shape {m.shape} doesn't match {len(self.index)} indices")
        if m.size and np.max(np.abs(m - m.T)) > 1e-10:
            raise ValueError("Covariance matrix is not symmetric")
        if m.size:
            eig = np.linalg.eigvalsh(m)
            if eig[0] < -1e-8 * max(eig[-1], 0.0) - 1e-15:
                raise ValueError(f"Covariance matrix is not PSD (eigenvalue {eig[0]!r})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def labels(self) -> list[str]:
        return [f"b{j}_{l}" for j, l in self.index]

    @property
    def provenance_label(self) -> str:
        if self.provenance == PROVENANCE_MONTE_CARLO:
            return f"{PROVENANCE_MONTE_CARLO}({self.sample_size})"
        return self.provenance


def _coordinates(atoms: np.ndarray, model: ModelSpec, J: int):
    """Flatten β rows of every atom over items 1..J into (A, D) plus the (j, l) index."""
    counts = model.items.counts_range(J)
    index = tuple((j + 1, l + 1) for j, L in enumerate(counts) for l in range(L))
    prof = model.profile(atoms, J)
    js = np.array([j - 1 for j, _ in index], dtype=int)
    ls = np.array([l - 1 for _, l in index], dtype=int)
    return prof[:, js, ls], index


def _weighted_covariance(X: np.ndarray, weights: np.ndarray) -> np.ndarray:
    centered = X - weights @ X
    C = centered.T @ (weights[:, None] * centered)
    return (C + C.T) / 2.0


def mixing_covariance(mu: MixingMeasure, model: ModelSpec, J: int) -> CovarianceBlock:
    """Exact covariance Σ_i w_i β(g_i)β(g_i)ᵀ − β̄β̄ᵀ over items 1..J."""
    if J < 1:
        raise ValueError("J must be at least 1")
    X, index = _coordinates(mu.atoms, model, J)
    return CovarianceBlock(index, _weighted_covariance(X, mu.weights), PROVENANCE_EXACT)


def sampled_covariance(mu: MixingMeasure, model: ModelSpec, J: int, size: int,
                       seed: Seed) -> CovarianceBlock:
    """Covariance estimated from `size` latent draws G ~ μ."""
    if size < 2:
        raise ValueError("A sampled covariance needs at least 2 draws")
    idx, _ = sample_joint_batch(mu, 0, model, size, seed)
    X, index = _coordinates(mu.atoms[idx], model, J)
    C = np.cov(X, rowvar=False, ddof=1).reshape(len(index), len(index))
    return CovarianceBlock(index, (C + C.T) / 2.0, PROVENANCE_MONTE_CARLO, size)


@dataclass(frozen=True)
class RankReport:
    rank: int
    singular_values: tuple[float, ...]
    K: int
    rel_tol: float
    verdict: str
    note: str

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "singular_values": list(self.singular_values),
            "K": self.K,
            "rel_tol": self.rel_tol,
            "verdict": self.verdict,
            "note": self.note,
        }


def numerical_rank(matrix: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> tuple[int, np.ndarray]:
    s = svdvals(np.atleast_2d(matrix)) if np.size(matrix) else np.zeros(0)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s >= rel_tol * s[0])), s


def rank_test(C: CovarianceBlock, K: int, rel_tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """
    Estimate rank C and compare with K − 1.

    Returns:
        RankReport with verdict "consistent" iff the rank is K − 1,
        "degenerate" for an all-zero matrix, "inconsistent" otherwise.
    """
    if C.matrix.size == 0:
        raise ValueError("Covariance block is empty")
    rank, s = numerical_rank(C.matrix, rel_tol)
    if rank == 0:
        verdict = VERDICT_DEGENERATE
    elif rank == K - 1:
        verdict = VERDICT_CONSISTENT
    else:
        verdict = VERDICT_INCONSISTENT
    note = (
        f"centered covariance rank {rank} vs K - 1 = {K - 1}: the hyperplane "
        f"constraint removes one direction, so nondegenerate size-K minors of the "
        f"uncentered moments correspond to centered rank K - 1"
    )
    logger.debug(f"rank_test: rank {rank}, verdict {verdict}")
    return RankReport(rank, tuple(float(x) for x in s), K, rel_tol, verdict, note)


def rank_profile(mu: MixingMeasure, model: ModelSpec, J: int, K: int,
                 rel_tol: float = DEFAULT_RANK_TOL) -> list[tuple[int, int]]:
    """(J′, rank) for J′ = 1..J; stable ranks suggest the truncation is enough."""
    return [
        (j, rank_test(mixing_covariance(mu, model, j), K, rel_tol).rank)
        for j in range(1, J + 1)
    ]


def atom_profile_rank(mu: MixingMeasure, model: ModelSpec, J: int,
                      rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank of the uncentered (atoms × (j, l)) profile matrix."""
    X, _ = _coordinates(mu.atoms, model, J)
    return numerical_rank(X, rel_tol)[0]


def minor_rank(matrix: np.ndarray, tol: float = MINOR_TOL) -> int:
    """
    Largest r with a nonzero r×r minor, by exhaustive enumeration.

    A minor counts as nonzero when |det| > tol·σ_max^r. Exponential in size;
    meant for matrices up to about 8×8.
    """
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    scale = float(np.linalg.norm(A, 2))
    if scale == 0.0:
        return 0
    rows, cols = A.shape
    best = 0
    for r in range(1, min(rows, cols) + 1):
        threshold = tol * scale**r
        found = any(
            abs(np.linalg.det(A[np.ix_(ri, ci)])) > threshold
            for ri in itertools.combinations(range(rows), r)
            for ci in itertools.combinations(range(cols), r)
        )
        if not found:
            break
        best = r
    return best
