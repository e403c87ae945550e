"""
model.py — The linear latent structure (LLS) model.

Provides:
  - ItemSpace and Generator: per-item category counts, the tabulation horizon
    and closed-form rules producing item rows beyond it
  - BasisVector and ModelSpec: the K basis profiles λ¹..λᴷ and the linear
    map g ↦ β(g) = Σ_k g_k λᵏ
  - LatentPoint: coordinates on the hyperplane Σ_k g_k = 1
  - validate_basis_vector, beta_of, in_Q

Items and categories are 1-based everywhere a caller sees them. Internally
rows are stored zero-padded to the widest item so a profile over J items is a
plain (J, L_max) array; padded categories carry probability 0.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# Hyperplane and range tolerance (double precision scale)
TOL = 1e-12

# Generator families
FAMILY_CONSTANT_TAIL = "constant-tail"
FAMILY_SQRT_DECAY = "sqrt-decay"
FAMILY_AFFINE_INV_SQRT = "affine-inv-sqrt"
FAMILY_PERIODIC = "periodic"

FAMILIES = (
    FAMILY_CONSTANT_TAIL,
    FAMILY_SQRT_DECAY,
    FAMILY_AFFINE_INV_SQRT,
    FAMILY_PERIODIC,
)

# P(X_j = 1) = 1/2 + g/(2 sqrt j) with g = g1 - g2
_SQRT_DECAY_CENTER = [[0.5, 0.5], [0.5, 0.5]]
_SQRT_DECAY_SLOPE = [[0.5, -0.5], [-0.5, 0.5]]


class ModelError(ValueError):
    """Base class for invalid model input."""


class StructureError(ModelError):
    """Shapes or indices don't match the item space."""


class HyperplaneError(ModelError):
    """Latent coordinates don't sum to 1."""


class OutOfHorizonError(ModelError, IndexError):
    """Item index beyond the tabulated horizon and no generator to extend it."""


# ------------------------------------------------------------------
# Latent points
# ------------------------------------------------------------------

@dataclass(frozen=True)
class LatentPoint:
    """K coordinates g_1..g_K on the hyperplane Σ g_k = 1 (may be negative)."""
    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if not coords:
            raise StructureError("A latent point needs at least one coordinate")
        total = math.fsum(coords)
        if abs(total - 1.0) > TOL:
            raise HyperplaneError(
                f"Coordinates {coords} sum to {total!r}, not 1 (tolerance {TOL})"
            )
        object.__setattr__(self, "coords", coords)

    @property
    def K(self) -> int:
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)

    @classmethod
    def midpoint(cls, a: "LatentPoint", b: "LatentPoint") -> "LatentPoint":
        return cls.blend(a, b, 0.5)

    @classmethod
    def blend(cls, a: "LatentPoint", b: "LatentPoint", t: float) -> "LatentPoint":
        """(1 - t)·a + t·b, renormalised against rounding."""
        coords = (1.0 - t) * a.array + t * b.array
        coords[-1] = 1.0 - math.fsum(coords[:-1])
        return cls(tuple(coords))


def as_point(g) -> LatentPoint:
    """Accept a LatentPoint or any sequence of coordinates."""
    if isinstance(g, LatentPoint):
        return g
    return LatentPoint(tuple(np.asarray(g, dtype=float).ravel()))


def points_array(points) -> np.ndarray:
    """Stack points into an (A, K) array."""
    return np.array([as_point(p).coords for p in points], dtype=float)


# ------------------------------------------------------------------
# Validation reports
# ------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    """A single constraint failure. item=None means the j → ∞ limit."""
    item: int | None
    category: int | None
    kind: str            # "range" or "row-sum"
    value: float


@dataclass
class BasisReport:
    passed: bool
    violations: list[Violation] = field(default_factory=list)


@dataclass(frozen=True)
class Membership:
    inside: bool
    violation: Violation | None = None

    def __bool__(self) -> bool:
        return self.inside


# ------------------------------------------------------------------
# Item space and generators
# ------------------------------------------------------------------

@dataclass(frozen=True)
class Generator:
    """
    Closed-form rule for basis rows of items j > horizon.

    Families:
        constant-tail    params {"tail": K rows}; every later item uses them
        sqrt-decay       no params, K = 2; P_g(X_j = 1) = 1/2 + (g1 - g2)/(2√j)
        affine-inv-sqrt  params {"center": K rows, "slope": K rows};
                         row k at item j is center[k] + slope[k]/√j
        periodic         no params; item j repeats tabulated item ((j-1) mod h) + 1
    """
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise StructureError(
                f"Unknown generator family {self.family!r}; "
                f"expected one of {', '.join(FAMILIES)}"
            )
        if self.family == FAMILY_CONSTANT_TAIL:
            tail = _as_matrix(self.params.get("tail"), "tail")
            if np.any(np.abs(tail.sum(axis=1) - 1.0) > TOL):
                raise StructureError("constant-tail rows must sum to 1")
            object.__setattr__(self, "_arrays", {"tail": tail})
        elif self.family == FAMILY_SQRT_DECAY:
            object.__setattr__(self, "_arrays", {
                "center": np.array(_SQRT_DECAY_CENTER),
                "slope": np.array(_SQRT_DECAY_SLOPE),
            })
        elif self.family == FAMILY_AFFINE_INV_SQRT:
            center = _as_matrix(self.params.get("center"), "center")
            slope = _as_matrix(self.params.get("slope"), "slope")
            if center.shape != slope.shape:
                raise StructureError("affine-inv-sqrt center and slope shapes differ")
            if np.any(np.abs(center.sum(axis=1) - 1.0) > TOL):
                raise StructureError("affine-inv-sqrt center rows must sum to 1")
            if np.any(np.abs(slope.sum(axis=1)) > TOL):
                raise StructureError("affine-inv-sqrt slope rows must sum to 0")
            object.__setattr__(self, "_arrays", {"center": center, "slope": slope})
        else:
            object.__setattr__(self, "_arrays", {})

    @property
    def tail(self) -> np.ndarray | None:
        return self._arrays.get("tail")

    @property
    def center(self) -> np.ndarray | None:
        return self._arrays.get("center")

    @property
    def slope(self) -> np.ndarray | None:
        return self._arrays.get("slope")

    @property
    def is_affine(self) -> bool:
        return self.family in (FAMILY_SQRT_DECAY, FAMILY_AFFINE_INV_SQRT)

    @property
    def width(self) -> int | None:
        """Category count of generated items (None for periodic: varies)."""
        if self.family == FAMILY_CONSTANT_TAIL:
            return self.tail.shape[1]
        if self.is_affine:
            return self.center.shape[1]
        return None

    @property
    def rank(self) -> int | None:
        """Number of basis rows the params describe (None for periodic)."""
        if self.family == FAMILY_CONSTANT_TAIL:
            return self.tail.shape[0]
        if self.is_affine:
            return self.center.shape[0]
        return None

    def counts(self, j: np.ndarray, tabulated: tuple[int, ...]) -> np.ndarray:
        if self.family == FAMILY_PERIODIC:
            return np.asarray(tabulated)[(j - 1) % len(tabulated)]
        return np.full(len(j), self.width, dtype=int)

    def rows(self, j: np.ndarray, table: np.ndarray) -> np.ndarray:
        """Basis rows for items j, shape (K, len(j), L) with L ≤ table width."""
        K = table.shape[0]
        if self.family == FAMILY_PERIODIC:
            return table[:, (j - 1) % table.shape[1], :]
        if self.family == FAMILY_CONSTANT_TAIL:
            return np.broadcast_to(
                self.tail[:, None, :], (K, len(j), self.tail.shape[1])
            )
        t = 1.0 / np.sqrt(j.astype(float))
        return self.center[:, None, :] + self.slope[:, None, :] * t[None, :, None]

    def bound_violation(self, coords: np.ndarray, horizon: int) -> Violation | None:
        """
        Exact membership check for every generated item.

        Affine rows are linear in t = 1/√j on (0, 1/√(horizon+1)], so the
        extremes sit at the two ends of that interval.
        """
        if self.family == FAMILY_CONSTANT_TAIL:
            return _first_violation(coords @ self.tail, item=horizon + 1)
        if self.is_affine:
            a = coords @ self.center
            b = coords @ self.slope
            near = _first_violation(a + b / math.sqrt(horizon + 1), item=horizon + 1)
            if near is not None:
                return near
            return _first_violation(a, item=None)
        return None

    def to_dict(self) -> dict:
        params = {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in self.params.items()
        }
        return {"family": self.family, "params": params}


def _as_matrix(value, name: str) -> np.ndarray:
    if value is None:
        raise StructureError(f"Generator param {name!r} is required")
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise StructureError(f"Generator param {name!r} must be a list of rows")
    return arr


def _first_violation(row: np.ndarray, item: int | None) -> Violation | None:
    bad = np.flatnonzero((row < -TOL) | (row > 1.0 + TOL))
    if bad.size == 0:
        return None
    l = int(bad[0])
    return Violation(item=item, category=l + 1, kind="range", value=float(row[l]))


@dataclass(frozen=True)
class ItemSpace:
    """Per-item category counts L_j for j ≤ horizon, plus an optional generator."""
    counts: tuple[int, ...]
    horizon: int
    generator: Generator | None = None

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.horizon < 1:
            raise StructureError("horizon must be at least 1")
        if len(self.counts) != self.horizon:
            raise StructureError(
                f"{len(self.counts)} category counts given for horizon {self.horizon}"
            )
        too_small = [j + 1 for j, c in enumerate(self.counts) if c < 2]
        if too_small:
            raise StructureError(f"Items {too_small} have fewer than 2 categories")
        if self.generator is not None and self.generator.width is not None:
            if self.generator.width < 2:
                raise StructureError("Generated items need at least 2 categories")

    def reach(self, n: int) -> int:
        """How many of the first n items actually exist."""
        return n if self.generator is not None else min(n, self.horizon)

    def count(self, j: int) -> int:
        if j < 1:
            raise StructureError(f"Item index {j} is not 1-based")
        if j <= self.horizon:
            return self.counts[j - 1]
        if self.generator is None:
            raise OutOfHorizonError(
                f"Item {j} is beyond horizon {self.horizon} and there is no generator"
            )
        return int(self.generator.counts(np.array([j]), self.counts)[0])

    def counts_range(self, stop: int, start: int = 1) -> np.ndarray:
        """Category counts for items start..stop (inclusive)."""
        if stop < start:
            return np.zeros(0, dtype=int)
        if stop > self.horizon and self.generator is None:
            raise OutOfHorizonError(
                f"Item {stop} is beyond horizon {self.horizon} and there is no generator"
            )
        head = np.asarray(self.counts[start - 1:min(stop, self.horizon)], dtype=int)
        if stop <= self.horizon:
            return head
        j = np.arange(max(start, self.horizon + 1), stop + 1)
        return np.concatenate([head, self.generator.counts(j, self.counts)])


# ------------------------------------------------------------------
# Basis vectors
# ------------------------------------------------------------------

@dataclass(frozen=True)
class BasisVector:
    """Per item j, the row (λ_j1, ..., λ_jL_j)."""
    entries: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple(tuple(float(x) for x in row) for row in self.entries)
        )


def validate_basis_vector(v, items: ItemSpace) -> BasisReport:
    """
    Check 0 ≤ λ_jl ≤ 1 and Σ_l λ_jl = 1 for every tabulated item.

    Raises StructureError when the row layout doesn't match the item space;
    constraint failures are returned, not raised.
    """
    rows = v.entries if isinstance(v, BasisVector) else BasisVector(v).entries
    if len(rows) != items.horizon:
        raise StructureError(
            f"Basis vector has {len(rows)} item rows, item space has {items.horizon}"
        )

    violations = []
    for j, (row, L) in enumerate(zip(rows, items.counts), start=1):
        if len(row) != L:
            raise StructureError(f"Item {j}: row has {len(row)} entries, expected {L}")
        for l, x in enumerate(row, start=1):
            if x < -TOL or x > 1.0 + TOL:
                violations.append(Violation(item=j, category=l, kind="range", value=x))
        total = math.fsum(row)
        if abs(total - 1.0) > TOL:
            violations.append(Violation(item=j, category=None, kind="row-sum", value=total))
    return BasisReport(passed=not violations, violations=violations)


# ------------------------------------------------------------------
# Model
# ------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """K linearly independent basis vectors over an item space."""
    K: int
    basis: tuple[BasisVector, ...]
    items: ItemSpace

    def __post_init__(self):
        basis = tuple(b if isinstance(b, BasisVector) else BasisVector(b) for b in self.basis)
        object.__setattr__(self, "basis", basis)
        if self.K < 1 or len(basis) != self.K:
            raise StructureError(f"Expected {self.K} basis vectors, got {len(basis)}")

        problems = []
        for k, vec in enumerate(basis, start=1):
            report = validate_basis_vector(vec, self.items)
            problems.extend((k, v) for v in report.violations)
        if problems:
            k, v = problems[0]
            raise ModelError(
                f"Basis vector {k} violates row constraints at item {v.item}, "
                f"category {v.category} ({v.kind}, value {v.value!r}); "
                f"{len(problems)} violation(s) in total"
            )

        gen = self.items.generator
        widths = list(self.items.counts)
        if gen is not None and gen.width is not None:
            widths.append(gen.width)
        lmax = max(widths)
        table = np.zeros((self.K, self.items.horizon, lmax))
        for k, vec in enumerate(basis):
            for j, row in enumerate(vec.entries):
                table[k, j, :len(row)] = row
        table.setflags(write=False)
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "lmax", lmax)

        stacked = table.reshape(self.K, -1)
        rank = int(np.linalg.matrix_rank(stacked))
        if rank < self.K:
            raise ModelError(
                f"Basis vectors are linearly dependent over the tabulated horizon "
                f"(rank {rank} < K = {self.K})"
            )

        if gen is not None:
            if gen.family == FAMILY_SQRT_DECAY and self.K != 2:
                raise StructureError("The sqrt-decay family is defined for K = 2")
            if gen.rank is not None and gen.rank != self.K:
                raise StructureError(
                    f"Generator describes {gen.rank} basis rows, model has K = {self.K}"
                )
            for k in range(self.K):
                vertex = np.eye(self.K)[k]
                bad = gen.bound_violation(vertex, self.items.horizon)
                if bad is not None:
                    raise ModelError(
                        f"Generated rows of basis vector {k + 1} leave [0, 1] "
                        f"(item {bad.item or 'limit'}, category {bad.category}, "
                        f"value {bad.value!r})"
                    )

    @classmethod
    def build(cls, basis, counts=None, generator: Generator | None = None) -> "ModelSpec":
        """Build from nested lists; counts default to the row lengths of λ¹."""
        basis = [BasisVector(b) for b in basis]
        if counts is None:
            counts = [len(row) for row in basis[0].entries]
        items = ItemSpace(counts=tuple(counts), horizon=len(counts), generator=generator)
        return cls(K=len(basis), basis=tuple(basis), items=items)

    @property
    def horizon(self) -> int:
        return self.items.horizon

    @property
    def generator(self) -> Generator | None:
        return self.items.generator

    def reach(self, n: int) -> int:
        return self.items.reach(n)

    def basis_rows(self, stop: int, start: int = 1) -> np.ndarray:
        """Basis rows for items start..stop, shape (K, J, lmax), zero-padded."""
        if start < 1:
            raise StructureError(f"Item index {start} is not 1-based")
        if stop < start:
            return np.zeros((self.K, 0, self.lmax))
        h = self.horizon
        if stop > h and self.generator is None:
            raise OutOfHorizonError(
                f"Item {stop} is beyond horizon {h} and there is no generator"
            )
        parts = []
        if start <= h:
            parts.append(self._table[:, start - 1:min(stop, h), :])
        if stop > h:
            j = np.arange(max(start, h + 1), stop + 1)
            gen_rows = self.generator.rows(j, self._table)
            pad = self.lmax - gen_rows.shape[2]
            if pad:
                gen_rows = np.pad(gen_rows, ((0, 0), (0, 0), (0, pad)))
            parts.append(gen_rows)
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)

    def profile(self, coords, stop: int, start: int = 1) -> np.ndarray:
        """
        β rows for items start..stop.

        coords may be a single (K,) vector or an (A, K) stack of points; the
        result is (J, lmax) or (A, J, lmax).
        """
        coords = np.asarray(coords, dtype=float)
        if coords.shape[-1] != self.K:
            raise StructureError(f"Expected {self.K} coordinates, got {coords.shape[-1]}")
        return np.tensordot(coords, self.basis_rows(stop, start), axes=([-1], [0]))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "counts": list(self.items.counts),
            "horizon": self.horizon,
            "basis": [[list(row) for row in vec.entries] for vec in self.basis],
            "generator": self.generator.to_dict() if self.generator else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        missing = {"K", "counts", "horizon", "basis"} - set(doc)
        if missing:
            raise StructureError(f"Model document is missing {sorted(missing)}")
        gen_doc = doc.get("generator")
        generator = None
        if gen_doc is not None:
            generator = Generator(gen_doc["family"], dict(gen_doc.get("params") or {}))
        items = ItemSpace(
            counts=tuple(doc["counts"]), horizon=int(doc["horizon"]), generator=generator
        )
        return cls(K=int(doc["K"]), basis=tuple(BasisVector(b) for b in doc["basis"]), items=items)


# ------------------------------------------------------------------
# Operations
# ------------------------------------------------------------------

def beta_of(g, model: ModelSpec, j: int) -> np.ndarray:
    """Row (β_j1(g), ..., β_jL_j(g)) = Σ_k g_k λᵏ_j."""
    g = as_point(g)
    L = model.items.count(j)
    return model.profile(g.array, j, start=j)[0, :L]


def in_Q(g, model: ModelSpec) -> Membership:
    """
    Is β(g) a valid probability profile?

    Tabulated rows are checked item by item; generated rows use the
    family's analytic bound. Raises HyperplaneError if Σ g_k ≠ 1.
    """
    g = as_point(g)
    if g.K != model.K:
        raise StructureError(f"Expected {model.K} coordinates, got {g.K}")

    prof = model.profile(g.array, model.horizon)
    bad = np.argwhere((prof < -TOL) | (prof > 1.0 + TOL))
    if bad.size:
        j, l = (int(x) for x in bad[0])
        return Membership(False, Violation(j + 1, l + 1, "range", float(prof[j, l])))

    if model.generator is not None:
        bad_tail = model.generator.bound_violation(g.array, model.horizon)
        if bad_tail is not None:
            return Membership(False, bad_tail)
    return Membership(True)
