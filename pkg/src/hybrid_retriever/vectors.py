"""Vector representations and the distance/similarity ("space") abstraction.

Dense vectors are plain 1-D float32 numpy arrays; sparse vectors pair a
strictly increasing term-id array with nonzero float32 values; composite
vectors are an ordered list of named, weighted dense/sparse fields. Values
are stored in 32 bits, accumulation always happens in 64 bits.

All types are immutable after construction and every operation here is pure,
so unrestricted concurrent use is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

DenseVector = np.ndarray  # 1-D float32


def dense(values: Iterable[float]) -> DenseVector:
    """Build a dense vector, validating that every entry is finite."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError(f"dense vector must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("dense vector entries must be finite")
    return arr


@dataclass(frozen=True)
class SparseVector:
    """Sorted (term_id, value) pairs; ids strictly increasing, values nonzero."""

    term_ids: np.ndarray  # int64, strictly increasing, >= 0
    values: np.ndarray    # float32, nonzero and finite

    def __post_init__(self):
        ids = np.asarray(self.term_ids, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float32)
        if ids.shape != vals.shape or ids.ndim != 1:
            raise ValueError("term_ids and values must be 1-D arrays of equal length")
        if len(ids) and ids[0] < 0:
            raise ValueError("term ids must be non-negative")
        if len(ids) > 1 and not np.all(np.diff(ids) > 0):
            raise ValueError("term ids must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sparse values must be finite")
        if np.any(vals == 0.0):
            raise ValueError("sparse values must be nonzero")
        object.__setattr__(self, "term_ids", ids)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        """From (term_id, value) pairs in any order; zero values are dropped."""
        kept = sorted((int(t), float(v)) for t, v in pairs if v != 0.0)
        return cls(np.array([t for t, _ in kept], dtype=np.int64),
                   np.array([v for _, v in kept], dtype=np.float32))

    @classmethod
    def from_dict(cls, d: Mapping[int, float]) -> "SparseVector":
        return cls.from_pairs(d.items())

    def to_dict(self) -> dict[int, float]:
        return {int(t): float(v) for t, v in zip(self.term_ids, self.values)}

    def __len__(self) -> int:
        return len(self.term_ids)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SparseVector)
                and np.array_equal(self.term_ids, other.term_ids)
                and np.array_equal(self.values, other.values))


AnyVector = Union[DenseVector, SparseVector]

EMPTY_SPARSE = SparseVector(np.array([], dtype=np.int64), np.array([], dtype=np.float32))


@dataclass(frozen=True)
class CompositeField:
    name: str
    vector: AnyVector
    weight: float


@dataclass(frozen=True)
class CompositeVector:
    """Ordered, uniquely named fields; field order is fixed per collection."""

    fields: tuple[CompositeField, ...]

    def __post_init__(self):
        flds = tuple(self.fields)
        names = [f.name for f in flds]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate field names: {names}")
        for f in flds:
            if not math.isfinite(f.weight):
                raise ValueError(f"field {f.name!r} has non-finite weight")
        object.__setattr__(self, "fields", flds)

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)


# --- core operations (f32 inputs, f64 accumulation) -----------------------

def dot_dense(a: DenseVector, b: DenseVector) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a.astype(np.float64), b.astype(np.float64)))


def dot_sparse(a: SparseVector, b: SparseVector) -> float:
    """Inner product via ordered merge over the shared term ids."""
    ai, bi = a.term_ids, b.term_ids
    av, bv = a.values, b.values
    i = j = 0
    total = 0.0
    while i < len(ai) and j < len(bi):
        ta, tb = ai[i], bi[j]
        if ta == tb:
            total += float(av[i]) * float(bv[j])
            i += 1
            j += 1
        elif ta < tb:
            i += 1
        else:
            j += 1
    return total


def l2_distance(a: DenseVector, b: DenseVector) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return math.sqrt(float(np.dot(d, d)))


def cosine_similarity(a: DenseVector, b: DenseVector) -> float:
    """Cosine of the angle; defined as 0 when either vector has zero norm.

    The denominator is sqrt(|a|^2 * |b|^2), so a nonzero vector against
    itself gives exactly 1.0 (sqrt(x*x) == x in IEEE arithmetic).
    """
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    na2 = float(np.dot(a64, a64))
    nb2 = float(np.dot(b64, b64))
    if na2 == 0.0 or nb2 == 0.0:
        return 0.0
    return float(np.dot(a64, b64)) / math.sqrt(na2 * nb2)


def normalize_l2(a: DenseVector) -> DenseVector:
    """Unit-length copy; a zero vector passes through unchanged."""
    a64 = a.astype(np.float64)
    n = math.sqrt(float(np.dot(a64, a64)))
    if n == 0.0:
        return a.astype(np.float32).copy()
    return (a64 / n).astype(np.float32)


def _inner_product(q: AnyVector, d: AnyVector) -> float:
    if isinstance(q, SparseVector) != isinstance(d, SparseVector):
        raise ValueError("field vector kinds differ between query and document")
    if isinstance(q, SparseVector):
        return dot_sparse(q, d)
    return dot_dense(q, d)


def composite_score(q: CompositeVector, d: CompositeVector) -> float:
    """Weighted sum of per-field inner products; weights are read from q."""
    if q.field_names() != d.field_names():
        raise ValueError(
            f"field schema mismatch: {q.field_names()} vs {d.field_names()}")
    total = 0.0
    for qf, df in zip(q.fields, d.fields):
        total += qf.weight * _inner_product(qf.vector, df.vector)
    return total


# --- spaces ----------------------------------------------------------------

L2_DENSE = "l2_dense"
COSINE_DENSE = "cosine_dense"
IP_DENSE = "ip_dense"
IP_SPARSE = "ip_sparse"
COMPOSITE_IP = "composite_ip"

SPACE_KINDS = (L2_DENSE, COSINE_DENSE, IP_DENSE, IP_SPARSE, COMPOSITE_IP)

# stable codes for binary headers
SPACE_CODES = {kind: i for i, kind in enumerate(SPACE_KINDS)}
SPACE_FROM_CODE = {i: kind for kind, i in SPACE_CODES.items()}

_DISTANCE_KINDS = frozenset({L2_DENSE})


@dataclass(frozen=True)
class Space:
    """A vector format plus the distance/similarity computed over it.

    ``score`` returns the native quantity (distance for L2, similarity
    otherwise); ``distance`` maps everything onto lower-is-better so index
    traversals never need to know the orientation.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in SPACE_KINDS:
            raise ValueError(f"unknown space kind {self.kind!r}")

    @property
    def is_similarity(self) -> bool:
        return self.kind not in _DISTANCE_KINDS

    @property
    def orientation(self) -> str:
        return "similarity" if self.is_similarity else "distance"

    def check_vector(self, v: AnyVector | CompositeVector) -> None:
        if self.kind == IP_SPARSE:
            ok = isinstance(v, SparseVector)
        elif self.kind == COMPOSITE_IP:
            ok = isinstance(v, CompositeVector)
        else:
            ok = isinstance(v, np.ndarray) and v.ndim == 1
        if not ok:
            raise ValueError(f"vector of type {type(v).__name__} does not match "
                             f"space {self.kind}")

    def score(self, a, b) -> float:
        if self.kind == L2_DENSE:
            return l2_distance(a, b)
        if self.kind == COSINE_DENSE:
            return cosine_similarity(a, b)
        if self.kind == IP_DENSE:
            return dot_dense(a, b)
        if self.kind == IP_SPARSE:
            return dot_sparse(a, b)
        return composite_score(a, b)

    def distance(self, a, b) -> float:
        s = self.score(a, b)
        return -s if self.is_similarity else s

    def better(self, score_a: float, score_b: float) -> bool:
        """True when score_a strictly beats score_b in this orientation."""
        return score_a > score_b if self.is_similarity else score_a < score_b
