"""Distance-agnostic k-NN search: exact brute force and approximate HNSW.

Both indexes work against any :class:`~hybrid_retriever.vectors.Space` and
touch vectors only through distance calls, so the same traversal serves L2,
cosine, inner-product (dense or sparse) and composite scoring. Similarities
are searched as negated distances; the traversal makes no metric assumptions.

The base layer holds every point and dominates the work, so for dense
spaces it runs through compiled kernels over a flat adjacency array (see
``_hnsw_kernels``); sparse and composite spaces use the same algorithm in
pure Python. Construction is exclusive and single-threaded; identical seed
and insert order give a bit-identical graph. After
:meth:`HnswIndex.freeze` the index is immutable and safe for unrestricted
concurrent searches.

Index file layout (little-endian), shared by both index types:
  magic ``HRAN``, version u32, index type u8 (0 brute force / 1 HNSW),
  space-kind code u8; HNSW adds M/Mmax0/efConstruction u32, levelMult f64,
  seed i64, then N u64, maxLevel i64, entryPoint i64 and per node a u32
  level plus per-level u32 degree + u32 neighbor ids. The vector payload is
  either ``dim u32`` + N*dim f32 (dense) or per vector ``nnz u32`` + u32
  term ids + f32 values (sparse).
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _hnsw_kernels as _k
from .storage import BinaryReader, BinaryWriter, StorageError
from .vectors import (
    COMPOSITE_IP,
    COSINE_DENSE,
    IP_DENSE,
    IP_SPARSE,
    L2_DENSE,
    SPACE_CODES,
    SPACE_FROM_CODE,
    AnyVector,
    Space,
    SparseVector,
)

_MAGIC = b"HRAN"
_VERSION = 1

_KIND_CODES = {L2_DENSE: _k.KIND_L2, IP_DENSE: _k.KIND_IP, COSINE_DENSE: _k.KIND_COS}


@dataclass(frozen=True)
class SearchHit:
    """One result: internal id plus the score in the space's orientation."""

    internal_id: int
    score: float


def _sort_hits(hits: list[SearchHit], space: Space) -> list[SearchHit]:
    # best first, ties broken by lower internal id
    if space.is_similarity:
        hits.sort(key=lambda h: (-h.score, h.internal_id))
    else:
        hits.sort(key=lambda h: (h.score, h.internal_id))
    return hits


# --- vector stores ----------------------------------------------------------
#
# A store owns the raw vectors of one index and exposes scalar + batched
# internal distances (lower is better). Dense stores keep a contiguous f32
# matrix; for L2 the internal distance is the squared distance (same
# ordering, no sqrt).


class _DenseStore:
    def __init__(self, kind: str):
        self.kind = kind
        self.kind_code = _KIND_CODES[kind]
        self.dim: int | None = None
        self.matrix = np.zeros((0, 0), dtype=np.float32)
        self.norms = np.zeros(0, dtype=np.float32)
        self.count = 0

    def add(self, v: np.ndarray) -> int:
        v = np.asarray(v, dtype=np.float32)
        if v.ndim != 1:
            raise ValueError("dense vectors must be 1-D")
        if self.dim is None:
            self.dim = len(v)
            self.matrix = np.zeros((16, self.dim), dtype=np.float32)
            self.norms = np.zeros(16, dtype=np.float32)
        elif len(v) != self.dim:
            raise ValueError(f"dimension mismatch: index holds {self.dim}-d vectors, "
                             f"got {len(v)}-d")
        if self.count == len(self.matrix):
            grown = np.zeros((2 * len(self.matrix), self.dim), dtype=np.float32)
            grown[: self.count] = self.matrix[: self.count]
            self.matrix = grown
            gn = np.zeros(2 * len(self.norms), dtype=np.float32)
            gn[: self.count] = self.norms[: self.count]
            self.norms = gn
        self.matrix[self.count] = v
        self.norms[self.count] = np.sqrt(np.dot(v, v))
        self.count += 1
        return self.count - 1

    def get(self, i: int) -> np.ndarray:
        return self.matrix[i]

    def prep_query(self, q) -> np.ndarray:
        q = np.ascontiguousarray(q, dtype=np.float32)
        if self.dim is not None and q.shape != (self.dim,):
            raise ValueError(f"query must be {self.dim}-d, got shape {q.shape}")
        return q

    def dist_many(self, q: np.ndarray, ids: Sequence[int]) -> np.ndarray:
        rows = self.matrix[ids]
        if self.kind == L2_DENSE:
            d = rows - q
            return np.einsum("ij,ij->i", d, d)
        dots = rows @ q
        if self.kind == COSINE_DENSE:
            qn = np.sqrt(np.dot(q, q))
            denom = self.norms[ids] * qn
            out = np.zeros(len(dots), dtype=np.float32)
            nz = denom != 0
            out[nz] = dots[nz] / denom[nz]
            return -out
        return -dots

    def dist_pair_many(self, i: int, ids: Sequence[int]) -> np.ndarray:
        return self.dist_many(self.matrix[i], ids)


class _ObjectStore:
    """Fallback store for sparse and composite spaces: scalar distances."""

    def __init__(self, space: Space):
        self.space = space
        self.items: list = []

    @property
    def count(self) -> int:
        return len(self.items)

    def add(self, v) -> int:
        self.space.check_vector(v)
        self.items.append(v)
        return len(self.items) - 1

    def get(self, i: int):
        return self.items[i]

    def prep_query(self, q):
        self.space.check_vector(q)
        return q

    def dist_many(self, q, ids: Sequence[int]) -> np.ndarray:
        return np.array([self.space.distance(self.items[i], q) for i in ids])

    def dist_pair_many(self, i: int, ids: Sequence[int]) -> np.ndarray:
        return self.dist_many(self.items[i], ids)


def _make_store(space: Space):
    if space.kind in (IP_SPARSE, COMPOSITE_IP):
        return _ObjectStore(space)
    return _DenseStore(space.kind)


def _internal_to_score(space: Space, internal: float) -> float:
    if space.kind == L2_DENSE:
        return math.sqrt(max(internal, 0.0))
    return -internal


# --- brute force -------------------------------------------------------------


class BruteForceIndex:
    """Exact scan; the reference every approximate result is judged against."""

    def __init__(self, space: Space):
        self.space = space
        self.vectors: list = []

    def add(self, v) -> int:
        self.space.check_vector(v)
        self.vectors.append(v)
        return len(self.vectors) - 1

    def add_many(self, vectors) -> None:
        for v in vectors:
            self.add(v)

    def __len__(self) -> int:
        return len(self.vectors)

    def search(self, q, k: int) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.vectors:
            return []
        self.space.check_vector(q)
        hits = [SearchHit(i, self.space.score(v, q)) for i, v in enumerate(self.vectors)]
        _sort_hits(hits, self.space)
        return hits[:k]

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic(_MAGIC, _VERSION)
            w.u8(0)
            w.u8(SPACE_CODES[self.space.kind])
            w.u64(len(self.vectors))
            _write_vectors(w, self.space, self.vectors)

    @classmethod
    def load(cls, path: str) -> "BruteForceIndex":
        with open(path, "rb") as fh:
            r = BinaryReader(fh, path)
            r.magic(_MAGIC, _VERSION)
            if r.u8() != 0:
                raise StorageError(f"{path}: not a brute-force index file")
            space = Space(SPACE_FROM_CODE[r.u8()])
            n = r.u64()
            index = cls(space)
            index.vectors = _read_vectors(r, space, n)
        return index


def bf_search(index: BruteForceIndex, q, k: int) -> list[SearchHit]:
    return index.search(q, k)


# --- HNSW --------------------------------------------------------------------


def assign_level(u: float, level_mult: float) -> int:
    """Geometric level draw: floor(-ln(u) * levelMult) for u in (0, 1]."""
    if not 0.0 < u <= 1.0:
        raise ValueError("u must be in (0, 1]")
    if level_mult <= 0:
        raise ValueError("level_mult must be positive")
    return int(math.floor(-math.log(u) * level_mult))


def select_diverse_neighbors(
    candidates: list[tuple[float, int]],
    m: int,
    pair_dist: Callable[[int, list[int]], np.ndarray],
) -> list[int]:
    """Prune a best-first candidate list down to <= m diverse neighbors.

    A candidate survives only if it is closer to the base point than to every
    neighbor kept so far; if fewer than m survive, the pruned ones fill the
    remaining slots nearest-first.
    """
    kept: list[int] = []
    pruned: list[int] = []
    for dist, cand in candidates:
        if len(kept) >= m:
            break
        if kept and np.min(pair_dist(cand, kept)) <= dist:
            pruned.append(cand)
        else:
            kept.append(cand)
    for cand in pruned:
        if len(kept) >= m:
            break
        kept.append(cand)
    return kept


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    Mmax0: int = 32
    ef_construction: int = 200
    level_mult: float | None = None  # defaults to 1/ln(M)
    seed: int = 0

    def resolved_mult(self) -> float:
        return self.level_mult if self.level_mult is not None else 1.0 / math.log(self.M)


class HnswIndex:
    """Layered navigable-small-world graph, built by repeated insertion.

    Greedy single-entry descent through the sparse upper layers, then a
    beam of width ``ef`` at the base layer, which contains every point.
    New nodes link to up to M selected neighbors per upper level and up to
    Mmax0 on the denser base level; overfull reverse lists are re-pruned
    with the same diversity heuristic.

    A vanishing ``level_mult`` (e.g. 1e-9) forces every point to level 0,
    which degenerates into the single-layer small-world graph; it works but
    is not a supported configuration.
    """

    def __init__(self, space: Space, params: HnswParams = HnswParams()):
        self.space = space
        self.params = params
        self._store = _make_store(space)
        self._dense = isinstance(self._store, _DenseStore)
        # base-layer adjacency, flat and fixed-capacity per node
        self._l0_links = np.zeros((16, params.Mmax0), dtype=np.int32)
        self._l0_counts = np.zeros(16, dtype=np.int32)
        self._stamps = np.zeros(16, dtype=np.int64)
        self._stamp = 0
        # per node: level, and neighbor lists for levels 1..level
        self._levels: list[int] = []
        self._upper: list[list[list[int]] | None] = []
        self.entry_point = -1
        self.max_level = -1
        self._rng = random.Random(params.seed)
        self._frozen = False

    def __len__(self) -> int:
        return len(self._levels)

    @property
    def node_count(self) -> int:
        return len(self._levels)

    def node_level(self, node: int) -> int:
        return self._levels[node]

    def neighbors(self, node: int, level: int) -> list[int]:
        if level == 0:
            return self._l0_links[node, : self._l0_counts[node]].tolist()
        return list(self._upper[node][level - 1])

    def links_snapshot(self) -> list[list[list[int]]]:
        """Full adjacency, node -> level -> neighbor ids (copies)."""
        return [[self.neighbors(node, lvl) for lvl in range(self._levels[node] + 1)]
                for node in range(len(self._levels))]

    def freeze(self) -> None:
        self._frozen = True

    def _grow(self, n: int) -> None:
        if n <= len(self._l0_counts):
            return
        cap = len(self._l0_counts)
        while cap < n:
            cap *= 2
        links = np.zeros((cap, self.params.Mmax0), dtype=np.int32)
        links[: len(self._l0_counts)] = self._l0_links[: len(self._l0_counts)]
        self._l0_links = links
        counts = np.zeros(cap, dtype=np.int32)
        counts[: len(self._l0_counts)] = self._l0_counts
        self._l0_counts = counts
        stamps = np.zeros(cap, dtype=np.int64)
        stamps[: len(self._stamps)] = self._stamps
        self._stamps = stamps

    # -- construction ---------------------------------------------------

    def add(self, v) -> int:
        if self._frozen:
            raise RuntimeError("index is frozen; no further inserts")
        new_id = self._store.add(v)
        level = assign_level(1.0 - self._rng.random(), self.params.resolved_mult())
        self._levels.append(level)
        self._upper.append([[] for _ in range(level)] if level else None)
        self._grow(new_id + 1)

        if self.entry_point < 0:
            self.entry_point = new_id
            self.max_level = level
            return new_id

        q = self._store.get(new_id)
        eps = [self.entry_point]
        for lvl in range(self.max_level, level, -1):
            eps = [self._search_layer(q, eps, lvl, 1)[0][1]]

        for lvl in range(min(level, self.max_level), -1, -1):
            # the base layer is denser: new nodes take up to Mmax0 links there
            cap = self.params.Mmax0 if lvl == 0 else self.params.M
            if lvl == 0 and self._dense:
                eps = self._insert_base_dense(q, eps, cap, new_id)
            else:
                eps = self._insert_generic(q, eps, lvl, cap, new_id)

        if level > self.max_level:
            self.entry_point = new_id
            self.max_level = level
        return new_id

    def add_many(self, vectors) -> list[int]:
        return [self.add(v) for v in vectors]

    def _insert_base_dense(self, q, eps: list[int], cap: int, new_id: int) -> list[int]:
        store = self._store
        self._stamp += 1
        dists, ids = _k.beam_search_l0(
            store.matrix, store.norms, self._l0_links, self._l0_counts,
            self._stamps, self._stamp, np.array(eps, dtype=np.int64), q,
            self.params.ef_construction, store.kind_code)
        chosen = _k.select_diverse(store.matrix, store.norms, dists, ids, cap,
                                   store.kind_code)
        self._l0_links[new_id, : len(chosen)] = chosen
        self._l0_counts[new_id] = len(chosen)
        _k.connect_new_node(store.matrix, store.norms, self._l0_links,
                            self._l0_counts, new_id, chosen, cap, store.kind_code)
        return ids.tolist()

    def _insert_generic(self, q, eps: list[int], lvl: int, cap: int,
                        new_id: int) -> list[int]:
        cands = self._search_layer(q, eps, lvl, self.params.ef_construction)
        chosen = select_diverse_neighbors(cands, cap, self._store.dist_pair_many)
        self._set_links(new_id, lvl, chosen)
        for nb in chosen:
            nb_links = self.neighbors(nb, lvl)
            nb_links.append(new_id)
            if len(nb_links) > cap:
                dists = self._store.dist_pair_many(nb, nb_links)
                order = sorted(zip(dists.tolist(), nb_links))
                nb_links = select_diverse_neighbors(
                    order, cap, self._store.dist_pair_many)
            self._set_links(nb, lvl, nb_links)
        return [c for _, c in cands]

    def _set_links(self, node: int, lvl: int, ids: list[int]) -> None:
        if lvl == 0:
            self._l0_links[node, : len(ids)] = ids
            self._l0_counts[node] = len(ids)
        else:
            self._upper[node][lvl - 1] = list(ids)

    # -- search -----------------------------------------------------------

    def _search_layer(self, q, entry_ids: list[int], level: int,
                      ef: int) -> list[tuple[float, int]]:
        """Pure-Python beam on one layer; returns (distance, id) ascending."""
        store = self._store
        visited = set(entry_ids)
        dists = store.dist_many(q, entry_ids)
        candidates: list[tuple[float, int]] = []
        best: list[tuple[float, int]] = []  # max-heap via negated distance
        for i, ep in enumerate(entry_ids):
            d = float(dists[i])
            candidates.append((d, ep))
            best.append((-d, ep))
        heapq.heapify(candidates)
        heapq.heapify(best)

        while candidates:
            d, node = heapq.heappop(candidates)
            if d > -best[0][0] and len(best) >= ef:
                break
            fresh = [nb for nb in self.neighbors(node, level) if nb not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            nd = store.dist_many(q, fresh)
            bound = -best[0][0]
            full = len(best) >= ef
            for j, nb in enumerate(fresh):
                dn = float(nd[j])
                if not full or dn < bound:
                    heapq.heappush(candidates, (dn, nb))
                    heapq.heappush(best, (-dn, nb))
                    if len(best) > ef:
                        heapq.heappop(best)
                    full = len(best) >= ef
                    bound = -best[0][0]
        out = [(-nd, nb) for nd, nb in best]
        out.sort()
        return out

    def search(self, q, k: int, ef: int | None = None) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        ef = max(ef if ef is not None else 2 * k, k)
        if not self._levels:
            return []
        q = self._store.prep_query(q)
        eps = [self.entry_point]
        for lvl in range(self.max_level, 0, -1):
            eps = [self._search_layer(q, eps, lvl, 1)[0][1]]
        if self._dense:
            store = self._store
            self._stamp += 1
            dists, ids = _k.beam_search_l0(
                store.matrix, store.norms, self._l0_links, self._l0_counts,
                self._stamps, self._stamp, np.array(eps, dtype=np.int64), q,
                ef, store.kind_code)
            base = list(zip(dists.tolist(), ids.tolist()))[:k]
        else:
            base = self._search_layer(q, eps, 0, ef)[:k]
        hits = [SearchHit(i, _internal_to_score(self.space, d)) for d, i in base]
        return _sort_hits(hits, self.space)

    # -- persistence -------------------------------------------------------

    def save(self, path: str) -> None:
        if self.space.kind == COMPOSITE_IP:
            raise NotImplementedError(
                "composite-space graphs are rebuilt from export files, not persisted")
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic(_MAGIC, _VERSION)
            w.u8(1)
            w.u8(SPACE_CODES[self.space.kind])
            w.u32(self.params.M)
            w.u32(self.params.Mmax0)
            w.u32(self.params.ef_construction)
            w.f64(self.params.resolved_mult())
            w.i64(self.params.seed)
            w.u64(len(self._levels))
            w.i64(self.max_level)
            w.i64(self.entry_point)
            for node in range(len(self._levels)):
                w.u32(self._levels[node])
                for lvl in range(self._levels[node] + 1):
                    ids = self.neighbors(node, lvl)
                    w.u32(len(ids))
                    w.array(np.array(ids, dtype=np.uint32), "<u4")
            vectors = [self._store.get(i) for i in range(len(self._levels))]
            _write_vectors(w, self.space, vectors)

    @classmethod
    def load(cls, path: str) -> "HnswIndex":
        with open(path, "rb") as fh:
            r = BinaryReader(fh, path)
            r.magic(_MAGIC, _VERSION)
            if r.u8() != 1:
                raise StorageError(f"{path}: not an HNSW index file")
            space = Space(SPACE_FROM_CODE[r.u8()])
            params = HnswParams(M=r.u32(), Mmax0=r.u32(), ef_construction=r.u32(),
                                level_mult=r.f64(), seed=r.i64())
            n = r.u64()
            index = cls(space, params)
            index.max_level = r.i64()
            index.entry_point = r.i64()
            index._grow(n)
            for node in range(n):
                level = r.u32()
                index._levels.append(level)
                index._upper.append([[] for _ in range(level)] if level else None)
                for lvl in range(level + 1):
                    deg = r.u32()
                    ids = r.array(deg, "<u4").astype(int).tolist()
                    index._set_links(node, lvl, ids)
            for v in _read_vectors(r, space, n):
                index._store.add(v)
            index.freeze()
        return index


# --- shared vector payload ----------------------------------------------------


def _write_vectors(w: BinaryWriter, space: Space, vectors: list) -> None:
    if space.kind == COMPOSITE_IP:
        raise NotImplementedError("composite vectors have no standalone payload format")
    if space.kind == IP_SPARSE:
        for v in vectors:
            w.u32(len(v))
            w.array(v.term_ids, "<u4")
            w.array(v.values, "<f4")
    else:
        dim = len(vectors[0]) if vectors else 0
        w.u32(dim)
        for v in vectors:
            w.array(np.asarray(v, dtype=np.float32), "<f4")


def _read_vectors(r: BinaryReader, space: Space, n: int) -> list:
    if space.kind == IP_SPARSE:
        out: list[AnyVector] = []
        for _ in range(n):
            nnz = r.u32()
            ids = r.array(nnz, "<u4").astype(np.int64)
            vals = r.array(nnz, "<f4")
            out.append(SparseVector(ids, vals))
        return out
    dim = r.u32()
    return [r.array(dim, "<f4") for _ in range(n)]
