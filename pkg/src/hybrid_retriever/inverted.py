"""Uncompressed term-level inverted file with document-at-a-time traversal.

One posting-list layout serves two flavors: MIPS postings hold raw sparse
weights so top-k inner-product search is exact, BM25 postings hold raw term
frequencies plus document lengths. Postings are stored uncompressed, sorted
by document id.

File layout: magic ``HRIV``, version u32, flavor u8 (0 weights / 1 term
frequencies), N u64, avgDocLength f64, N f64 doc lengths, term count u64,
then per term: term id u32, posting count u32, u32 doc ids, f32 weights.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ann import SearchHit
from .storage import BinaryReader, BinaryWriter, StorageError
from .vectors import SparseVector

FLAVOR_WEIGHTS = "weights"  # raw sparse-vector weights, for exact MIPS
FLAVOR_TF = "tf"            # raw term frequencies, for BM25

_MAGIC = b"HRIV"
_VERSION = 1
_FLAVOR_CODES = {FLAVOR_WEIGHTS: 0, FLAVOR_TF: 1}
_FLAVOR_FROM_CODE = {v: k for k, v in _FLAVOR_CODES.items()}


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


@dataclass
class PostingList:
    term_id: int
    doc_ids: np.ndarray   # int64, strictly increasing
    weights: np.ndarray   # float32

    def __len__(self) -> int:
        return len(self.doc_ids)


class InvertedIndex:
    """Posting lists plus the collection statistics BM25 needs."""

    def __init__(self, flavor: str = FLAVOR_WEIGHTS):
        if flavor not in _FLAVOR_CODES:
            raise ValueError(f"unknown flavor {flavor!r}")
        self.flavor = flavor
        self.postings: dict[int, PostingList] = {}
        self.doc_lengths: np.ndarray = np.zeros(0, dtype=np.float64)
        self.avg_doc_length = 0.0

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    def doc_freq(self, term_id: int) -> int:
        plist = self.postings.get(term_id)
        return len(plist) if plist is not None else 0

    # -- construction -----------------------------------------------------

    @classmethod
    def build_from_sparse(cls, vectors: Sequence[SparseVector],
                          flavor: str = FLAVOR_WEIGHTS) -> "InvertedIndex":
        """Invert a document collection; weights are copied verbatim.

        Document lengths are the per-document weight sums, which for
        term-frequency vectors is the token count.
        """
        index = cls(flavor)
        acc: dict[int, tuple[list[int], list[float]]] = {}
        lengths = np.zeros(len(vectors), dtype=np.float64)
        for doc_id, vec in enumerate(vectors):
            lengths[doc_id] = float(np.sum(vec.values.astype(np.float64)))
            for term_id, weight in zip(vec.term_ids.tolist(), vec.values.tolist()):
                ids, ws = acc.setdefault(term_id, ([], []))
                ids.append(doc_id)
                ws.append(weight)
        for term_id in sorted(acc):
            ids, ws = acc[term_id]
            index.postings[term_id] = PostingList(
                term_id,
                np.array(ids, dtype=np.int64),
                np.array(ws, dtype=np.float32),
            )
        index.doc_lengths = lengths
        index.avg_doc_length = float(lengths.mean()) if len(vectors) else 0.0
        return index

    def reconstruct_doc(self, doc_id: int) -> SparseVector:
        """Rebuild one document's sparse vector from the posting lists."""
        pairs = []
        for term_id, plist in self.postings.items():
            pos = np.searchsorted(plist.doc_ids, doc_id)
            if pos < len(plist) and plist.doc_ids[pos] == doc_id:
                pairs.append((term_id, float(plist.weights[pos])))
        return SparseVector.from_pairs(pairs)

    # -- exact MIPS ---------------------------------------------------------

    def daat_mips(self, q: SparseVector, k: int) -> list[SearchHit]:
        """Exact top-k by sparse inner product, document-at-a-time.

        Only documents sharing at least one term with the query are
        considered; ties break toward the lower internal id.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        cursors = []  # (doc_ids, weights, pos, query_weight), ascending term id
        for term_id, qw in zip(q.term_ids.tolist(), q.values.tolist()):
            plist = self.postings.get(term_id)
            if plist is not None and len(plist):
                cursors.append([plist.doc_ids, plist.weights, 0, qw])
        if not cursors:
            return []

        heap: list[tuple[float, int]] = []  # (score, -doc_id) min-heap of the top k
        while cursors:
            current = min(c[0][c[2]] for c in cursors)
            score = 0.0
            exhausted = False
            for c in cursors:
                if c[0][c[2]] == current:
                    score += c[3] * float(c[1][c[2]])
                    c[2] += 1
                    if c[2] >= len(c[0]):
                        exhausted = True
            entry = (score, -int(current))
            if len(heap) < k:
                heapq.heappush(heap, entry)
            elif entry > heap[0]:
                heapq.heapreplace(heap, entry)
            if exhausted:
                cursors = [c for c in cursors if c[2] < len(c[0])]

        hits = [SearchHit(-neg_id, score) for score, neg_id in heap]
        hits.sort(key=lambda h: (-h.score, h.internal_id))
        return hits

    # -- BM25 ----------------------------------------------------------------

    def _idf(self, term_id: int) -> float:
        df = self.doc_freq(term_id)
        n = self.doc_count
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def _term_score(self, tf: float, term_id: int, doc_length: float,
                    params: BM25Params) -> float:
        idf = self._idf(term_id)
        norm = params.k1 * (1.0 - params.b + params.b * doc_length / self.avg_doc_length)
        return idf * tf * (params.k1 + 1.0) / (tf + norm)

    @staticmethod
    def _aggregate_query(query_term_ids: Iterable[int]) -> list[tuple[int, int]]:
        counts: dict[int, int] = {}
        for t in query_term_ids:
            counts[t] = counts.get(t, 0) + 1
        return sorted(counts.items())

    def bm25_score(self, query_term_ids: Iterable[int], doc_id: int,
                   params: BM25Params = BM25Params()) -> float:
        """Score one document; repeated query terms multiply their contribution."""
        if self.flavor != FLAVOR_TF:
            raise ValueError("bm25_score requires a term-frequency index")
        if not 0 <= doc_id < self.doc_count:
            raise ValueError(f"unknown document id {doc_id}")
        dl = float(self.doc_lengths[doc_id])
        score = 0.0
        for term_id, qtf in self._aggregate_query(query_term_ids):
            plist = self.postings.get(term_id)
            if plist is None:
                continue
            pos = np.searchsorted(plist.doc_ids, doc_id)
            if pos < len(plist) and plist.doc_ids[pos] == doc_id:
                score += qtf * self._term_score(float(plist.weights[pos]),
                                                term_id, dl, params)
        return score

    def bm25_retrieve(self, query_term_ids: Iterable[int], k: int,
                      params: BM25Params = BM25Params()) -> list[SearchHit]:
        """Exact BM25 top-k over all documents containing >= 1 query term."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if self.flavor != FLAVOR_TF:
            raise ValueError("bm25_retrieve requires a term-frequency index")
        cursors = []
        for term_id, qtf in self._aggregate_query(query_term_ids):
            plist = self.postings.get(term_id)
            if plist is not None and len(plist):
                cursors.append([plist.doc_ids, plist.weights, 0, qtf, term_id])
        if not cursors:
            return []

        lengths = self.doc_lengths
        heap: list[tuple[float, int]] = []
        while cursors:
            current = min(c[0][c[2]] for c in cursors)
            dl = float(lengths[current])
            score = 0.0
            exhausted = False
            for c in cursors:
                if c[0][c[2]] == current:
                    score += c[3] * self._term_score(float(c[1][c[2]]), c[4], dl, params)
                    c[2] += 1
                    if c[2] >= len(c[0]):
                        exhausted = True
            entry = (score, -int(current))
            if len(heap) < k:
                heapq.heappush(heap, entry)
            elif entry > heap[0]:
                heapq.heapreplace(heap, entry)
            if exhausted:
                cursors = [c for c in cursors if c[2] < len(c[0])]

        hits = [SearchHit(-neg_id, score) for score, neg_id in heap]
        hits.sort(key=lambda h: (-h.score, h.internal_id))
        return hits

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic(_MAGIC, _VERSION)
            w.u8(_FLAVOR_CODES[self.flavor])
            w.u64(self.doc_count)
            w.f64(self.avg_doc_length)
            w.array(self.doc_lengths, "<f8")
            w.u64(len(self.postings))
            for term_id in sorted(self.postings):
                plist = self.postings[term_id]
                w.u32(term_id)
                w.u32(len(plist))
                w.array(plist.doc_ids, "<u4")
                w.array(plist.weights, "<f4")

    @classmethod
    def load(cls, path: str) -> "InvertedIndex":
        with open(path, "rb") as fh:
            r = BinaryReader(fh, path)
            r.magic(_MAGIC, _VERSION)
            flavor_code = r.u8()
            if flavor_code not in _FLAVOR_FROM_CODE:
                raise StorageError(f"{path}: unknown posting flavor {flavor_code}")
            index = cls(_FLAVOR_FROM_CODE[flavor_code])
            n = r.u64()
            index.avg_doc_length = r.f64()
            index.doc_lengths = r.array(n, "<f8")
            n_terms = r.u64()
            for _ in range(n_terms):
                term_id = r.u32()
                count = r.u32()
                doc_ids = r.array(count, "<u4").astype(np.int64)
                weights = r.array(count, "<f4")
                index.postings[term_id] = PostingList(term_id, doc_ids, weights)
        return index
