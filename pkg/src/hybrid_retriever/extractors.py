"""Feature extractors: per query-document scores computed from forward indices.

Each extractor is configured by one entry of a scoring-configuration JSON
file of the shape ``{"extractors": [{"type": ..., "params": {...}}, ...]}``.
Recognized types are ``bm25``, ``proximity``, ``model1`` and
``avgWordEmbed`` (plus the alias ``TFIDFSimilarity`` with
``similType: bm25``). Parameter values may arrive as strings, mirroring how
such config files are commonly written, and are coerced.

Extraction of a candidate list is pure per query: tables and indices are
immutable after loading, so running queries concurrently is safe.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .forward import ForwardIndexField, QueryEntry, tokenize_parsed
from .model1 import Model1Table, model1_score_bag
from .vectors import cosine_similarity, l2_distance, normalize_l2

L2_SENTINEL = 1.0e6  # "infinitely far" for embedding rows with no vocabulary overlap

DEFAULT_PROXIMITY_WINDOW = 8


class ConfigError(ValueError):
    """A scoring configuration references an unknown type or bad parameter."""


@dataclass(frozen=True)
class ExtractorConfig:
    type: str
    params: dict

    @property
    def index_field(self) -> str:
        return self.params["indexFieldName"]

    @property
    def query_field(self) -> str:
        return self.params.get("queryFieldName", self.params["indexFieldName"])


_CANONICAL_TYPES = ("bm25", "proximity", "model1", "avgWordEmbed")


def _coerce_float(value, default: float) -> float:
    return default if value is None else float(value)


def _coerce_bool(value, default: bool) -> bool:
    if value is None:
        return default
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("true", "1", "yes")


def parse_extractor_configs(obj: dict) -> list[ExtractorConfig]:
    """Parse the JSON object form; raises ConfigError naming unknown types."""
    if "extractors" not in obj or not isinstance(obj["extractors"], list):
        raise ConfigError("configuration must contain an 'extractors' array")
    out = []
    for entry in obj["extractors"]:
        if "type" not in entry:
            raise ConfigError("extractor entry lacks mandatory 'type'")
        etype = entry["type"]
        params = dict(entry.get("params", {}))
        if etype == "TFIDFSimilarity":
            simil = str(params.get("similType", "bm25")).lower()
            if simil != "bm25":
                raise ConfigError(f"unsupported similType {simil!r} for TFIDFSimilarity")
            etype = "bm25"
        if etype not in _CANONICAL_TYPES:
            raise ConfigError(f"unknown extractor type {etype!r}")
        if "indexFieldName" not in params:
            raise ConfigError(f"extractor {etype!r} lacks 'indexFieldName'")
        out.append(ExtractorConfig(etype, params))
    return out


def load_extractor_configs(path: str) -> list[ExtractorConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_extractor_configs(json.load(fh))


@dataclass
class FeatureMatrix:
    """Dense feature rows for (query, docno) pairs, columns in config order."""

    columns: list[str]
    query_ids: list[str]
    docnos: list[str]
    values: np.ndarray                       # float64, shape (rows, columns)
    flagged: set[tuple[int, int]] = field(default_factory=set)

    @property
    def row_count(self) -> int:
        return len(self.docnos)


# --- individual feature computations -------------------------------------------


def bm25_feature(query_term_ids: Sequence[int], fwd: ForwardIndexField,
                 doc_id: int, k1: float, b: float) -> float:
    """BM25 from forward-index bags; same formula the inverted index uses."""
    bag_ids, bag_counts = fwd.bags[doc_id]
    dl = float(bag_counts.sum())
    n = fwd.doc_count
    counts: dict[int, int] = {}
    for t in query_term_ids:
        counts[t] = counts.get(t, 0) + 1
    score = 0.0
    for term_id, qtf in sorted(counts.items()):
        pos = np.searchsorted(bag_ids, term_id)
        if pos >= len(bag_ids) or bag_ids[pos] != term_id:
            continue
        tf = float(bag_counts[pos])
        df = fwd.doc_freq[term_id]
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        norm = k1 * (1.0 - b + b * dl / fwd.avg_length)
        score += qtf * (idf * tf * (k1 + 1.0) / (tf + norm))
    return score


def _pair_occurrences(positions_a: np.ndarray, positions_b: np.ndarray,
                      window: int) -> tuple[int, int]:
    """(ordered, unordered) occurrence counts of a term pair within a window.

    Ordered requires a's occurrence before b's; both require the positions
    to differ by at most ``window``.
    """
    ordered = 0
    unordered = 0
    for pa in positions_a.tolist():
        for pb in positions_b.tolist():
            if abs(pa - pb) <= window:
                unordered += 1
                if pa < pb:
                    ordered += 1
    return ordered, unordered


class ProximityScorer:
    """BM25 over pseudo-terms built from query-term pairs.

    A pair occurs in a document when both terms appear within the window;
    the ordered variant additionally requires query order to be preserved.
    Pair document frequencies are computed on the fly (and cached) by
    scanning the position lists of the whole collection.
    """

    def __init__(self, fwd: ForwardIndexField, window: int = DEFAULT_PROXIMITY_WINDOW,
                 k1: float = 1.2, b: float = 0.75):
        if not fwd.positions_kept:
            raise ConfigError("proximity scoring requires a field indexed with positions")
        self.fwd = fwd
        self.window = window
        self.k1 = k1
        self.b = b
        self._df_cache: dict[tuple[int, int], tuple[int, int]] = {}

    def _positions(self, doc_id: int, term_id: int) -> np.ndarray:
        seq = self.fwd.sequences[doc_id]
        return np.nonzero(seq == term_id)[0]

    def _pair_doc_freqs(self, a: int, b: int) -> tuple[int, int]:
        """Collection (ordered_df, unordered_df) for term pair (a, b)."""
        key = (a, b)
        cached = self._df_cache.get(key)
        if cached is not None:
            return cached
        ordered_df = 0
        unordered_df = 0
        for doc_id in range(self.fwd.doc_count):
            pa = self._positions(doc_id, a)
            if not len(pa):
                continue
            pb = self._positions(doc_id, b)
            if not len(pb):
                continue
            o, u = _pair_occurrences(pa, pb, self.window)
            ordered_df += 1 if o else 0
            unordered_df += 1 if u else 0
        self._df_cache[key] = (ordered_df, unordered_df)
        return ordered_df, unordered_df

    def _bm25_pair(self, tf: int, df: int, dl: float) -> float:
        if tf == 0 or df == 0:
            return 0.0
        n = self.fwd.doc_count
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        norm = self.k1 * (1.0 - self.b + self.b * dl / self.fwd.avg_length)
        return idf * tf * (self.k1 + 1.0) / (tf + norm)

    def score(self, query_term_ids: Sequence[int], doc_id: int) -> float:
        terms = list(dict.fromkeys(query_term_ids))  # unique, query order
        if len(terms) < 2:
            return 0.0
        dl = self.fwd.doc_length(doc_id)
        total = 0.0
        for i in range(len(terms)):
            for j in range(i + 1, len(terms)):
                a, b = terms[i], terms[j]
                pa = self._positions(doc_id, a)
                pb = self._positions(doc_id, b)
                if len(pa) and len(pb):
                    ordered_tf, unordered_tf = _pair_occurrences(pa, pb, self.window)
                else:
                    ordered_tf = unordered_tf = 0
                ordered_df, unordered_df = self._pair_doc_freqs(a, b)
                total += self._bm25_pair(ordered_tf, ordered_df, dl)
                total += self._bm25_pair(unordered_tf, unordered_df, dl)
        return total


def proximity_feature(query_term_ids: Sequence[int], fwd: ForwardIndexField,
                      doc_id: int, window: int = DEFAULT_PROXIMITY_WINDOW,
                      k1: float = 1.2, b: float = 0.75) -> float:
    return ProximityScorer(fwd, window, k1, b).score(query_term_ids, doc_id)


def _idf_for(fwd: ForwardIndexField, token: str) -> float:
    df = 0
    tid = fwd.vocab.get(token)
    if tid is not None:
        df = fwd.doc_freq[tid]
    n = fwd.doc_count
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def embed_centroid(tokens: Sequence[str], table: EmbeddingTable,
                   fwd: ForwardIndexField, use_idf: bool,
                   use_l2_norm: bool) -> np.ndarray | None:
    """tf x idf weighted sum of token embeddings; None when nothing is in
    the embedding vocabulary."""
    counts: dict[str, int] = {}
    for tok in tokens:
        counts[tok] = counts.get(tok, 0) + 1
    acc = np.zeros(table.dim, dtype=np.float64)
    seen = False
    for tok in sorted(counts):
        vec = table.get(tok)
        if vec is None:
            continue
        seen = True
        weight = counts[tok] * (_idf_for(fwd, tok) if use_idf else 1.0)
        acc += weight * vec.astype(np.float64)
    if not seen:
        return None
    out = acc.astype(np.float32)
    return normalize_l2(out) if use_l2_norm else out


def avg_embed_feature(query_tokens: Sequence[str], doc_tokens: Sequence[str],
                      query_table: EmbeddingTable, doc_table: EmbeddingTable,
                      fwd: ForwardIndexField, use_idf: bool = True,
                      use_l2_norm: bool = True,
                      dist_type: str = "l2") -> tuple[float, bool]:
    """Distance between averaged embeddings; returns (value, flagged).

    A side with no in-vocabulary token yields the worst value for the
    distance type (1e6 for l2, 0 for cosine) with the flag set.
    """
    if dist_type not in ("l2", "cosine"):
        raise ConfigError(f"distType must be 'l2' or 'cosine', got {dist_type!r}")
    qv = embed_centroid(query_tokens, query_table, fwd, use_idf, use_l2_norm)
    dv = embed_centroid(doc_tokens, doc_table, fwd, use_idf, use_l2_norm)
    if qv is None or dv is None:
        return (L2_SENTINEL, True) if dist_type == "l2" else (0.0, True)
    if dist_type == "l2":
        return l2_distance(qv, dv), False
    return cosine_similarity(qv, dv), False


# --- the composite extractor -----------------------------------------------------


class FeatureExtractor:
    name: str

    def score(self, query: QueryEntry, doc_id: int) -> tuple[float, bool]:
        raise NotImplementedError


class _Bm25Extractor(FeatureExtractor):
    def __init__(self, config: ExtractorConfig, fwd: ForwardIndexField):
        self.fwd = fwd
        self.query_field = config.query_field
        self.k1 = _coerce_float(config.params.get("k1"), 1.2)
        self.b = _coerce_float(config.params.get("b"), 0.75)
        self.name = f"bm25({config.index_field})"

    def score(self, query, doc_id):
        tokens = tokenize_parsed(query.fields.get(self.query_field, ""))
        return bm25_feature(self.fwd.term_ids(tokens), self.fwd, doc_id,
                            self.k1, self.b), False


class _ProximityExtractor(FeatureExtractor):
    def __init__(self, config: ExtractorConfig, fwd: ForwardIndexField):
        self.query_field = config.query_field
        self.scorer = ProximityScorer(
            fwd,
            window=int(_coerce_float(config.params.get("window"), DEFAULT_PROXIMITY_WINDOW)),
            k1=_coerce_float(config.params.get("k1"), 1.2),
            b=_coerce_float(config.params.get("b"), 0.75),
        )
        self.fwd = fwd
        self.name = f"proximity({config.index_field})"

    def score(self, query, doc_id):
        tokens = tokenize_parsed(query.fields.get(self.query_field, ""))
        return self.scorer.score(self.fwd.term_ids(tokens), doc_id), False


class _Model1Extractor(FeatureExtractor):
    def __init__(self, config: ExtractorConfig, fwd: ForwardIndexField,
                 table: Model1Table):
        self.fwd = fwd
        self.table = table
        self.query_field = config.query_field
        lam = config.params.get("lambda")
        self.lam = None if lam is None else float(lam)
        self.name = f"model1({config.index_field})"

    def score(self, query, doc_id):
        q_tokens = tokenize_parsed(query.fields.get(self.query_field, ""))
        bag_ids, bag_counts = self.fwd.bags[doc_id]
        bag = [(self.fwd.term_for_id(int(t)), int(c))
               for t, c in zip(bag_ids, bag_counts)]
        length = int(bag_counts.sum())
        return model1_score_bag(q_tokens, bag, length, self.table, self.lam), False


class _AvgEmbedExtractor(FeatureExtractor):
    def __init__(self, config: ExtractorConfig, fwd: ForwardIndexField,
                 query_table: EmbeddingTable, doc_table: EmbeddingTable):
        self.fwd = fwd
        self.query_field = config.query_field
        self.query_table = query_table
        self.doc_table = doc_table
        self.use_idf = _coerce_bool(config.params.get("useIDFWeight"), True)
        self.use_l2_norm = _coerce_bool(config.params.get("useL2Norm"), True)
        self.dist_type = str(config.params.get("distType", "l2"))
        self.name = f"avgWordEmbed({config.index_field})"
        # doc tokens come from the stored bag, so the doc centroid is cached
        self._doc_cache: dict[int, np.ndarray | None] = {}

    def doc_tokens(self, doc_id: int) -> list[str]:
        bag_ids, bag_counts = self.fwd.bags[doc_id]
        out = []
        for t, c in zip(bag_ids.tolist(), bag_counts.tolist()):
            out.extend([self.fwd.term_for_id(t)] * c)
        return out

    def score(self, query, doc_id):
        q_tokens = tokenize_parsed(query.fields.get(self.query_field, ""))
        return avg_embed_feature(q_tokens, self.doc_tokens(doc_id),
                                 self.query_table, self.doc_table, self.fwd,
                                 self.use_idf, self.use_l2_norm, self.dist_type)


@dataclass
class ExtractorResources:
    """Lazily loaded side tables referenced by extractor configs."""

    base_dir: str = "."
    model1_tables: dict[str, Model1Table] = field(default_factory=dict)
    embedding_tables: dict[str, EmbeddingTable] = field(default_factory=dict)

    def _resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def model1(self, path: str) -> Model1Table:
        if path not in self.model1_tables:
            self.model1_tables[path] = Model1Table.load(self._resolve(path))
        return self.model1_tables[path]

    def embeddings(self, path: str) -> EmbeddingTable:
        if path not in self.embedding_tables:
            self.embedding_tables[path] = EmbeddingTable.load(self._resolve(path))
        return self.embedding_tables[path]


def build_extractors(configs: Sequence[ExtractorConfig],
                     forward_indices: dict[str, ForwardIndexField],
                     resources: ExtractorResources | None = None) -> list[FeatureExtractor]:
    """Instantiate one extractor per configuration entry, in order."""
    resources = resources or ExtractorResources()
    out: list[FeatureExtractor] = []
    for config in configs:
        fwd = forward_indices.get(config.index_field)
        if fwd is None:
            raise ConfigError(f"extractor {config.type!r} references unindexed field "
                              f"{config.index_field!r}")
        if config.type == "bm25":
            ext: FeatureExtractor = _Bm25Extractor(config, fwd)
        elif config.type == "proximity":
            ext = _ProximityExtractor(config, fwd)
        elif config.type == "model1":
            path = config.params.get("model1File")
            if not path:
                raise ConfigError("model1 extractor lacks 'model1File'")
            ext = _Model1Extractor(config, fwd, resources.model1(path))
        else:
            q_path = config.params.get("queryEmbedFile")
            d_path = config.params.get("docEmbedFile")
            if not q_path or not d_path:
                raise ConfigError("avgWordEmbed extractor lacks embed file paths")
            ext = _AvgEmbedExtractor(config, fwd, resources.embeddings(q_path),
                                     resources.embeddings(d_path))
        out.append(ext)

    names: dict[str, int] = {}
    for ext in out:
        if ext.name in names:
            names[ext.name] += 1
            ext.name = f"{ext.name}#{names[ext.name]}"
        else:
            names[ext.name] = 1
    return out


def extract(extractors: Sequence[FeatureExtractor], query: QueryEntry,
            doc_ids: Sequence[int], docnos: Sequence[str]) -> FeatureMatrix:
    """One row per candidate document, one column per extractor."""
    values = np.zeros((len(doc_ids), len(extractors)), dtype=np.float64)
    flagged: set[tuple[int, int]] = set()
    for row, doc_id in enumerate(doc_ids):
        for col, ext in enumerate(extractors):
            value, flag = ext.score(query, doc_id)
            values[row, col] = value
            if flag:
                flagged.add((row, col))
    return FeatureMatrix(columns=[e.name for e in extractors],
                         query_ids=[query.docno] * len(doc_ids),
                         docnos=list(docnos), values=values, flagged=flagged)
