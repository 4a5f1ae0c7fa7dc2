"""Turn inner-product-equivalent scorers into query/document vectors.

Only scorers whose feature equals an inner product can be exported: BM25
(document side carries the saturated, length-normalized term frequency;
query side carries query-tf times IDF) and averaged word embeddings in
cosine mode (both sides are L2-normalized centroids). Model 1 and proximity
stay re-ranking-only.

Two scenarios ship the vectors to a k-NN index:

* per-field: one vector per scorer per document, assembled into a composite
  vector; field weights live on the query side, so they stay adjustable
  after export.
* composite: one concatenated vector per document in a shifted term-id
  space, each field scaled by sqrt(weight) on both sides; weights are baked
  in and must be nonnegative.

Export files are ``<prefix>.manifest.json`` (field schema + extractor
parameters needed to vectorize queries later) and ``<prefix>.vec`` with the
payloads in the ann-index binary layout (magic ``HRXV``).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .extractors import ConfigError, ExtractorConfig, _coerce_bool, _coerce_float, embed_centroid
from .forward import ForwardIndexField, QueryEntry, tokenize_parsed
from .storage import BinaryReader, BinaryWriter, StorageError
from .vectors import (
    CompositeField,
    CompositeVector,
    SparseVector,
    dense,
)

_MAGIC = b"HRXV"
_VERSION = 1

SCENARIO_PER_FIELD = "per-field"
SCENARIO_COMPOSITE = "composite"


class Bm25Vectorizer:
    """dot(query_vector, doc_vector) == the BM25 feature, exactly in exact
    arithmetic (f32 storage brings it to ~1e-7 relative)."""

    kind = "sparse"

    def __init__(self, fwd: ForwardIndexField, query_field: str = "text",
                 k1: float = 1.2, b: float = 0.75, name: str | None = None,
                 index_field: str | None = None):
        self.fwd = fwd
        self.query_field = query_field
        self.k1 = k1
        self.b = b
        self.name = name or "bm25"
        self.index_field = index_field or query_field
        self.size = len(fwd.vocab)

    def doc_vector(self, doc_id: int) -> SparseVector:
        bag_ids, bag_counts = self.fwd.bags[doc_id]
        dl = float(bag_counts.sum())
        norm = self.k1 * (1.0 - self.b + self.b * dl / self.fwd.avg_length)
        pairs = []
        for tid, tf in zip(bag_ids.tolist(), bag_counts.tolist()):
            tf = float(tf)
            pairs.append((tid, tf * (self.k1 + 1.0) / (tf + norm)))
        return SparseVector.from_pairs(pairs)

    def query_vector_from_tokens(self, tokens: Sequence[str]) -> SparseVector:
        counts: dict[int, int] = {}
        for tid in self.fwd.term_ids(tokens):
            counts[tid] = counts.get(tid, 0) + 1
        n = self.fwd.doc_count
        pairs = []
        for tid, qtf in counts.items():
            df = self.fwd.doc_freq[tid]
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            pairs.append((tid, qtf * idf))
        return SparseVector.from_pairs(pairs)

    def query_vector(self, query: QueryEntry) -> SparseVector:
        return self.query_vector_from_tokens(
            tokenize_parsed(query.fields.get(self.query_field, "")))

    def flagged_docs(self) -> set[int]:
        return set()

    def extractor_params(self) -> dict:
        return {"type": "bm25", "indexFieldName": self.index_field,
                "queryFieldName": self.query_field, "k1": self.k1, "b": self.b}


class EmbedVectorizer:
    """Normalized tf-idf-weighted centroids; dot == the cosine feature."""

    kind = "dense"

    def __init__(self, fwd: ForwardIndexField, query_table: EmbeddingTable,
                 doc_table: EmbeddingTable, query_field: str = "text",
                 use_idf: bool = True, name: str | None = None,
                 query_embed_file: str = "", doc_embed_file: str = "",
                 index_field: str | None = None):
        if query_table.dim != doc_table.dim:
            raise ConfigError("query and document embedding dimensions differ")
        self.fwd = fwd
        self.query_table = query_table
        self.doc_table = doc_table
        self.query_field = query_field
        self.use_idf = use_idf
        self.name = name or "avgWordEmbed"
        self.index_field = index_field or query_field
        self.size = doc_table.dim
        self.query_embed_file = query_embed_file
        self.doc_embed_file = doc_embed_file
        self._flagged: set[int] = set()

    def _doc_tokens(self, doc_id: int) -> list[str]:
        bag_ids, bag_counts = self.fwd.bags[doc_id]
        out = []
        for t, c in zip(bag_ids.tolist(), bag_counts.tolist()):
            out.extend([self.fwd.term_for_id(t)] * c)
        return out

    def doc_vector(self, doc_id: int) -> np.ndarray:
        centroid = embed_centroid(self._doc_tokens(doc_id), self.doc_table,
                                  self.fwd, self.use_idf, use_l2_norm=True)
        if centroid is None:
            self._flagged.add(doc_id)
            return np.zeros(self.size, dtype=np.float32)
        return centroid

    def query_vector_from_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        centroid = embed_centroid(tokens, self.query_table, self.fwd,
                                  self.use_idf, use_l2_norm=True)
        if centroid is None:
            return np.zeros(self.size, dtype=np.float32)
        return centroid

    def query_vector(self, query: QueryEntry) -> np.ndarray:
        return self.query_vector_from_tokens(
            tokenize_parsed(query.fields.get(self.query_field, "")))

    def flagged_docs(self) -> set[int]:
        return set(self._flagged)

    def extractor_params(self) -> dict:
        return {"type": "avgWordEmbed", "indexFieldName": self.index_field,
                "queryFieldName": self.query_field,
                "queryEmbedFile": self.query_embed_file,
                "docEmbedFile": self.doc_embed_file,
                "useIDFWeight": self.use_idf, "distType": "cosine"}


Vectorizer = Bm25Vectorizer | EmbedVectorizer


def export_bm25_vectors(fwd: ForwardIndexField, query_field: str = "text",
                        k1: float = 1.2, b: float = 0.75,
                        name: str | None = None) -> Bm25Vectorizer:
    return Bm25Vectorizer(fwd, query_field, k1, b, name)


def export_embed_vectors(fwd: ForwardIndexField, query_table: EmbeddingTable,
                         doc_table: EmbeddingTable, query_field: str = "text",
                         use_idf: bool = True, name: str | None = None,
                         **paths) -> EmbedVectorizer:
    return EmbedVectorizer(fwd, query_table, doc_table, query_field, use_idf,
                           name, **paths)


def vectorizer_from_config(config: ExtractorConfig,
                           forward_indices: dict[str, ForwardIndexField],
                           base_dir: str = ".") -> Vectorizer:
    """Build the export-side twin of a scoring configuration entry."""
    fwd = forward_indices.get(config.index_field)
    if fwd is None:
        raise ConfigError(f"export references unindexed field {config.index_field!r}")
    if config.type == "bm25":
        v = Bm25Vectorizer(fwd, config.query_field,
                           _coerce_float(config.params.get("k1"), 1.2),
                           _coerce_float(config.params.get("b"), 0.75),
                           name=f"bm25({config.index_field})",
                           index_field=config.index_field)
    elif config.type == "avgWordEmbed":
        dist = str(config.params.get("distType", "cosine"))
        if dist not in ("cosine", "ip"):
            raise ConfigError(
                f"avgWordEmbed with distType {dist!r} is not inner-product "
                f"equivalent; use cosine for export")
        q_path = config.params["queryEmbedFile"]
        d_path = config.params["docEmbedFile"]

        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base_dir, p)

        v = EmbedVectorizer(fwd, EmbeddingTable.load(resolve(q_path)),
                            EmbeddingTable.load(resolve(d_path)),
                            config.query_field,
                            _coerce_bool(config.params.get("useIDFWeight"), True),
                            name=f"avgWordEmbed({config.index_field})",
                            query_embed_file=q_path, doc_embed_file=d_path,
                            index_field=config.index_field)
    else:
        raise ConfigError(f"extractor type {config.type!r} is not inner-product "
                          f"equivalent and cannot be exported")
    return v


# --- scenario 1: per-field composite with adjustable weights ------------------------


class PerFieldExport:
    """Document composites are weight-free; queries carry the live weights."""

    def __init__(self, vectorizers: Sequence[Vectorizer]):
        names = [v.name for v in vectorizers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate export field names: {names}")
        self.vectorizers = list(vectorizers)

    def doc_composite(self, doc_id: int) -> CompositeVector:
        return CompositeVector(tuple(
            CompositeField(v.name, v.doc_vector(doc_id), 1.0)
            for v in self.vectorizers))

    def query_composite(self, query: QueryEntry,
                        weights: dict[str, float]) -> CompositeVector:
        missing = [v.name for v in self.vectorizers if v.name not in weights]
        if missing:
            raise ValueError(f"missing weights for fields: {missing}")
        return CompositeVector(tuple(
            CompositeField(v.name, v.query_vector(query), float(weights[v.name]))
            for v in self.vectorizers))


# --- scenario 2: one concatenated vector, weights baked in --------------------------


class CompositeExport:
    """Concatenation into a shifted term-id space, scaled by sqrt(weight)."""

    def __init__(self, vectorizers: Sequence[Vectorizer], weights: dict[str, float]):
        self.vectorizers = list(vectorizers)
        self.weights = dict(weights)
        self.offsets = []
        offset = 0
        for v in self.vectorizers:
            if v.name not in self.weights:
                raise ValueError(f"missing weight for field {v.name!r}")
            if self.weights[v.name] < 0:
                raise ValueError(
                    f"negative weight for field {v.name!r}: composite export "
                    f"bakes sqrt(weight) into both sides; use the per-field "
                    f"scenario for negative weights")
            self.offsets.append(offset)
            offset += v.size
        self.total_size = offset

    def _concat(self, parts: list[tuple[int, object, float]]) -> SparseVector:
        pairs: list[tuple[int, float]] = []
        for offset, vec, scale in parts:
            if isinstance(vec, SparseVector):
                for tid, val in zip(vec.term_ids.tolist(), vec.values.tolist()):
                    pairs.append((offset + tid, scale * val))
            else:
                for i, val in enumerate(np.asarray(vec, dtype=np.float32).tolist()):
                    if val != 0.0:
                        pairs.append((offset + i, scale * val))
        return SparseVector.from_pairs(pairs)

    def _parts(self, vector_of) -> SparseVector:
        parts = []
        for offset, v in zip(self.offsets, self.vectorizers):
            scale = math.sqrt(self.weights[v.name])
            parts.append((offset, vector_of(v), scale))
        return self._concat(parts)

    def doc_vector(self, doc_id: int) -> SparseVector:
        return self._parts(lambda v: v.doc_vector(doc_id))

    def query_vector(self, query: QueryEntry) -> SparseVector:
        return self._parts(lambda v: v.query_vector(query))


# --- persistence ---------------------------------------------------------------------


def _manifest(vectorizers: Sequence[Vectorizer], scenario: str,
              weights: dict[str, float] | None) -> dict:
    return {
        "version": _VERSION,
        "scenario": scenario,
        "weights": weights or {v.name: 1.0 for v in vectorizers},
        "fields": [
            {"name": v.name, "kind": v.kind, "size": v.size,
             "extractor": v.extractor_params()}
            for v in vectorizers
        ],
    }


def save_export(prefix: str, vectorizers: Sequence[Vectorizer], doc_count: int,
                scenario: str = SCENARIO_PER_FIELD,
                weights: dict[str, float] | None = None) -> None:
    """Write manifest + vector payloads for every document.

    Scenario ``per-field`` stores one section per field; ``composite``
    stores the single concatenated sparse section with weights baked in.
    """
    if scenario not in (SCENARIO_PER_FIELD, SCENARIO_COMPOSITE):
        raise ValueError(f"unknown scenario {scenario!r}")
    manifest = _manifest(vectorizers, scenario, weights)
    with open(prefix + ".vec", "wb") as fh:
        w = BinaryWriter(fh)
        w.magic(_MAGIC, _VERSION)
        w.u8(0 if scenario == SCENARIO_PER_FIELD else 1)
        w.u64(doc_count)
        if scenario == SCENARIO_PER_FIELD:
            w.u8(len(vectorizers))
            for v in vectorizers:
                w.u8(0 if v.kind == "sparse" else 1)
                if v.kind == "dense":
                    w.u32(v.size)
                    for doc_id in range(doc_count):
                        w.array(v.doc_vector(doc_id), "<f4")
                else:
                    for doc_id in range(doc_count):
                        sv = v.doc_vector(doc_id)
                        w.u32(len(sv))
                        w.array(sv.term_ids, "<u4")
                        w.array(sv.values, "<f4")
        else:
            composite = CompositeExport(vectorizers, manifest["weights"])
            w.u8(1)
            w.u8(0)
            for doc_id in range(doc_count):
                sv = composite.doc_vector(doc_id)
                w.u32(len(sv))
                w.array(sv.term_ids, "<u4")
                w.array(sv.values, "<f4")
    with open(prefix + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class LoadedExport:
    scenario: str
    manifest: dict
    doc_vectors: list          # CompositeVector (per-field) or SparseVector (composite)
    vectorizers: list          # rebuilt query-side vectorizers

    def query_vector(self, query: QueryEntry, weights: dict[str, float] | None = None):
        if self.scenario == SCENARIO_PER_FIELD:
            export = PerFieldExport(self.vectorizers)
            return export.query_composite(query, weights or self.manifest["weights"])
        composite = CompositeExport(self.vectorizers, self.manifest["weights"])
        return composite.query_vector(query)


def load_export(prefix: str, forward_indices: dict[str, ForwardIndexField],
                base_dir: str = ".") -> LoadedExport:
    with open(prefix + ".manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    scenario = manifest["scenario"]
    vectorizers = [
        vectorizer_from_config(
            ExtractorConfig(f["extractor"]["type"], f["extractor"]),
            forward_indices, base_dir)
        for f in manifest["fields"]
    ]
    for v, f in zip(vectorizers, manifest["fields"]):
        v.name = f["name"]

    with open(prefix + ".vec", "rb") as fh:
        r = BinaryReader(fh, prefix + ".vec")
        r.magic(_MAGIC, _VERSION)
        scen_code = r.u8()
        if (scen_code == 0) != (scenario == SCENARIO_PER_FIELD):
            raise StorageError(f"{prefix}.vec: scenario does not match manifest")
        n = r.u64()
        n_fields = r.u8()
        if scenario == SCENARIO_PER_FIELD:
            sections = []
            for f in manifest["fields"]:
                kind = r.u8()
                if kind == 1:
                    dim = r.u32()
                    sections.append([r.array(dim, "<f4") for _ in range(n)])
                else:
                    vecs = []
                    for _ in range(n):
                        nnz = r.u32()
                        ids = r.array(nnz, "<u4").astype(np.int64)
                        vals = r.array(nnz, "<f4")
                        vecs.append(SparseVector(ids, vals))
                    sections.append(vecs)
            doc_vectors = [
                CompositeVector(tuple(
                    CompositeField(f["name"], sections[fi][doc_id], 1.0)
                    for fi, f in enumerate(manifest["fields"])))
                for doc_id in range(n)
            ]
        else:
            r.u8()  # single sparse section marker
            doc_vectors = []
            for _ in range(n):
                nnz = r.u32()
                ids = r.array(nnz, "<u4").astype(np.int64)
                vals = r.array(nnz, "<f4")
                doc_vectors.append(SparseVector(ids, vals))
    return LoadedExport(scenario=scenario, manifest=manifest,
                        doc_vectors=doc_vectors, vectorizers=vectorizers)
