"""Multi-stage retrieval pipeline: candidate generation, optional
intermediate re-ranking of the whole pool, optional final re-ranking of the
best ``topFinal`` entries.

An experiment descriptor (JSON, single object or a one-element list) wires
the stages together. Recognized keys: ``candProv`` (``inverted-bm25``,
``knn-bruteforce`` or ``knn-hnsw``), ``candProvAddConfParam`` (path to the
provider's own config), ``extrType`` + ``modelFinal`` (final re-ranker),
``extrTypeInterm`` + ``modelInterm``, ``candQty``, ``topFinal``,
``testOnly``, ``runId``. Relative paths are resolved against the
descriptor's directory. All referenced files are opened at construction
time, so a broken experiment fails before the first query.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field


from .ann import BruteForceIndex, HnswIndex
from .extractors import (
    ExtractorResources,
    FeatureExtractor,
    build_extractors,
    extract,
    load_extractor_configs,
)
from .forward import ForwardIndexField, QueryEntry, load_forward, tokenize_parsed
from .inverted import BM25Params, InvertedIndex
from .knn_export import SCENARIO_COMPOSITE, LoadedExport, load_export
from .letor import LinearModel, QueryGroup, rank_candidates
from .vectors import Space, IP_SPARSE

PROVIDER_KINDS = ("inverted-bm25", "knn-bruteforce", "knn-hnsw")


@dataclass(frozen=True)
class ExperimentDescriptor:
    cand_prov: str
    cand_prov_config: str
    extr_type: str | None = None
    model_final: str | None = None
    extr_type_interm: str | None = None
    model_interm: str | None = None
    cand_qty: int = 200
    top_final: int = 150
    test_only: bool = False
    run_id: str = "run"
    base_dir: str = "."

    def __post_init__(self):
        if self.cand_prov not in PROVIDER_KINDS:
            raise ValueError(f"unknown candidate provider {self.cand_prov!r}")
        if self.cand_qty < 1 or self.top_final < 1:
            raise ValueError("candQty and topFinal must be >= 1")
        if self.cand_qty < self.top_final:
            raise ValueError("candQty must be >= topFinal")

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def load_descriptor(path: str) -> ExperimentDescriptor:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if isinstance(obj, list):
        if not obj:
            raise ValueError(f"{path}: empty descriptor list")
        obj = obj[0]
    return descriptor_from_dict(obj, base_dir=os.path.dirname(os.path.abspath(path)))


def descriptor_from_dict(obj: dict, base_dir: str = ".") -> ExperimentDescriptor:
    return ExperimentDescriptor(
        cand_prov=obj.get("candProv", "inverted-bm25"),
        cand_prov_config=obj["candProvAddConfParam"],
        extr_type=obj.get("extrType"),
        model_final=obj.get("modelFinal"),
        extr_type_interm=obj.get("extrTypeInterm"),
        model_interm=obj.get("modelInterm"),
        cand_qty=int(obj.get("candQty", 200)),
        top_final=int(obj.get("topFinal", 150)),
        test_only=bool(int(obj.get("testOnly", 0))),
        run_id=str(obj.get("runId", "run")),
        base_dir=base_dir,
    )


# --- candidate providers --------------------------------------------------------


class CandidateProvider:
    """Returns (docno, score) best-first; scores are higher-is-better."""

    name = "provider"

    def search(self, query: QueryEntry, k: int) -> list[tuple[str, float]]:
        raise NotImplementedError

    def search_vector(self, vector, k: int) -> list[tuple[str, float]]:
        raise NotImplementedError("this provider only searches query entries")


class InvertedBm25Provider(CandidateProvider):
    name = "inverted-bm25"

    def __init__(self, config: dict, base_dir: str):
        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base_dir, p)

        self.index = InvertedIndex.load(resolve(config["invertedIndex"]))
        self.fwd = load_forward(resolve(config["forwardIndex"]))
        self.query_field = config.get("queryFieldName", "text")
        self.params = BM25Params(k1=float(config.get("k1", 1.2)),
                                 b=float(config.get("b", 0.75)))

    def search(self, query: QueryEntry, k: int) -> list[tuple[str, float]]:
        tokens = tokenize_parsed(query.fields.get(self.query_field, ""))
        term_ids = self.fwd.term_ids(tokens)
        hits = self.index.bm25_retrieve(term_ids, k, self.params) if term_ids else []
        return [(self.fwd.docnos[h.internal_id], h.score) for h in hits]


class KnnProvider(CandidateProvider):
    """Searches exported query/document vectors, brute force or HNSW."""

    def __init__(self, config: dict, base_dir: str, method: str):
        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base_dir, p)

        self.name = f"knn-{method}"
        self.method = method
        forward_dir = resolve(config.get("forwardDir", "."))
        fields_needed = {}
        prefix = resolve(config["export"])
        with open(prefix + ".manifest.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        for f in manifest["fields"]:
            fname = f["extractor"]["indexFieldName"]
            if fname not in fields_needed:
                fields_needed[fname] = load_forward(
                    os.path.join(forward_dir, f"{fname}.fwd"))
        self.export: LoadedExport = load_export(prefix, fields_needed, base_dir)
        self.docnos = next(iter(fields_needed.values())).docnos
        self.weights = config.get("weights")  # adjustable without re-export
        self.ef = int(config.get("ef", 100))

        if method == "hnsw":
            if self.export.scenario != SCENARIO_COMPOSITE:
                raise ValueError("knn-hnsw requires a composite-scenario export; "
                                 "use knn-bruteforce for per-field exports")
            self.index = HnswIndex.load(resolve(config["indexFile"]))
            if len(self.index) != len(self.docnos):
                raise ValueError("HNSW index size does not match the export")
        else:
            space = Space(IP_SPARSE) if self.export.scenario == SCENARIO_COMPOSITE \
                else Space("composite_ip")
            self.index = BruteForceIndex(space)
            self.index.add_many(self.export.doc_vectors)

    def _to_docnos(self, hits) -> list[tuple[str, float]]:
        return [(self.docnos[h.internal_id], h.score) for h in hits]

    def search(self, query: QueryEntry, k: int) -> list[tuple[str, float]]:
        qv = self.export.query_vector(query, self.weights)
        return self.search_vector(qv, k)

    def search_vector(self, vector, k: int) -> list[tuple[str, float]]:
        if self.method == "hnsw":
            hits = self.index.search(vector, k, ef=max(self.ef, k))
        else:
            hits = self.index.search(vector, k)
        return self._to_docnos(hits)


def build_provider(kind: str, config_path: str, base_dir: str) -> CandidateProvider:
    with open(config_path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    config_dir = os.path.dirname(os.path.abspath(config_path))
    if kind == "inverted-bm25":
        return InvertedBm25Provider(config, config_dir)
    if kind == "knn-bruteforce":
        return KnnProvider(config, config_dir, "bruteforce")
    return KnnProvider(config, config_dir, "hnsw")


# --- the pipeline ---------------------------------------------------------------


@dataclass(frozen=True)
class StageInfo:
    name: str
    input_size: int
    output_size: int


@dataclass
class PipelineResult:
    query_id: str
    ranking: list[tuple[str, float]]
    stages: list[StageInfo] = field(default_factory=list)


class _Reranker:
    def __init__(self, extractors: list[FeatureExtractor], model: LinearModel,
                 docno_to_id: dict[str, int]):
        if len(model.columns) != len(extractors):
            raise ValueError(f"model has {len(model.columns)} weights for "
                             f"{len(extractors)} extractors")
        self.extractors = extractors
        self.model = model
        self.docno_to_id = docno_to_id

    def rerank(self, query: QueryEntry,
               candidates: list[tuple[str, float]]) -> list[tuple[str, float]]:
        docnos = [d for d, _ in candidates]
        doc_ids = [self.docno_to_id[d] for d in docnos]
        matrix = extract(self.extractors, query, doc_ids, docnos)
        group = QueryGroup(query.docno, docnos, matrix.values)
        return rank_candidates(self.model.weights, group)


class Pipeline:
    """Loads every referenced artifact eagerly; queries are then pure reads."""

    def __init__(self, descriptor: ExperimentDescriptor,
                 forward_indices: dict[str, ForwardIndexField] | None = None,
                 forward_dir: str | None = None):
        self.descriptor = descriptor
        self.provider = build_provider(descriptor.cand_prov,
                                       descriptor.resolve(descriptor.cand_prov_config),
                                       descriptor.base_dir)
        self._fwd_dir = forward_dir or descriptor.base_dir
        self._forward = dict(forward_indices or {})
        self.interm = self._load_reranker(descriptor.extr_type_interm,
                                          descriptor.model_interm)
        self.final = self._load_reranker(descriptor.extr_type,
                                         descriptor.model_final)

    def _forward_for(self, name: str) -> ForwardIndexField:
        if name not in self._forward:
            path = os.path.join(self._fwd_dir, f"{name}.fwd")
            if not os.path.exists(path):
                raise FileNotFoundError(f"forward index for field {name!r} not found "
                                        f"at {path}")
            self._forward[name] = load_forward(path)
        return self._forward[name]

    def _load_reranker(self, extr_path: str | None,
                       model_path: str | None) -> _Reranker | None:
        if not extr_path:
            return None
        if not model_path:
            raise ValueError("re-ranker extractor config given without a model")
        configs = load_extractor_configs(self.descriptor.resolve(extr_path))
        forward = {c.index_field: self._forward_for(c.index_field) for c in configs}
        resources = ExtractorResources(base_dir=self.descriptor.base_dir)
        extractors = build_extractors(configs, forward, resources)
        model = LinearModel.load(self.descriptor.resolve(model_path))
        any_fwd = next(iter(forward.values()))
        docno_to_id = {docno: i for i, docno in enumerate(any_fwd.docnos)}
        return _Reranker(extractors, model, docno_to_id)

    def run(self, query: QueryEntry, k: int | None = None) -> PipelineResult:
        wanted = self.descriptor.cand_qty
        candidates = self.provider.search(query, wanted)
        stages = [StageInfo(self.provider.name, wanted, len(candidates))]

        if self.interm is not None:
            reranked = self.interm.rerank(query, candidates)
            stages.append(StageInfo("intermediate", len(candidates), len(reranked)))
            candidates = reranked

        if self.final is not None:
            head = candidates[: self.descriptor.top_final]
            reranked = self.final.rerank(query, head)
            stages.append(StageInfo("final", len(candidates), len(reranked)))
            candidates = reranked

        if k is not None:
            candidates = candidates[:k]
        return PipelineResult(query.docno, candidates, stages)
