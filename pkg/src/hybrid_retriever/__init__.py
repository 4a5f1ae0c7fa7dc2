"""Hybrid sparse-dense text retrieval engine.

A distance-agnostic k-NN core (brute force, HNSW, exact DAAT inverted-file
inner-product search) plus a multi-stage ranking pipeline (candidate
generation, feature extraction, learned linear fusion) with export of
per-field and composite query/document vectors, so a trained fusion model
can run as a single maximum-inner-product search.
"""

from .ann import (
    BruteForceIndex,
    HnswIndex,
    HnswParams,
    SearchHit,
    assign_level,
    bf_search,
    select_diverse_neighbors,
)
from .embeddings import EmbeddingTable
from .extractors import (
    ConfigError,
    ExtractorConfig,
    ExtractorResources,
    FeatureMatrix,
    avg_embed_feature,
    bm25_feature,
    build_extractors,
    extract,
    load_extractor_configs,
    parse_extractor_configs,
    proximity_feature,
)
from .forward import (
    DocumentEntry,
    FieldSpec,
    ForwardIndexField,
    QueryEntry,
    build_forward,
    load_forward,
    parse_jsonl,
    save_forward,
    tokenize_parsed,
)
from .inverted import BM25Params, InvertedIndex, PostingList
from .knn_export import (
    Bm25Vectorizer,
    CompositeExport,
    EmbedVectorizer,
    PerFieldExport,
    export_bm25_vectors,
    export_embed_vectors,
    load_export,
    save_export,
)
from .letor import (
    CoordinateAscentOptions,
    LinearModel,
    QueryGroup,
    RunOutput,
    coordinate_ascent_train,
    evaluate_run,
    export_ranklib,
    load_qrels,
    load_run,
    mrr,
    ndcg_at_k,
    rank_with_model,
    save_run,
)
from .model1 import (
    Model1Table,
    build_bitext,
    chunk_document,
    model1_score,
    train_model1,
)
from .pipeline import (
    ExperimentDescriptor,
    Pipeline,
    PipelineResult,
    StageInfo,
    load_descriptor,
)
from .server import QueryServer, serve
from .vectors import (
    CompositeField,
    CompositeVector,
    DenseVector,
    Space,
    SparseVector,
    composite_score,
    cosine_similarity,
    dense,
    dot_dense,
    dot_sparse,
    l2_distance,
    normalize_l2,
)

__version__ = "0.1.0"
