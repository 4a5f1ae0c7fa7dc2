"""Command-line front end wiring the pipeline stages together.

Subcommands: ingest, build-index, train-model1, train-fusion, export-knn,
query, evaluate, serve. Every subcommand is a thin wrapper over the module
APIs and exits nonzero with a message on any error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .ann import HnswIndex, HnswParams
from .extractors import ExtractorResources, build_extractors, extract, load_extractor_configs
from .forward import build_forward, load_forward, load_jsonl, parse_field_specs, save_forward, tokenize_parsed
from .inverted import FLAVOR_TF, InvertedIndex
from .knn_export import (
    SCENARIO_COMPOSITE,
    SCENARIO_PER_FIELD,
    save_export,
    vectorizer_from_config,
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
    save_run,
)
from .model1 import build_bitext, train_model1
from .pipeline import Pipeline, load_descriptor
from .server import serve
from .vectors import IP_SPARSE, Space


def cmd_ingest(args) -> int:
    specs = parse_field_specs(args.fields)
    entries = load_jsonl(args.input)
    indices = build_forward(entries, specs, keep_positions=args.positions)
    os.makedirs(args.out, exist_ok=True)
    for name, fwd in indices.items():
        path = os.path.join(args.out, f"{name}.fwd")
        save_forward(fwd, path)
        print(f"ingest: {name}: {fwd.doc_count} docs, {len(fwd.vocab)} terms -> {path}")
    return 0


def cmd_build_index(args) -> int:
    if args.type == "inverted":
        fwd = load_forward(args.forward)
        vectors = [fwd.tf_vector(i) for i in range(fwd.doc_count)]
        index = InvertedIndex.build_from_sparse(vectors, flavor=FLAVOR_TF)
        index.save(args.out)
        print(f"build-index: inverted ({index.doc_count} docs, "
              f"{len(index.postings)} terms) -> {args.out}")
        return 0

    # HNSW over a composite-scenario export
    from .knn_export import load_export

    forward_dir = args.forward_dir or os.path.dirname(os.path.abspath(args.export))
    with open(args.export + ".manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest["scenario"] != SCENARIO_COMPOSITE:
        print("build-index: hnsw requires a composite-scenario export", file=sys.stderr)
        return 2
    fields = {}
    for f in manifest["fields"]:
        fname = f["extractor"]["indexFieldName"]
        if fname not in fields:
            fields[fname] = load_forward(os.path.join(forward_dir, f"{fname}.fwd"))
    export = load_export(args.export, fields,
                         os.path.dirname(os.path.abspath(args.export)))
    params = HnswParams(M=args.M, Mmax0=args.Mmax0,
                        ef_construction=args.ef_construction, seed=args.seed)
    index = HnswIndex(Space(IP_SPARSE), params)
    index.add_many(export.doc_vectors)
    index.freeze()
    index.save(args.out)
    print(f"build-index: hnsw ({len(index)} vectors) -> {args.out}")
    return 0


def cmd_train_model1(args) -> int:
    fwd = load_forward(args.forward)
    if not fwd.positions_kept:
        print("train-model1: forward index was built without positions; "
              "re-run ingest with --positions", file=sys.stderr)
        return 2
    queries = load_jsonl(args.queries)
    qrels = load_qrels(args.qrels)
    doc_tokens = {
        docno: [fwd.term_for_id(int(t)) for t in fwd.sequences[i]]
        for i, docno in enumerate(fwd.docnos)
    }
    query_tokens = [(q.docno, tokenize_parsed(q.fields.get(args.query_field, "")))
                    for q in queries]
    bitext = build_bitext(query_tokens, doc_tokens, qrels,
                          max_chunk_len=args.chunk_len)
    table = train_model1(bitext, iterations=args.iterations,
                         prune_threshold=args.prune, lam=getattr(args, "lambda"))
    table.save(args.out)
    print(f"train-model1: {len(bitext)} bitext pairs, {args.iterations} EM "
          f"iterations, final log-likelihood {table.log_likelihoods[-1]:.4f} "
          f"-> {args.out}")
    return 0


def _feature_groups(provider, extractors, queries, cand_qty: int) -> list[QueryGroup]:
    docno_to_id = {docno: i for i, docno in enumerate(extractors[0].fwd.docnos)}
    groups = []
    for query in queries:
        candidates = provider.search(query, cand_qty)
        docnos = [d for d, _ in candidates]
        doc_ids = [docno_to_id[d] for d in docnos]
        matrix = extract(extractors, query, doc_ids, docnos)
        groups.append(QueryGroup(query.docno, docnos, matrix.values))
    return groups


def cmd_train_fusion(args) -> int:
    descriptor = load_descriptor(args.config)
    if descriptor.test_only:
        print("train-fusion: descriptor is testOnly; refusing to train",
              file=sys.stderr)
        return 2
    if not descriptor.extr_type:
        print("train-fusion: descriptor has no extrType to train", file=sys.stderr)
        return 2
    from .pipeline import build_provider

    # only the provider is needed here: the fusion model being trained is the
    # re-ranker, so the pipeline's model files may not exist yet
    provider = build_provider(
        descriptor.cand_prov, descriptor.resolve(descriptor.cand_prov_config),
        descriptor.base_dir)

    configs = load_extractor_configs(descriptor.resolve(descriptor.extr_type))
    forward = {}
    for c in configs:
        if c.index_field not in forward:
            forward[c.index_field] = load_forward(
                os.path.join(args.forward_dir or descriptor.base_dir,
                             f"{c.index_field}.fwd"))
    extractors = build_extractors(configs, forward,
                                  ExtractorResources(base_dir=descriptor.base_dir))

    queries = load_jsonl(args.queries)
    qrels = load_qrels(args.qrels)
    groups = _feature_groups(provider, extractors, queries, descriptor.cand_qty)
    if args.ranklib:
        with open(args.ranklib, "w", encoding="utf-8") as fh:
            export_ranklib(groups, qrels, fh)
        print(f"train-fusion: RankLib training data -> {args.ranklib}")

    options = CoordinateAscentOptions(seed=args.seed)
    result = coordinate_ascent_train(groups, qrels, metric=args.metric,
                                     options=options)
    model = LinearModel(result.model.weights, tuple(e.name for e in extractors))
    model.save(args.out)
    baselines = ", ".join(f"{e.name}={b:.4f}"
                          for e, b in zip(extractors, result.baseline_metrics))
    print(f"train-fusion: training {args.metric} {result.metric:.4f} "
          f"(single-feature baselines: {baselines}) -> {args.out}")
    return 0


def cmd_export_knn(args) -> int:
    configs = load_extractor_configs(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    forward = {}
    for c in configs:
        if c.index_field not in forward:
            forward[c.index_field] = load_forward(
                os.path.join(args.forward_dir, f"{c.index_field}.fwd"))
    vectorizers = [vectorizer_from_config(c, forward, base_dir) for c in configs]
    weights = None
    if args.weights:
        with open(args.weights, "r", encoding="utf-8") as fh:
            weights = {str(k): float(v) for k, v in json.load(fh).items()}
    doc_count = next(iter(forward.values())).doc_count
    save_export(args.out, vectorizers, doc_count, scenario=args.scenario,
                weights=weights)
    print(f"export-knn: {len(vectorizers)} field(s) x {doc_count} docs "
          f"({args.scenario}) -> {args.out}.vec")
    return 0


def cmd_query(args) -> int:
    descriptor = load_descriptor(args.config)
    pipeline = Pipeline(descriptor, forward_dir=args.forward_dir)
    queries = load_jsonl(args.queries)

    def run_one(query):
        return pipeline.run(query, k=args.k)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run_one, queries))
    else:
        results = [run_one(q) for q in queries]

    # output keyed by query id regardless of thread completion order
    run = RunOutput(run_id=descriptor.run_id,
                    rankings={r.query_id: r.ranking
                              for r in sorted(results, key=lambda r: r.query_id)})
    if args.out:
        save_run(run, args.out)
        print(f"query: {len(queries)} queries -> {args.out}")
    else:
        for qid in run.rankings:
            for rank, (docno, score) in enumerate(run.rankings[qid], start=1):
                print(f"{qid} Q0 {docno} {rank} {score!r} {run.run_id}")
    return 0


def cmd_evaluate(args) -> int:
    run = load_run(args.run)
    qrels = load_qrels(args.qrels)
    per_query = evaluate_run(run, qrels, k=args.k)
    ndcg_key = f"ndcg@{args.k}"
    for qid in sorted(per_query):
        m = per_query[qid]
        print(f"{qid}\tndcg@{args.k}={m[ndcg_key]:.4f}\tmrr={m['mrr']:.4f}")
    n = len(per_query)
    mean_ndcg = sum(m[ndcg_key] for m in per_query.values()) / n if n else 0.0
    mean_mrr = sum(m["mrr"] for m in per_query.values()) / n if n else 0.0
    print(f"mean\tndcg@{args.k}={mean_ndcg:.4f}\tmrr={mean_mrr:.4f}")
    return 0


def cmd_serve(args) -> int:
    server = serve(args.config, bind=args.bind, forward_dir=args.forward_dir)
    host, port = server.address
    print(f"serve: listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybrid-retriever",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build forward indices from JSONL documents")
    p.add_argument("--input", required=True, help="documents JSONL file")
    p.add_argument("--out", required=True, help="output directory for .fwd files")
    p.add_argument("--fields", default="text:parsed",
                   help="comma list of field:kind specs (kind: parsed|raw)")
    p.add_argument("--positions", action="store_true",
                   help="keep ordered token sequences (needed by proximity/model1)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-index", help="build an inverted or HNSW index")
    p.add_argument("--type", choices=["inverted", "hnsw"], required=True)
    p.add_argument("--forward", help="forward field file (inverted)")
    p.add_argument("--export", help="export prefix (hnsw)")
    p.add_argument("--forward-dir", help="directory holding <field>.fwd files")
    p.add_argument("--out", required=True)
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--Mmax0", type=int, default=32)
    p.add_argument("--ef-construction", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("train-model1", help="train the lexical translation table")
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--forward", required=True, help="forward field file with positions")
    p.add_argument("--out", required=True)
    p.add_argument("--query-field", default="text")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--chunk-len", type=int, default=16)
    p.add_argument("--prune", type=float, default=1e-6)
    p.add_argument("--lambda", type=float, default=0.1)
    p.set_defaults(func=cmd_train_model1)

    p = sub.add_parser("train-fusion", help="coordinate-ascent training of fusion weights")
    p.add_argument("--config", required=True, help="experiment descriptor JSON")
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out", required=True, help="model JSON output")
    p.add_argument("--forward-dir", help="directory holding <field>.fwd files")
    p.add_argument("--metric", default="mrr", help="mrr or ndcg@K")
    p.add_argument("--ranklib", help="also write RankLib-format training data here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("export-knn", help="export query/document vectors for k-NN search")
    p.add_argument("--config", required=True, help="scoring configuration JSON")
    p.add_argument("--forward-dir", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--scenario", choices=[SCENARIO_PER_FIELD, SCENARIO_COMPOSITE],
                   default=SCENARIO_PER_FIELD)
    p.add_argument("--weights", help="JSON file of field weights")
    p.set_defaults(func=cmd_export_knn)

    p = sub.add_parser("query", help="run queries through the pipeline")
    p.add_argument("--config", required=True, help="experiment descriptor JSON")
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", help="run file (TREC format); stdout when omitted")
    p.add_argument("--forward-dir", help="directory holding <field>.fwd files")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="start the TCP query server")
    p.add_argument("--config", required=True, help="experiment descriptor JSON")
    p.add_argument("--bind", default="127.0.0.1:7654")
    p.add_argument("--forward-dir", help="directory holding <field>.fwd files")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
