"""Shared fixture: a small on-disk workspace with built indices, a trained
translation table, extractor configs and a fusion model."""

import json
import os

import pytest

from hybrid_retriever.forward import FieldSpec, build_forward, load_jsonl, save_forward, tokenize_parsed
from hybrid_retriever.inverted import FLAVOR_TF, InvertedIndex
from hybrid_retriever.letor import LinearModel, load_qrels
from hybrid_retriever.model1 import build_bitext, train_model1
from hybrid_retriever.toydata import write_toy_collection


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyws")
    data = root / "data"
    coll = write_toy_collection(str(data), seed=7, n_topics=10, docs_per_topic=12,
                                n_train_queries=20, n_test_queries=8)

    entries = load_jsonl(str(data / "docs.jsonl"))
    fwds = build_forward(entries,
                         [FieldSpec("text"), FieldSpec("text_unlemm")],
                         keep_positions=True)
    for name, fwd in fwds.items():
        save_forward(fwd, str(root / f"{name}.fwd"))

    text_fwd = fwds["text"]
    inv = InvertedIndex.build_from_sparse(
        [text_fwd.tf_vector(i) for i in range(text_fwd.doc_count)],
        flavor=FLAVOR_TF)
    inv.save(str(root / "text.inv"))

    qrels = load_qrels(str(data / "qrels.txt"))
    queries = load_jsonl(str(data / "queries_train.jsonl"))
    doc_tokens = {
        docno: [text_fwd.term_for_id(int(t)) for t in text_fwd.sequences[i]]
        for i, docno in enumerate(text_fwd.docnos)
    }
    bitext = build_bitext(
        [(q.docno, tokenize_parsed(q.fields["text"])) for q in queries],
        doc_tokens, qrels, max_chunk_len=16)
    table = train_model1(bitext, iterations=10)
    table.save(str(root / "model1.bin"))

    (root / "prov.json").write_text(json.dumps({
        "invertedIndex": "text.inv",
        "forwardIndex": "text.fwd",
        "queryFieldName": "text",
        "k1": 1.2, "b": 0.75,
    }))
    (root / "final_extr.json").write_text(json.dumps({"extractors": [
        {"type": "bm25", "params": {"indexFieldName": "text",
                                    "queryFieldName": "text",
                                    "k1": "1.2", "b": "0.75"}},
        {"type": "model1", "params": {"indexFieldName": "text",
                                      "queryFieldName": "text",
                                      "model1File": "model1.bin"}},
    ]}))
    (root / "bm25_only_extr.json").write_text(json.dumps({"extractors": [
        {"type": "bm25", "params": {"indexFieldName": "text",
                                    "queryFieldName": "text",
                                    "k1": 1.2, "b": 0.75}},
    ]}))
    LinearModel([1.0], ("bm25(text)",)).save(str(root / "bm25_only.model"))
    LinearModel([0.7, 0.3], ("bm25(text)", "model1(text)")).save(
        str(root / "fixed_fusion.model"))

    (root / "exper.json").write_text(json.dumps([{
        "experSubdir": "final_exper",
        "candProv": "inverted-bm25",
        "candProvAddConfParam": "prov.json",
        "extrType": "final_extr.json",
        "modelFinal": "fixed_fusion.model",
        "candQty": 50,
        "topFinal": 20,
        "testOnly": 0,
        "runId": "toy_run",
    }]))
    (root / "passthrough.json").write_text(json.dumps({
        "candProv": "inverted-bm25",
        "candProvAddConfParam": "prov.json",
        "candQty": 30,
        "topFinal": 10,
        "runId": "passthrough",
    }))
    return {"root": root, "data": data, "collection": coll, "fwds": fwds,
            "inverted": inv, "qrels": qrels}
