"""Deterministic synthetic collection for demos and the end-to-end tests.

Documents cluster into topics. Queries mention a mix of literal topic words
(which BM25 can match) and "query-side" synonym words that never occur in
documents -- the translation table has to bridge those, which is exactly the
vocabulary-gap situation the lexical translation scorer exists for.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass


@dataclass
class ToyCollection:
    docs: list[dict]          # JSONL-ready objects with DOCNO / text / text_unlemm
    train_queries: list[dict]
    test_queries: list[dict]
    qrels: dict[str, dict[str, int]]
    synonym_map: dict[str, str]   # query-side word -> document-side word


def make_toy_collection(seed: int = 7, n_topics: int = 40, docs_per_topic: int = 25,
                        n_train_queries: int = 60, n_test_queries: int = 20,
                        doc_len: int = 30, query_len: int = 6) -> ToyCollection:
    rng = random.Random(seed)
    topic_words = [[f"t{t:02d}w{i}" for i in range(8)] for t in range(n_topics)]
    noise_words = [f"noise{i}" for i in range(60)]
    synonym_map = {f"syn_{w}": w for words in topic_words for w in words}
    synonyms = {w: f"syn_{w}" for words in topic_words for w in words}

    docs = []
    docs_by_topic: list[list[str]] = [[] for _ in range(n_topics)]
    for t in range(n_topics):
        for j in range(docs_per_topic):
            docno = f"d{t:02d}_{j:02d}"
            tokens = []
            for _ in range(doc_len):
                if rng.random() < 0.6:
                    tokens.append(rng.choice(topic_words[t]))
                else:
                    tokens.append(rng.choice(noise_words))
            text = " ".join(tokens)
            docs.append({"DOCNO": docno, "text": text,
                         "text_unlemm": " ".join(tok + "s" for tok in tokens)})
            docs_by_topic[t].append(docno)

    def make_queries(count: int, tag: str) -> tuple[list[dict], dict[str, dict[str, int]]]:
        queries = []
        qrels: dict[str, dict[str, int]] = {}
        for qi in range(count):
            topic = rng.randrange(n_topics)
            qid = f"{tag}{qi:03d}"
            tokens = []
            for _ in range(query_len):
                word = rng.choice(topic_words[topic])
                # some query words only exist in synonym form
                tokens.append(synonyms[word] if rng.random() < 0.4 else word)
            queries.append({"DOCNO": qid, "text": " ".join(tokens),
                            "text_unlemm": " ".join(tok + "s" for tok in tokens)})
            graded = rng.sample(docs_by_topic[topic], 3)
            qrels[qid] = {graded[0]: 3, graded[1]: 2, graded[2]: 1}
        return queries, qrels

    train_queries, train_qrels = make_queries(n_train_queries, "qtrain")
    test_queries, test_qrels = make_queries(n_test_queries, "qtest")
    qrels = {**train_qrels, **test_qrels}
    return ToyCollection(docs=docs, train_queries=train_queries,
                         test_queries=test_queries, qrels=qrels,
                         synonym_map=synonym_map)


def write_jsonl(objects: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_toy_collection(out_dir: str, seed: int = 7, **kwargs) -> ToyCollection:
    """Materialize docs.jsonl, queries_{train,test}.jsonl and qrels.txt."""
    coll = make_toy_collection(seed=seed, **kwargs)
    os.makedirs(out_dir, exist_ok=True)
    write_jsonl(coll.docs, os.path.join(out_dir, "docs.jsonl"))
    write_jsonl(coll.train_queries, os.path.join(out_dir, "queries_train.jsonl"))
    write_jsonl(coll.test_queries, os.path.join(out_dir, "queries_test.jsonl"))
    with open(os.path.join(out_dir, "qrels.txt"), "w", encoding="utf-8") as fh:
        for qid in coll.qrels:
            for docno, grade in coll.qrels[qid].items():
                fh.write(f"{qid} 0 {docno} {grade}\n")
    return coll


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="generate the bundled toy collection")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    coll = write_toy_collection(args.out_dir, seed=args.seed)
    print(f"wrote {len(coll.docs)} docs, {len(coll.train_queries)} train / "
          f"{len(coll.test_queries)} test queries to {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
