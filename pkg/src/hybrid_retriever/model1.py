"""Lexical translation table trained with expectation maximization.

The table holds p(query-term | doc-term) rows -- one row per document-side
token (plus a NULL token that absorbs unaligned query words), each row
summing to 1. Scoring mixes the per-query-term alignment likelihood with a
collection unigram model, closing the vocabulary gap between queries and
documents without ever returning -inf.

Bitext pairs are (query tokens, document tokens). Long documents should be
chunked first so every pair stays alignable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .storage import BinaryReader, BinaryWriter

Bitext = Sequence[tuple[Sequence[str], Sequence[str]]]

PC_FLOOR = 1e-9  # unigram probability floor for out-of-vocabulary terms

DEFAULT_LAMBDA = 0.1
DEFAULT_ITERATIONS = 20
DEFAULT_PRUNE = 1e-6
DEFAULT_CHUNK_LEN = 16


@dataclass
class Model1Table:
    """Translation rows keyed by document-side token; NULL row kept separate."""

    rows: dict[str, dict[str, float]]
    null_row: dict[str, float]
    unigram: dict[str, float]       # query-side collection model
    lam: float = DEFAULT_LAMBDA
    log_likelihoods: list[float] = field(default_factory=list)

    def translation(self, query_token: str, doc_token: str) -> float:
        return self.rows.get(doc_token, {}).get(query_token, 0.0)

    def unigram_prob(self, query_token: str) -> float:
        return max(self.unigram.get(query_token, 0.0), PC_FLOOR)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic(b"HRM1", 1)
            w.f64(self.lam)
            w.u64(len(self.unigram))
            for tok in sorted(self.unigram):
                w.text(tok)
                w.f64(self.unigram[tok])
            _write_row(w, self.null_row)
            w.u64(len(self.rows))
            for src in sorted(self.rows):
                w.text(src)
                _write_row(w, self.rows[src])

    @classmethod
    def load(cls, path: str) -> "Model1Table":
        with open(path, "rb") as fh:
            r = BinaryReader(fh, path)
            r.magic(b"HRM1", 1)
            lam = r.f64()
            unigram = {r.text(): r.f64() for _ in range(r.u64())}
            null_row = _read_row(r)
            rows = {}
            for _ in range(r.u64()):
                src = r.text()
                rows[src] = _read_row(r)
        return cls(rows=rows, null_row=null_row, unigram=unigram, lam=lam)


def _write_row(w: BinaryWriter, row: dict[str, float]) -> None:
    w.u64(len(row))
    for tok in sorted(row):
        w.text(tok)
        w.f64(row[tok])


def _read_row(r: BinaryReader) -> dict[str, float]:
    return {r.text(): r.f64() for _ in range(r.u64())}


def train_model1(bitext: Bitext, iterations: int = DEFAULT_ITERATIONS,
                 prune_threshold: float = DEFAULT_PRUNE,
                 lam: float = DEFAULT_LAMBDA) -> Model1Table:
    """EM over (query tokens, doc tokens) pairs; doc side gets a NULL word.

    Rows are renormalized after every iteration; entries below
    prune_threshold are dropped at the end and the surviving mass
    renormalized. The per-iteration corpus log-likelihood is recorded on the
    returned table (it never decreases -- a standard EM guarantee that the
    tests assert).
    """
    pairs = [(list(q), list(d)) for q, d in bitext if q and d]
    if not pairs:
        raise ValueError("bitext is empty (or has no usable pairs)")

    q_vocab: dict[str, int] = {}
    d_vocab: dict[str, int] = {}
    enc_pairs = []
    q_counts: dict[int, int] = {}
    for q_toks, d_toks in pairs:
        q_ids = []
        for tok in q_toks:
            qid = q_vocab.setdefault(tok, len(q_vocab))
            q_ids.append(qid)
            q_counts[qid] = q_counts.get(qid, 0) + 1
        d_ids = [d_vocab.setdefault(tok, len(d_vocab)) for tok in d_toks]
        enc_pairs.append((q_ids, d_ids))

    null_id = len(d_vocab)  # virtual doc-side token present in every pair
    n_src = len(d_vocab) + 1
    uniform = 1.0 / len(q_vocab)
    # t[src][qid] = p(query term | doc term); implicit uniform on iteration 0
    t: list[dict[int, float]] = [dict() for _ in range(n_src)]

    log_likelihoods = []
    first = True
    for _ in range(iterations):
        counts: list[dict[int, float]] = [dict() for _ in range(n_src)]
        totals = [0.0] * n_src
        ll = 0.0
        for q_ids, d_ids in enc_pairs:
            sources = d_ids + [null_id]
            inv_len = 1.0 / len(sources)
            for qid in q_ids:
                if first:
                    z = uniform * len(sources)
                else:
                    z = 0.0
                    for src in sources:
                        z += t[src].get(qid, 0.0)
                ll += math.log(z * inv_len) if z > 0.0 else -math.inf
                if z <= 0.0:
                    continue
                for src in sources:
                    p = (uniform if first else t[src].get(qid, 0.0)) / z
                    if p > 0.0:
                        row = counts[src]
                        row[qid] = row.get(qid, 0.0) + p
                        totals[src] += p
        for src in range(n_src):
            total = totals[src]
            t[src] = {qid: c / total for qid, c in counts[src].items()} if total > 0 else {}
        log_likelihoods.append(ll)
        first = False

    # prune tiny entries, renormalize the survivors
    for src in range(n_src):
        row = {qid: p for qid, p in t[src].items() if p >= prune_threshold}
        mass = sum(row.values())
        t[src] = {qid: p / mass for qid, p in row.items()} if mass > 0 else {}

    q_tokens = [""] * len(q_vocab)
    for tok, qid in q_vocab.items():
        q_tokens[qid] = tok
    total_q = sum(q_counts.values())
    unigram = {q_tokens[qid]: c / total_q for qid, c in q_counts.items()}

    rows = {}
    for tok, src in d_vocab.items():
        rows[tok] = {q_tokens[qid]: p for qid, p in t[src].items()}
    null_row = {q_tokens[qid]: p for qid, p in t[null_id].items()}
    return Model1Table(rows=rows, null_row=null_row, unigram=unigram, lam=lam,
                       log_likelihoods=log_likelihoods)


def model1_score(query_tokens: Sequence[str], doc_tokens: Sequence[str],
                 table: Model1Table, lam: float | None = None) -> float:
    """Alignment log-probability of the query given the document.

    Per query term: ln[(1-lam) * (sum_w T(q|w) + T(q|NULL)) / (|d|+1)
    + lam * Pc(q)]. Document tokens count with multiplicity. Always finite:
    unseen terms fall back to the floored unigram probability.
    """
    lam = table.lam if lam is None else lam
    inv_len = 1.0 / (len(doc_tokens) + 1)
    score = 0.0
    for q in query_tokens:
        align = table.null_row.get(q, 0.0)
        for w in doc_tokens:
            row = table.rows.get(w)
            if row:
                align += row.get(q, 0.0)
        score += math.log((1.0 - lam) * align * inv_len + lam * table.unigram_prob(q))
    return score


def model1_score_bag(query_tokens: Sequence[str], doc_bag: Iterable[tuple[str, int]],
                     doc_length: int, table: Model1Table,
                     lam: float | None = None) -> float:
    """Same score computed from a (token, count) bag instead of a sequence."""
    lam = table.lam if lam is None else lam
    bag = list(doc_bag)
    inv_len = 1.0 / (doc_length + 1)
    score = 0.0
    for q in query_tokens:
        align = table.null_row.get(q, 0.0)
        for w, count in bag:
            row = table.rows.get(w)
            if row:
                align += count * row.get(q, 0.0)
        score += math.log((1.0 - lam) * align * inv_len + lam * table.unigram_prob(q))
    return score


def chunk_document(tokens: Sequence[str], max_chunk_len: int) -> list[list[str]]:
    """Consecutive non-overlapping chunks; concatenation reproduces the input."""
    if max_chunk_len < 1:
        raise ValueError("max_chunk_len must be >= 1")
    return [list(tokens[i:i + max_chunk_len])
            for i in range(0, len(tokens), max_chunk_len)]


def build_bitext(queries: Iterable[tuple[str, Sequence[str]]],
                 doc_tokens_by_docno: dict[str, Sequence[str]],
                 qrels: dict[str, dict[str, int]],
                 max_chunk_len: int = DEFAULT_CHUNK_LEN) -> list[tuple[list[str], list[str]]]:
    """Pair each query with every chunk of each of its relevant documents."""
    out = []
    for qid, q_tokens in queries:
        judged = qrels.get(qid, {})
        for docno, grade in sorted(judged.items()):
            if grade <= 0:
                continue
            tokens = doc_tokens_by_docno.get(docno)
            if tokens is None:
                continue
            for chunk in chunk_document(tokens, max_chunk_len):
                out.append((list(q_tokens), chunk))
    return out
