"""Multi-field JSONL ingestion and the per-field forward index.

Input entries are one JSON object per line with mandatory ``DOCNO`` and
``text`` keys; extra fields ride along untouched. A parsed
field holds whitespace-separated tokens produced by an external pipeline --
no case folding, stopping or stemming happens here. The forward index keeps,
per field, a term dictionary plus per-document term bags (and optionally the
ordered token sequence), which is everything re-ranking needs: no retrieval
index is ever consulted again after candidate generation.

File layout (``<field>.fwd``): magic ``HRFW``, version u32, kind u8
(0 parsed / 1 raw), positions-kept u8, N u64, avg length f64, N docnos
(u32 length + UTF-8), then for parsed fields the dictionary (term count u64,
per term UTF-8 token + doc frequency u32) and per document the bag (size
u32, u32 term ids, u32 counts) plus, when positions are kept, the sequence
(u32 length, u32 term ids); raw fields store per-document UTF-8 text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

from .storage import BinaryReader, BinaryWriter, StorageError

PARSED = "parsed"
RAW = "raw"

DOCNO_KEY = "DOCNO"
TEXT_FIELD = "text"


@dataclass(frozen=True)
class DocumentEntry:
    docno: str
    fields: dict[str, str]


# Queries share the document schema.
QueryEntry = DocumentEntry


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str = PARSED

    def __post_init__(self):
        if self.kind not in (PARSED, RAW):
            raise ValueError(f"field kind must be 'parsed' or 'raw', got {self.kind!r}")


def parse_field_specs(spec: str) -> list[FieldSpec]:
    """Parse a CLI spec like ``text:parsed,title:raw`` (kind defaults to parsed)."""
    out = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, kind = part.partition(":")
        out.append(FieldSpec(name, kind or PARSED))
    return out


def parse_jsonl(source: IO | Iterable[str]) -> Iterator[DocumentEntry]:
    """Yield entries in order; blank lines are skipped.

    Raises ValueError naming the 1-based line number for malformed JSON and
    the missing key when DOCNO or text is absent.
    """
    for line_no, raw_line in enumerate(source, start=1):
        if isinstance(raw_line, bytes):
            raw_line = raw_line.decode("utf-8")
        line = raw_line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ValueError(f"line {line_no}: expected a JSON object")
        if DOCNO_KEY not in obj:
            raise ValueError(f"line {line_no}: missing field {DOCNO_KEY!r}")
        fields = {}
        for key, value in obj.items():
            if key == DOCNO_KEY:
                continue
            if not isinstance(value, str):
                raise ValueError(f"line {line_no}: field {key!r} must be a string")
            fields[key] = value
        if TEXT_FIELD not in fields:
            raise ValueError(f"line {line_no}: missing field {TEXT_FIELD!r}")
        yield DocumentEntry(str(obj[DOCNO_KEY]), fields)


def load_jsonl(path: str) -> list[DocumentEntry]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(parse_jsonl(fh))


def tokenize_parsed(field_text: str) -> list[str]:
    """Split on whitespace runs. Tokenization proper happened upstream."""
    return field_text.split()


@dataclass
class ForwardIndexField:
    """Everything known about one field across the collection."""

    kind: str
    positions_kept: bool = False
    docnos: list[str] = field(default_factory=list)
    vocab: dict[str, int] = field(default_factory=dict)     # token -> dense term id
    doc_freq: list[int] = field(default_factory=list)       # per term id
    bags: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    sequences: list[np.ndarray] | None = None               # parsed + positions only
    raw_texts: list[str] | None = None                      # raw kind only
    avg_length: float = 0.0

    _terms: list[str] | None = None

    @property
    def doc_count(self) -> int:
        return len(self.docnos)

    def term_for_id(self, term_id: int) -> str:
        if self._terms is None or len(self._terms) != len(self.vocab):
            terms = [""] * len(self.vocab)
            for tok, tid in self.vocab.items():
                terms[tid] = tok
            self._terms = terms
        return self._terms[term_id]

    def term_ids(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to term ids, silently dropping out-of-vocabulary ones."""
        ids = []
        for tok in tokens:
            tid = self.vocab.get(tok)
            if tid is not None:
                ids.append(tid)
        return ids

    def doc_length(self, doc_id: int) -> float:
        bag_ids, bag_counts = self.bags[doc_id]
        return float(bag_counts.sum())

    def bag_of(self, doc_id: int) -> dict[int, int]:
        bag_ids, bag_counts = self.bags[doc_id]
        return dict(zip(bag_ids.tolist(), bag_counts.tolist()))

    def tf_vector(self, doc_id: int):
        """Term-frequency sparse vector, the BM25-flavor indexing input."""
        from .vectors import SparseVector

        bag_ids, bag_counts = self.bags[doc_id]
        return SparseVector(bag_ids.astype(np.int64),
                            bag_counts.astype(np.float32))


def build_forward(entries: Iterable[DocumentEntry], specs: list[FieldSpec],
                  keep_positions: bool = False) -> dict[str, ForwardIndexField]:
    """Build one forward index per requested field.

    Term ids are dense from 0 in first-occurrence order, so identical input
    bytes always produce identical dictionaries. Duplicate DOCNOs and
    missing fields are errors.
    """
    out: dict[str, ForwardIndexField] = {}
    for spec in specs:
        fwd = ForwardIndexField(kind=spec.kind, positions_kept=keep_positions and spec.kind == PARSED)
        if fwd.positions_kept:
            fwd.sequences = []
        if spec.kind == RAW:
            fwd.raw_texts = []
        out[spec.name] = fwd

    seen: set[str] = set()
    total_tokens = {spec.name: 0 for spec in specs}
    for entry in entries:
        if entry.docno in seen:
            raise ValueError(f"duplicate DOCNO {entry.docno!r}")
        seen.add(entry.docno)
        for spec in specs:
            fwd = out[spec.name]
            if spec.name not in entry.fields:
                raise ValueError(f"document {entry.docno!r} lacks field {spec.name!r}")
            text = entry.fields[spec.name]
            fwd.docnos.append(entry.docno)
            if spec.kind == RAW:
                fwd.raw_texts.append(text)
                total_tokens[spec.name] += len(text)
                fwd.bags.append((np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)))
                continue
            tokens = tokenize_parsed(text)
            seq = np.zeros(len(tokens), dtype=np.int64)
            counts: dict[int, int] = {}
            for pos, tok in enumerate(tokens):
                tid = fwd.vocab.get(tok)
                if tid is None:
                    tid = len(fwd.vocab)
                    fwd.vocab[tok] = tid
                    fwd.doc_freq.append(0)
                seq[pos] = tid
                counts[tid] = counts.get(tid, 0) + 1
            for tid in counts:
                fwd.doc_freq[tid] += 1
            bag_ids = np.array(sorted(counts), dtype=np.int64)
            bag_counts = np.array([counts[t] for t in bag_ids.tolist()], dtype=np.int64)
            fwd.bags.append((bag_ids, bag_counts))
            if fwd.positions_kept:
                fwd.sequences.append(seq)
            total_tokens[spec.name] += len(tokens)

    for spec in specs:
        fwd = out[spec.name]
        if fwd.doc_count:
            fwd.avg_length = total_tokens[spec.name] / fwd.doc_count
    return out


# --- persistence --------------------------------------------------------------

_MAGIC = b"HRFW"
_VERSION = 1
_KIND_CODES = {PARSED: 0, RAW: 1}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}


def save_forward(fwd: ForwardIndexField, path: str) -> None:
    with open(path, "wb") as fh:
        w = BinaryWriter(fh)
        w.magic(_MAGIC, _VERSION)
        w.u8(_KIND_CODES[fwd.kind])
        w.u8(1 if fwd.positions_kept else 0)
        w.u64(fwd.doc_count)
        w.f64(fwd.avg_length)
        for docno in fwd.docnos:
            w.text(docno)
        if fwd.kind == RAW:
            for text in fwd.raw_texts:
                w.text(text)
            return
        w.u64(len(fwd.vocab))
        terms = [""] * len(fwd.vocab)
        for tok, tid in fwd.vocab.items():
            terms[tid] = tok
        for tid, tok in enumerate(terms):
            w.text(tok)
            w.u32(fwd.doc_freq[tid])
        for doc_id in range(fwd.doc_count):
            bag_ids, bag_counts = fwd.bags[doc_id]
            w.u32(len(bag_ids))
            w.array(bag_ids, "<u4")
            w.array(bag_counts, "<u4")
            if fwd.positions_kept:
                seq = fwd.sequences[doc_id]
                w.u32(len(seq))
                w.array(seq, "<u4")


def load_forward(path: str) -> ForwardIndexField:
    with open(path, "rb") as fh:
        r = BinaryReader(fh, path)
        r.magic(_MAGIC, _VERSION)
        kind_code = r.u8()
        if kind_code not in _KIND_FROM_CODE:
            raise StorageError(f"{path}: unknown field kind {kind_code}")
        fwd = ForwardIndexField(kind=_KIND_FROM_CODE[kind_code],
                                positions_kept=bool(r.u8()))
        n = r.u64()
        fwd.avg_length = r.f64()
        fwd.docnos = [r.text() for _ in range(n)]
        if fwd.kind == RAW:
            fwd.raw_texts = [r.text() for _ in range(n)]
            fwd.bags = [(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
                        for _ in range(n)]
            return fwd
        vocab_size = r.u64()
        for tid in range(vocab_size):
            tok = r.text()
            fwd.vocab[tok] = tid
            fwd.doc_freq.append(r.u32())
        if fwd.positions_kept:
            fwd.sequences = []
        for _ in range(n):
            bag_n = r.u32()
            bag_ids = r.array(bag_n, "<u4").astype(np.int64)
            bag_counts = r.array(bag_n, "<u4").astype(np.int64)
            fwd.bags.append((bag_ids, bag_counts))
            if fwd.positions_kept:
                seq_n = r.u32()
                fwd.sequences.append(r.array(seq_n, "<u4").astype(np.int64))
        return fwd
