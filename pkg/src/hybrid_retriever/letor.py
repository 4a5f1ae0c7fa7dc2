"""Rank metrics, coordinate-ascent training of a linear fusion model, and the
interchange formats around them (QREL files, TREC run files, RankLib export).

The trained artifact is always a linear model over extractor features. The
coordinate ascent restarts from a uniform vector, a configurable number of
random vectors, and one one-hot vector per feature -- the one-hot restarts
guarantee the returned model never trains below the best single-feature
baseline.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

Qrels = dict[str, dict[str, int]]  # query id -> docno -> grade (>= 0)


# --- metrics -------------------------------------------------------------------


def ndcg_at_k(grades_in_rank_order: Sequence[int], ideal_grades: Sequence[int],
              k: int) -> float:
    """Exponential-gain NDCG: gain (2^g - 1) / log2(rank + 1), rank 1-based.

    Returns 0 when the ideal DCG is 0 (no relevant documents).
    """
    if k < 1:
        raise ValueError("k must be >= 1")

    def dcg(grades):
        return sum((2.0 ** g - 1.0) / math.log2(i + 1.0)
                   for i, g in enumerate(grades[:k], start=1))

    ideal = dcg(sorted(ideal_grades, reverse=True))
    if ideal == 0.0:
        return 0.0
    return dcg(list(grades_in_rank_order)) / ideal


def mrr(ranked_docnos: Sequence[str], relevant: set[str],
        cutoff: int | None = None) -> float:
    """Reciprocal rank of the first relevant docno; 0 when none appears."""
    docnos = ranked_docnos if cutoff is None else ranked_docnos[:cutoff]
    for rank, docno in enumerate(docnos, start=1):
        if docno in relevant:
            return 1.0 / rank
    return 0.0


# --- model + ranking ------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(w)):
            raise ValueError("model weights must be finite")
        if len(w) != len(self.columns):
            raise ValueError("weight / column count mismatch")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "columns", tuple(self.columns))

    def save(self, path: str) -> None:
        import json

        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"columns": list(self.columns),
                       "weights": [float(x) for x in self.weights]},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "LinearModel":
        import json

        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(np.array(obj["weights"], dtype=np.float64),
                   tuple(obj["columns"]))


@dataclass
class QueryGroup:
    """One query's candidates and their feature rows."""

    query_id: str
    docnos: list[str]
    features: np.ndarray  # (n_candidates, n_features) float64


def rank_candidates(weights: np.ndarray, group: QueryGroup) -> list[tuple[str, float]]:
    """Score and sort one candidate list; ties break by docno ascending."""
    scores = group.features @ weights
    order = sorted(range(len(group.docnos)),
                   key=lambda i: (-scores[i], group.docnos[i]))
    return [(group.docnos[i], float(scores[i])) for i in order]


@dataclass
class RunOutput:
    run_id: str
    rankings: dict[str, list[tuple[str, float]]]  # qid -> [(docno, score) desc]


def rank_with_model(model: LinearModel, groups: Sequence[QueryGroup],
                    run_id: str = "run") -> RunOutput:
    rankings = {}
    for group in groups:
        if group.features.shape[1] != len(model.columns):
            raise ValueError(f"feature count {group.features.shape[1]} does not "
                             f"match model columns {len(model.columns)}")
        rankings[group.query_id] = rank_candidates(model.weights, group)
    return RunOutput(run_id=run_id, rankings=rankings)


# --- training --------------------------------------------------------------------


@dataclass(frozen=True)
class CoordinateAscentOptions:
    restarts: int = 3                 # random restarts, besides uniform + one-hots
    step_sizes: tuple[float, ...] = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)
    tolerance: float = 1e-6
    max_sweeps: int = 20
    seed: int = 0


@dataclass
class TrainResult:
    model: LinearModel
    metric: float
    trace: list[float]                 # metric after every accepted step
    baseline_metrics: list[float]      # single-feature training metrics


def _metric_fn(metric: str):
    if metric == "mrr":
        return None  # handled inline
    if metric.startswith("ndcg@"):
        return int(metric.split("@", 1)[1])
    raise ValueError(f"unknown metric {metric!r} (use 'mrr' or 'ndcg@K')")


class _Evaluator:
    def __init__(self, groups: Sequence[QueryGroup], qrels: Qrels, metric: str):
        self.groups = list(groups)
        self.metric = metric
        self.ndcg_k = _metric_fn(metric)
        self.grades = []
        self.ideal = []
        for g in self.groups:
            judged = qrels.get(g.query_id, {})
            grades = [judged.get(d, 0) for d in g.docnos]
            self.grades.append(grades)
            self.ideal.append(sorted(grades, reverse=True))

    def has_relevant(self) -> bool:
        return any(any(g > 0 for g in grades) for grades in self.grades)

    def mean_metric(self, weights: np.ndarray) -> float:
        total = 0.0
        for gi, group in enumerate(self.groups):
            scores = group.features @ weights
            order = sorted(range(len(group.docnos)),
                           key=lambda i: (-scores[i], group.docnos[i]))
            if self.ndcg_k is None:
                value = 0.0
                for rank, i in enumerate(order, start=1):
                    if self.grades[gi][i] > 0:
                        value = 1.0 / rank
                        break
            else:
                ranked = [self.grades[gi][i] for i in order]
                value = ndcg_at_k(ranked, self.ideal[gi], self.ndcg_k)
            total += value
        return total / len(self.groups) if self.groups else 0.0


def _l1_normalize(w: np.ndarray) -> np.ndarray:
    s = np.sum(np.abs(w))
    return w / s if s > 0 else w


def coordinate_ascent_train(groups: Sequence[QueryGroup], qrels: Qrels,
                            metric: str = "mrr",
                            options: CoordinateAscentOptions = CoordinateAscentOptions(),
                            ) -> TrainResult:
    """Greedy per-coordinate line search, restarted from several starts.

    Each sweep tries additive steps of +-step for every step size on every
    coordinate, keeping a change only when the mean training metric improves
    by more than the tolerance; weights are L1-normalized after every
    accepted change. Sweeps stop early once a full sweep accepts nothing.
    """
    groups = [g for g in groups if len(g.docnos)]
    if not groups:
        raise ValueError("no training queries with candidates")
    n_features = groups[0].features.shape[1]
    evaluator = _Evaluator(groups, qrels, metric)
    if not evaluator.has_relevant():
        raise ValueError("no training query has a relevant candidate")

    rng = random.Random(options.seed)
    starts = [np.full(n_features, 1.0 / n_features)]
    for _ in range(options.restarts):
        starts.append(np.array([rng.random() for _ in range(n_features)]))
    baseline_metrics = []
    for i in range(n_features):
        one_hot = np.zeros(n_features)
        one_hot[i] = 1.0
        starts.append(one_hot)
        baseline_metrics.append(evaluator.mean_metric(one_hot))

    best_weights: np.ndarray | None = None
    best_metric = -math.inf
    best_trace: list[float] = []

    for start in starts:
        w = _l1_normalize(start.astype(np.float64).copy())
        current = evaluator.mean_metric(w)
        trace = [current]
        for _ in range(options.max_sweeps):
            improved = False
            for coord in range(n_features):
                for step in options.step_sizes:
                    for delta in (step, -step):
                        trial = w.copy()
                        trial[coord] += delta
                        value = evaluator.mean_metric(trial)
                        if value > current + options.tolerance:
                            w = _l1_normalize(trial)
                            current = value
                            trace.append(value)
                            improved = True
            if not improved:
                break
        if current > best_metric:
            best_metric = current
            best_weights = w
            best_trace = trace

    model = LinearModel(best_weights, tuple(f"f{i}" for i in range(n_features)))
    return TrainResult(model=model, metric=best_metric, trace=best_trace,
                       baseline_metrics=baseline_metrics)


# --- interchange formats -----------------------------------------------------------


def load_qrels(path: str) -> Qrels:
    """TREC qrels: whitespace-separated ``qid 0 docno grade`` lines."""
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{line_no}: expected 'qid 0 docno grade'")
            qid, _, docno, grade = parts
            qrels.setdefault(qid, {})[docno] = int(grade)
    return qrels


def save_qrels(qrels: Qrels, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in qrels:
            for docno, grade in qrels[qid].items():
                fh.write(f"{qid} 0 {docno} {grade}\n")


def save_run(run: RunOutput, path: str) -> None:
    """TREC run format: ``qid Q0 docno rank score runId``.

    Scores are written with full float precision so a re-run is
    byte-identical and downstream consumers can compare exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for qid in run.rankings:
            for rank, (docno, score) in enumerate(run.rankings[qid], start=1):
                fh.write(f"{qid} Q0 {docno} {rank} {score!r} {run.run_id}\n")


def load_run(path: str) -> RunOutput:
    rankings: dict[str, list[tuple[str, float]]] = {}
    run_id = "run"
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"{path}:{line_no}: expected 'qid Q0 docno rank score runId'")
            qid, _, docno, _, score, run_id = parts
            rankings.setdefault(qid, []).append((docno, float(score)))
    return RunOutput(run_id=run_id, rankings=rankings)


def export_ranklib(groups: Sequence[QueryGroup], qrels: Qrels, stream: IO) -> None:
    """RankLib training lines: ``grade qid:<q> 1:<v1> ... # <docno>``."""
    for group in groups:
        judged = qrels.get(group.query_id, {})
        for docno, row in zip(group.docnos, group.features):
            grade = judged.get(docno, 0)
            feats = " ".join(f"{i}:{float(v)!r}" for i, v in enumerate(row, start=1))
            stream.write(f"{grade} qid:{group.query_id} {feats} # {docno}\n")


def evaluate_run(run: RunOutput, qrels: Qrels, k: int = 10,
                 ) -> dict[str, dict[str, float]]:
    """Per-query ndcg@k and mrr for every query in the run."""
    out = {}
    for qid, ranking in run.rankings.items():
        judged = qrels.get(qid, {})
        docnos = [d for d, _ in ranking]
        grades = [judged.get(d, 0) for d in docnos]
        ideal = sorted(judged.values(), reverse=True)
        relevant = {d for d, g in judged.items() if g > 0}
        out[qid] = {
            f"ndcg@{k}": ndcg_at_k(grades, ideal, k),
            "mrr": mrr(docnos, relevant),
        }
    return out
