"""Scoring and evaluation formulas.

Relevance lists are in rank order, first element is rank 1.  Relevance is
binary by default; graded relevance goes through the same gain formula.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionMismatch, EmptyInput, SingleClass, ZeroRelevant, ZeroVector


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, predicted: Sequence[bool], actual: Sequence[bool]) -> "ConfusionCounts":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        if p.shape != a.shape:
            raise DimensionMismatch("predicted and actual differ in length")
        return cls(int(np.sum(p & a)), int(np.sum(p & ~a)),
                   int(np.sum(~p & a)), int(np.sum(~p & ~a)))


@dataclass(frozen=True)
class ConfusionStats:
    """Derived rates; ``None`` marks a metric whose denominator is zero."""
    recall: Optional[float]
    tnr: Optional[float]
    fpr: Optional[float]
    precision: Optional[float]
    accuracy: Optional[float]
    f1: Optional[float]

    @property
    def tpr(self) -> Optional[float]:
        return self.recall


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


def f1_score(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def confusion_stats(counts: ConfusionCounts) -> ConfusionStats:
    c = counts
    recall = _ratio(c.tp, c.tp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    return ConfusionStats(
        recall=recall,
        tnr=_ratio(c.tn, c.tn + c.fp),
        fpr=_ratio(c.fp, c.fp + c.tn),
        precision=precision,
        accuracy=_ratio(c.tp + c.tn, c.total),
        f1=f1_score(precision, recall),
    )


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability that a random positive outscores a random negative.

    Ties earn half credit (Mann-Whitney U over average ranks).
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise DimensionMismatch("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("roc_auc needs both classes")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ROC points (fpr, tpr), one per distinct threshold, from (0, 0)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("roc_curve needs both classes")
    thresholds = np.unique(s)[::-1]
    fpr = [0.0]
    tpr = [0.0]
    for t in thresholds:
        pred = s >= t
        tpr.append(np.sum(pred & y) / n_pos)
        fpr.append(np.sum(pred & ~y) / n_neg)
    return np.array(fpr), np.array(tpr)


@dataclass(frozen=True)
class RankedList:
    grades: tuple[float, ...]
    total_relevant: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "grades", tuple(self.grades))
        if any(g < 0 for g in self.grades):
            raise ValueError("relevance grades must be non-negative")
        n_pos = sum(1 for g in self.grades if g > 0)
        if self.total_relevant is None:
            object.__setattr__(self, "total_relevant", n_pos)
        elif self.total_relevant < n_pos:
            raise ValueError("total_relevant smaller than relevant items in list")


def _as_ranked(rels) -> RankedList:
    return rels if isinstance(rels, RankedList) else RankedList(tuple(rels))


def _dcg(gains: Sequence[float]) -> float:
    return sum((2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(gains))


def dcg(rels, n: Optional[int] = None) -> float:
    r = _as_ranked(rels)
    n = len(r.grades) if n is None else n
    return _dcg(r.grades[:n])


def idcg(rels, n: Optional[int] = None) -> float:
    """DCG of the ideal placement of the ``total_relevant`` items, cut at ``n``.

    Grades found in the list are placed best-first; relevant items that are
    not in the list count with grade 1.
    """
    r = _as_ranked(rels)
    n = len(r.grades) if n is None else n
    positives = sorted((g for g in r.grades if g > 0), reverse=True)
    positives += [1.0] * (r.total_relevant - len(positives))
    return _dcg(positives[:n])


def ndcg(rels, n: Optional[int] = None) -> float:
    """NDCG at ``n``; 0 when there is nothing relevant to place."""
    r = _as_ranked(rels)
    n = len(r.grades) if n is None else n
    if n < 0 or n > len(r.grades):
        raise ValueError(f"n={n} outside [0, {len(r.grades)}]")
    ideal = idcg(r, n)
    if ideal == 0:
        return 0.0
    return dcg(r, n) / ideal


def precision_at(rels, i: int) -> float:
    r = _as_ranked(rels)
    return sum(1 for g in r.grades[:i] if g > 0) / i


def average_precision(rels, n: Optional[int] = None) -> float:
    r = _as_ranked(rels)
    n = len(r.grades) if n is None else n
    if r.total_relevant == 0:
        raise ZeroRelevant("average precision undefined without relevant items")
    hits = 0
    total = 0.0
    for i, g in enumerate(r.grades[:n], start=1):
        if g > 0:
            hits += 1
            total += hits / i
    return total / r.total_relevant


def first_relevant_rank(rels) -> Optional[int]:
    for i, g in enumerate(_as_ranked(rels).grades, start=1):
        if g > 0:
            return i
    return None


def mrr(first_relevant_ranks: Sequence[int]) -> float:
    if len(first_relevant_ranks) == 0:
        raise EmptyInput("mrr of no jobs")
    if any(r < 1 for r in first_relevant_ranks):
        raise ValueError("ranks start at 1")
    return sum(1.0 / r for r in first_relevant_ranks) / len(first_relevant_ranks)


def tfidf_weight(tf: float, df: int, n_docs: int) -> float:
    """``tf * log10(n_docs / df)``."""
    if df < 1 or n_docs < df or tf < 0:
        raise ValueError("need tf >= 0 and 1 <= df <= n_docs")
    return tf * math.log10(n_docs / df)


def tfidf_vectors(docs: Sequence[Sequence[str]]) -> tuple[list[str], np.ndarray]:
    """Vocabulary and the (docs x vocabulary) tf-idf matrix of tokenized docs."""
    vocab = sorted({t for d in docs for t in d})
    index = {t: j for j, t in enumerate(vocab)}
    tf = np.zeros((len(docs), len(vocab)))
    for i, d in enumerate(docs):
        for t in d:
            tf[i, index[t]] += 1
    df = (tf > 0).sum(axis=0)
    out = np.zeros_like(tf)
    for i in range(len(docs)):
        for j in np.flatnonzero(tf[i]):
            out[i, j] = tfidf_weight(tf[i, j], int(df[j]), len(docs))
    return vocab, out


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine of a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


@dataclass(frozen=True)
class MetricRecord:
    name: str
    n: Optional[int]
    value: Optional[float]


def dump_records(records: Sequence[MetricRecord]) -> bytes:
    lines = [json.dumps(asdict(r), sort_keys=True) for r in records]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def load_records(data: bytes) -> list[MetricRecord]:
    return [MetricRecord(**json.loads(line)) for line in data.decode("utf-8").splitlines() if line]
