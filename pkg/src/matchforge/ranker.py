"""Per-job candidate ranking and ranking-quality evaluation."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import metrics
from .errors import ZeroVector
from .filtering import FilterOutcome
from .matchnet import MatchModel, document_embedding, predict_pair
from .textpipe import ChunkPlan, TokenSequence, tokenize


class Provenance(enum.Enum):
    NEURAL_HEAD = "NeuralHead"
    COSINE_BASELINE = "CosineBaseline"


@dataclass(frozen=True)
class RankingEntry:
    candidate_id: str
    score: float
    rank: int
    provenance: Provenance


def rank_scores(scores: Mapping[str, float], provenance: Provenance) -> list[RankingEntry]:
    """Sort by score descending, ties by candidate id ascending."""
    order = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [RankingEntry(cid, float(s), i, provenance) for i, (cid, s) in enumerate(order, start=1)]


def cosine_score(job, resume, plan: ChunkPlan, model: MatchModel,
                 tokenizer: Callable[[str], TokenSequence] = tokenize) -> float:
    u = document_embedding(job, "job", plan, model.encoder, tokenizer)
    v = document_embedding(resume, "resume", plan, model.encoder, tokenizer)
    try:
        return metrics.cosine(u, v)
    except ZeroVector:
        return 0.0


def rank_candidates(job, candidates: Sequence, model: MatchModel, plan: ChunkPlan,
                    provenance: Provenance = Provenance.NEURAL_HEAD,
                    outcome: Optional[FilterOutcome] = None,
                    tokenizer: Callable[[str], TokenSequence] = tokenize) -> list[RankingEntry]:
    """Score and rank candidate documents for one job.

    When a filter outcome is supplied only its passed candidates are scored.
    """
    if outcome is not None:
        allowed = set(outcome.passed)
        candidates = [c for c in candidates if c.id in allowed]
    scores = {}
    for cand in candidates:
        if provenance is Provenance.NEURAL_HEAD:
            scores[cand.id] = predict_pair(job, cand, plan, model, tokenizer).p_match
        else:
            scores[cand.id] = cosine_score(job, cand, plan, model, tokenizer)
    return rank_scores(scores, provenance)


@dataclass
class RankingReport:
    k_list: tuple[int, ...]
    per_job: dict[str, dict[str, float]]
    mean: dict[str, float]
    skipped_jobs: list[str] = field(default_factory=list)

    @property
    def warnings(self) -> int:
        return len(self.skipped_jobs)

    def to_records(self) -> list[metrics.MetricRecord]:
        out = []
        for name, value in sorted(self.mean.items()):
            n = int(name.split("@")[1]) if "@" in name else None
            out.append(metrics.MetricRecord(name, n, value))
        return out


def relevance(entries: Sequence[RankingEntry], gold: Mapping[tuple[str, str], bool],
              job_id: str) -> list[int]:
    return [int(bool(gold.get((job_id, e.candidate_id), False))) for e in entries]


def evaluate_ranking(rankings: Mapping[str, Sequence[RankingEntry]],
                     gold: Mapping[tuple[str, str], bool],
                     k_list: Sequence[int] = (1, 3, 5, 10)) -> RankingReport:
    """NDCG@k, AP and reciprocal rank per job, plus their means.

    ``gold`` maps ``(job_id, candidate_id)`` to a binary label.  Relevance
    counts gold matches among the ranked candidates; a job with none of them
    is skipped and counted as a warning.  NDCG@k is taken at ``min(k, n)``.
    """
    k_list = tuple(k_list)
    per_job: dict[str, dict[str, float]] = {}
    skipped = []
    for job_id in sorted(rankings):
        rels = relevance(rankings[job_id], gold, job_id)
        if sum(rels) == 0:
            skipped.append(job_id)
            continue
        row = {f"ndcg@{k}": metrics.ndcg(rels, min(k, len(rels))) for k in k_list}
        row["ap"] = metrics.average_precision(rels)
        row["rr"] = 1.0 / metrics.first_relevant_rank(rels)
        per_job[job_id] = row
    mean: dict[str, float] = {}
    if per_job:
        for name in next(iter(per_job.values())):
            mean[name] = float(np.mean([row[name] for row in per_job.values()]))
        mean["map"] = mean.pop("ap")
        mean["mrr"] = metrics.mrr([metrics.first_relevant_rank(relevance(rankings[j], gold, j))
                                   for j in per_job])
        del mean["rr"]
    return RankingReport(k_list, per_job, mean, skipped)


def dump_rankings(rankings: Mapping[str, Sequence[RankingEntry]]) -> bytes:
    lines = []
    for job_id in sorted(rankings):
        for e in rankings[job_id]:
            lines.append(json.dumps({"job_id": job_id, "rank": e.rank, "candidate_id": e.candidate_id,
                                     "score": e.score, "provenance": e.provenance.value}))
    return "".join(line + "\n" for line in lines).encode("utf-8")


def load_rankings(data: bytes) -> dict[str, list[RankingEntry]]:
    out: dict[str, list[RankingEntry]] = {}
    for line in data.decode("utf-8").splitlines():
        if not line:
            continue
        rec = json.loads(line)
        out.setdefault(rec["job_id"], []).append(
            RankingEntry(rec["candidate_id"], rec["score"], rec["rank"], Provenance(rec["provenance"])))
    for entries in out.values():
        entries.sort(key=lambda e: e.rank)
    return out
