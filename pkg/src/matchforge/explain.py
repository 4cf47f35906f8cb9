"""Occlusion attribution and stakeholder reports.

An attribution is ``p_match(full) - p_match(occluded)`` for one segment of
one document.  Segments are the document's sections when it has a section
map, otherwise consecutive 32-token windows.  Deltas from different segments
do not add up to anything meaningful, so reports list them individually and
never carry a total.

Every evidence item in a report names the operation that produced its value
and the arguments it was called with; :func:`reproduce_evidence` re-runs it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Document
from .errors import HiredNotRecommended, UnknownPairing
from .filtering import CandidateProfile, FilterOutcome, HardRequirement
from .matchnet import MatchModel, predict_pair
from .ontology import RelationKind, SkillGraph
from .ranker import RankingEntry
from .textpipe import ChunkPlan, TokenSequence, tokenize

DEFAULT_SEGMENT_TOKENS = 32
TOP_ATTRIBUTIONS = 3


@dataclass(frozen=True)
class Segment:
    role: str           # "job" or "resume"
    label: str          # section name or "tokens[a:b]"
    span: tuple[int, int]
    unit: str           # "chars" (section) or "tokens" (window)

    @property
    def empty(self) -> bool:
        return self.span[0] == self.span[1]


@dataclass(frozen=True)
class Attribution:
    segment: Segment
    delta: Optional[float]
    skipped: bool = False

    def to_dict(self) -> dict:
        return {"role": self.segment.role, "segment": self.segment.label,
                "span": list(self.segment.span), "unit": self.segment.unit,
                "delta": self.delta, "skipped": self.skipped}


@dataclass(frozen=True)
class AttributionSet:
    p_match: float
    attributions: tuple[Attribution, ...]

    def positive(self, n: int = TOP_ATTRIBUTIONS) -> list[Attribution]:
        return [a for a in self.attributions if a.delta is not None and a.delta > 0][:n]

    def negative(self, n: int = TOP_ATTRIBUTIONS) -> list[Attribution]:
        return [a for a in self.attributions if a.delta is not None and a.delta < 0][:n]


def segment_document(doc: Document, role: str, window: int = DEFAULT_SEGMENT_TOKENS,
                     tokenizer: Callable[[str], TokenSequence] = tokenize) -> list[Segment]:
    if doc.sections:
        return [Segment(role, name, span, "chars")
                for name, span in sorted(doc.sections.items(), key=lambda kv: (kv[1], kv[0]))]
    n = len(tokenizer(doc.text))
    return [Segment(role, f"tokens[{a}:{min(a + window, n)}]", (a, min(a + window, n)), "tokens")
            for a in range(0, n, window)]


def occlude(doc: Document, segment: Segment,
            tokenizer: Callable[[str], TokenSequence] = tokenize):
    """The document with the segment removed; the document itself for an empty segment."""
    if segment.empty:
        return doc
    a, b = segment.span
    if segment.unit == "chars":
        return Document(doc.id, doc.lang, doc.text[:a] + " " + doc.text[b:])
    tokens = tokenizer(doc.text).tokens
    return TokenSequence(tokens[:a] + tokens[b:], doc.id)


def _has_tokens(doc, tokenizer) -> bool:
    if isinstance(doc, TokenSequence):
        return len(doc) > 0
    return len(tokenizer(doc.text)) > 0


def occlusion_attribution(model: MatchModel, job: Document, resume: Document, plan: ChunkPlan,
                          roles: Sequence[str] = ("job", "resume"),
                          window: int = DEFAULT_SEGMENT_TOKENS,
                          tokenizer: Callable[[str], TokenSequence] = tokenize) -> AttributionSet:
    """Attributions sorted by ``|delta|`` descending; skipped segments last."""
    base = predict_pair(job, resume, plan, model, tokenizer).p_match
    docs = {"job": job, "resume": resume}
    out = []
    for role in roles:
        for seg in segment_document(docs[role], role, window, tokenizer):
            occluded = occlude(docs[role], seg, tokenizer)
            if not _has_tokens(occluded, tokenizer):
                out.append(Attribution(seg, None, skipped=True))
                continue
            j = occluded if role == "job" else job
            r = occluded if role == "resume" else resume
            out.append(Attribution(seg, base - predict_pair(j, r, plan, model, tokenizer).p_match))
    order = {"job": 0, "resume": 1}
    out.sort(key=lambda a: (a.skipped, -abs(a.delta or 0.0), order.get(a.segment.role, 2),
                            a.segment.span))
    return AttributionSet(base, tuple(out))


# --- reports ---------------------------------------------------------------

class Audience(enum.Enum):
    CANDIDATE = "Candidate"
    RECRUITER = "Recruiter"
    JOB_POSTER = "JobPoster"


@dataclass(frozen=True)
class Evidence:
    claim: str
    source: str
    args: dict
    value: Any

    def to_dict(self) -> dict:
        return {"claim": self.claim, "source": self.source, "args": self.args, "value": self.value}


@dataclass
class StakeholderReport:
    audience: Audience
    subject: dict
    verdict: str
    evidence: list[Evidence] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"audience": self.audience.value, "subject": self.subject, "verdict": self.verdict,
                "evidence": [e.to_dict() for e in self.evidence], "details": self.details}

    def render(self) -> str:
        head = ", ".join(f"{k}={v}" for k, v in self.subject.items())
        lines = [f"{self.audience.value} report ({head})", f"verdict: {self.verdict}"]
        for name, value in self.details.items():
            if isinstance(value, list) and value and isinstance(value[0], dict):
                lines.append(f"{name}:")
                lines.extend("  " + ", ".join(f"{k}={_fmt(v)}" for k, v in row.items()) for row in value)
            else:
                lines.append(f"{name}: {_fmt(value)}")
        lines.append("evidence:")
        for e in self.evidence:
            arg_text = ", ".join(f"{k}={v}" for k, v in e.args.items())
            lines.append(f"  - {e.claim} [{e.source}({arg_text}) = {_fmt(e.value)}]")
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


@dataclass
class PipelineState:
    """Everything the reports read: documents, model and per-job outcomes."""
    documents: Mapping[str, Document]
    graph: SkillGraph
    plan: ChunkPlan
    model: MatchModel
    requirements: Mapping[str, Sequence[HardRequirement]]
    outcomes: Mapping[str, FilterOutcome]
    rankings: Mapping[str, Sequence[RankingEntry]]
    hired: Mapping[str, str] = field(default_factory=dict)
    profiles: Mapping[str, CandidateProfile] = field(default_factory=dict)
    k: int = 5
    window: int = DEFAULT_SEGMENT_TOKENS
    _attr_cache: dict = field(default_factory=dict, repr=False)
    _skill_cache: dict = field(default_factory=dict, repr=False)

    def skills(self, doc_id: str) -> list[str]:
        if doc_id not in self._skill_cache:
            self._skill_cache[doc_id] = self.graph.extract_concepts(self.documents[doc_id].text)
        return self._skill_cache[doc_id]

    def attributions(self, job_id: str, candidate_id: str) -> AttributionSet:
        key = (job_id, candidate_id)
        if key not in self._attr_cache:
            self._attr_cache[key] = occlusion_attribution(
                self.model, self.documents[job_id], self.documents[candidate_id], self.plan,
                roles=("resume",), window=self.window)
        return self._attr_cache[key]

    def ranking(self, job_id: str) -> Sequence[RankingEntry]:
        if job_id not in self.rankings:
            raise UnknownPairing(f"no ranking for job {job_id}")
        return self.rankings[job_id]

    def rank_of(self, job_id: str, candidate_id: str) -> Optional[RankingEntry]:
        for e in self.ranking(job_id):
            if e.candidate_id == candidate_id:
                return e
        return None


def _attribution_evidence(job_id: str, cand_id: str, a: Attribution, what: str) -> Evidence:
    return Evidence(f"{what} segment {a.segment.label} of {cand_id}", "occlusion_attribution",
                    {"job_id": job_id, "candidate_id": cand_id, "role": a.segment.role,
                     "segment": a.segment.label}, a.delta)


def _rank_evidence(job_id: str, entry: RankingEntry) -> Evidence:
    return Evidence(f"{entry.candidate_id} ranked {entry.rank} for {job_id}", "rank",
                    {"job_id": job_id, "candidate_id": entry.candidate_id}, entry.rank)


def _relation_evidence(graph: SkillGraph, a: str, b: str) -> Evidence:
    return Evidence(f"{a} vs {b}", "relate_skills", {"a": a, "b": b}, str(graph.relate_skills(a, b)))


def skill_gaps(state: PipelineState, job_id: str, candidate_id: str) -> list[str]:
    """Skills held by at least half of the top-k that are unrelated to all of the candidate's."""
    top = [e.candidate_id for e in state.ranking(job_id)[:state.k]]
    if not top:
        return []
    counts: dict[str, int] = {}
    for cid in top:
        for s in state.skills(cid):
            counts[s] = counts.get(s, 0) + 1
    own = state.skills(candidate_id)
    gaps = []
    for s, c in sorted(counts.items()):
        if 2 * c < len(top):
            continue
        if all(state.graph.relate_skills(s, o).kind is RelationKind.UNRELATED for o in own):
            gaps.append(s)
    return gaps


def candidate_report(candidate_id: str, job_id: str, state: PipelineState) -> StakeholderReport:
    outcome = state.outcomes.get(job_id)
    if outcome is None or (candidate_id not in outcome.passed
                           and candidate_id not in outcome.rejected_ids):
        raise UnknownPairing(f"{candidate_id} did not apply to {job_id}")
    subject = {"candidate_id": candidate_id, "job_id": job_id}
    rejection = outcome.rejection(candidate_id)
    if rejection is not None:
        evidence = [Evidence(f"requirement {v.requirement} unmet", "apply_filters",
                             {"job_id": job_id, "candidate_id": candidate_id,
                              "requirement": str(v.requirement)}, v.reason)
                    for v in rejection.violations]
        return StakeholderReport(Audience.CANDIDATE, subject, "filter_rejection", evidence,
                                 {"violations": [{"requirement": str(v.requirement), "reason": v.reason}
                                                 for v in rejection.violations]})
    entry = state.rank_of(job_id, candidate_id)
    if entry is None:
        raise UnknownPairing(f"{candidate_id} passed filtering but is missing from the {job_id} ranking")
    evidence = [_rank_evidence(job_id, entry)]
    details: dict = {"rank": entry.rank, "k": state.k}
    hired = state.hired.get(job_id)
    if entry.rank > state.k:
        gaps = skill_gaps(state, job_id, candidate_id)
        details["missing_skills"] = gaps
        evidence.append(Evidence("skills common in the top-k and unrelated to the candidate's",
                                 "skill_gaps", {"job_id": job_id, "candidate_id": candidate_id}, gaps))
        for s in gaps:
            for o in state.skills(candidate_id):
                evidence.append(_relation_evidence(state.graph, s, o))
        for a in state.attributions(job_id, candidate_id).negative():
            evidence.append(_attribution_evidence(job_id, candidate_id, a, "lowering"))
        return StakeholderReport(Audience.CANDIDATE, subject, "low_rank", evidence, details)
    if hired is None or hired == candidate_id:
        verdict = "recommended" if hired is None else "hired"
        return StakeholderReport(Audience.CANDIDATE, subject, verdict, evidence, details)
    details["hired"] = hired
    h_entry = state.rank_of(job_id, hired)
    if h_entry is not None:
        evidence.append(_rank_evidence(job_id, h_entry))
    details["comparison"] = compare_candidates(state, candidate_id, hired)
    for s in sorted(set(state.skills(hired)) - set(state.skills(candidate_id))):
        for o in state.skills(candidate_id):
            evidence.append(_relation_evidence(state.graph, s, o))
    return StakeholderReport(Audience.CANDIDATE, subject, "not_hired", evidence, details)


def directional_similarity(graph: SkillGraph, a: Sequence[str], b: Sequence[str]) -> float:
    if not a or not b:
        return 0.0
    return float(np.mean([max(graph.path_similarity(x, y) for y in b) for x in a]))


def skill_similarity(graph: SkillGraph, a: Sequence[str], b: Sequence[str]) -> float:
    """Mean of both directions of best-match path similarity; symmetric."""
    return 0.5 * (directional_similarity(graph, a, b) + directional_similarity(graph, b, a))


def compare_candidates(state: PipelineState, a: str, b: str) -> dict:
    sa, sb = set(state.skills(a)), set(state.skills(b))
    return {"shared": sorted(sa & sb), f"only_{a}": sorted(sa - sb), f"only_{b}": sorted(sb - sa),
            "similarity": skill_similarity(state.graph, sorted(sa), sorted(sb))}


def recruiter_report(job_id: str, k: int, state: PipelineState) -> StakeholderReport:
    entries = list(state.ranking(job_id))[:k]
    evidence = []
    rows = []
    for e in entries:
        evidence.append(_rank_evidence(job_id, e))
        top = state.attributions(job_id, e.candidate_id).positive()
        for a in top:
            evidence.append(_attribution_evidence(job_id, e.candidate_id, a, "supporting"))
        rows.append({"rank": e.rank, "candidate_id": e.candidate_id, "score": e.score,
                     "skills": state.skills(e.candidate_id),
                     "top_segments": [a.segment.label for a in top]})
    ids = [e.candidate_id for e in entries]
    matrix = [[skill_similarity(state.graph, state.skills(x), state.skills(y)) for y in ids] for x in ids]
    for i, x in enumerate(ids):
        for j in range(i + 1, len(ids)):
            evidence.append(Evidence(f"skill similarity of {x} and {ids[j]}", "skill_similarity",
                                     {"a": x, "b": ids[j]}, matrix[i][j]))
    return StakeholderReport(Audience.RECRUITER, {"job_id": job_id, "k": k}, "shortlist", evidence,
                             {"entries": rows, "candidates": ids, "comparison_matrix": matrix})


def poster_report(job_id: str, hired_candidate_id: str, state: PipelineState) -> StakeholderReport:
    recommended = list(state.ranking(job_id))[:state.k]
    pos = next((i for i, e in enumerate(recommended) if e.candidate_id == hired_candidate_id), None)
    if pos is None:
        raise HiredNotRecommended(f"{hired_candidate_id} is not among the recommended for {job_id}")
    hired = recommended[pos]
    evidence = [_rank_evidence(job_id, hired)]
    blocks = []
    hired_attr = state.attributions(job_id, hired_candidate_id)
    for other in recommended[:pos]:
        evidence.append(_rank_evidence(job_id, other))
        other_attr = state.attributions(job_id, other.candidate_id)
        block = compare_candidates(state, hired_candidate_id, other.candidate_id)
        block.update({"candidate_id": other.candidate_id, "rank": other.rank,
                      "score_gap": other.score - hired.score,
                      "hired_top_segments": [a.segment.label for a in hired_attr.positive()],
                      "other_top_segments": [a.segment.label for a in other_attr.positive()]})
        for a in other_attr.positive():
            evidence.append(_attribution_evidence(job_id, other.candidate_id, a, "supporting"))
        blocks.append(block)
    for a in hired_attr.positive():
        evidence.append(_attribution_evidence(job_id, hired_candidate_id, a, "supporting"))
    return StakeholderReport(Audience.JOB_POSTER, {"job_id": job_id, "hired": hired_candidate_id},
                             "hire_decision", evidence, {"comparisons": blocks})


def reproduce_evidence(item: Evidence, state: PipelineState) -> Any:
    """Re-run the operation an evidence item cites, from scratch."""
    a = item.args
    if item.source == "occlusion_attribution":
        fresh = occlusion_attribution(state.model, state.documents[a["job_id"]],
                                      state.documents[a["candidate_id"]], state.plan,
                                      roles=(a["role"],), window=state.window)
        return next(x.delta for x in fresh.attributions if x.segment.label == a["segment"])
    if item.source == "rank":
        return next(e.rank for e in state.ranking(a["job_id"]) if e.candidate_id == a["candidate_id"])
    if item.source == "relate_skills":
        return str(state.graph.relate_skills(a["a"], a["b"]))
    if item.source == "apply_filters":
        from .filtering import apply_filters
        profile = state.profiles[a["candidate_id"]]
        outcome = apply_filters(state.requirements[a["job_id"]], [profile], state.graph)
        rej = outcome.rejection(a["candidate_id"])
        return next(v.reason for v in rej.violations if str(v.requirement) == a["requirement"])
    if item.source == "skill_gaps":
        fresh = PipelineState(state.documents, state.graph, state.plan, state.model,
                              state.requirements, state.outcomes, state.rankings, state.hired,
                              state.profiles, state.k, state.window)
        return skill_gaps(fresh, a["job_id"], a["candidate_id"])
    if item.source == "skill_similarity":
        g = state.graph
        return skill_similarity(g, g.extract_concepts(state.documents[a["a"]].text),
                                g.extract_concepts(state.documents[a["b"]].text))
    raise ValueError(f"unknown evidence source {item.source!r}")
