"""Pipeline stages as pure functions of (config, input bytes).

Each stage returns its output artifacts as bytes plus a metrics map.  Stages
never read the clock or global state, so re-running one on the same config
and inputs reproduces its outputs byte for byte, which is what replay checks.
"""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from . import corpus as corpus_mod
from . import metrics
from .corpus import CleanCorpus, CorpusSplit, Label, LabeledPair, StatusTable
from .embed import EncoderVariant, project
from .errors import ConfigError, SingleClass
from .explain import PipelineState, candidate_report, poster_report, recruiter_report
from .filtering import (CandidateProfile, FilterOutcome, HardRequirement, PatternSet, apply_filters,
                        extract_profile, parse_requirements)
from .matchnet import (FeatureCache, MatchModel, TrainConfig, evaluate_pairs, forward_batch,
                       load_checkpoint, save_checkpoint, train)
from .ontology import parse_graph
from .ranker import Provenance, dump_rankings, evaluate_ranking, load_rankings, rank_candidates
from .textpipe import ChunkPlan, plan_chunks, tokenize
from .trace import ArtifactKind, canonical_json

HIRED_RE = re.compile(r"hired", re.IGNORECASE)


@dataclass
class PipelineConfig:
    """Every knob of a pipeline run.  Path fields left empty use the bundled fixture."""
    documents: Optional[str] = None
    pairs: Optional[str] = None
    status_map: Optional[str] = None
    ontology: Optional[str] = None
    patterns: Optional[str] = None
    out_dir: str = "out"
    min_words: int = 50
    window: int = 512
    overlap: int = 50
    loss_threshold: float = 0.10
    encoder: str = "hash"
    d: int = 64
    buckets: int = 64
    learning_rate: float = 0.5
    batch_size: int = 4
    max_epochs: int = 200
    patience: int = 50
    class_weights: tuple = (1.0, 1.0)
    test_fraction: float = 0.2
    validation_fraction: float = 0.2
    rank_on: str = "test"
    ranker: str = "neural"
    k_list: tuple = (1, 3, 5, 10)
    report_k: int = 5
    seed: int = 0

    PATH_FIELDS = ("documents", "pairs", "status_map", "ontology", "patterns", "out_dir")

    def __post_init__(self):
        self.class_weights = tuple(float(x) for x in self.class_weights)
        self.k_list = tuple(int(x) for x in self.k_list)
        self.validate()

    def validate(self) -> None:
        if self.encoder not in ("hash", "bag"):
            raise ConfigError(f"encoder must be 'hash' or 'bag', got {self.encoder!r}")
        if self.rank_on not in ("test", "all"):
            raise ConfigError(f"rank_on must be 'test' or 'all', got {self.rank_on!r}")
        if self.ranker not in ("neural", "cosine"):
            raise ConfigError(f"ranker must be 'neural' or 'cosine', got {self.ranker!r}")
        if not self.k_list or any(k < 1 for k in self.k_list):
            raise ConfigError("k_list needs positive integers")
        if self.report_k < 1:
            raise ConfigError("report_k must be >= 1")
        if not 0 <= self.overlap < self.window:
            raise ConfigError("need 0 <= overlap < window")
        if not 0 <= self.loss_threshold <= 1:
            raise ConfigError("loss_threshold must lie in [0, 1]")
        if self.encoder == "hash" and self.buckets != self.d:
            self.buckets = self.d
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: "str | Path") -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def stage_config(self) -> dict:
        """The part of the config that affects artifacts; paths are excluded."""
        out = dataclasses.asdict(self)
        for name in self.PATH_FIELDS:
            out.pop(name)
        out["class_weights"] = list(self.class_weights)
        out["k_list"] = list(self.k_list)
        return out

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.max_epochs, self.patience,
                           self.seed, self.class_weights)


def stage_config_from(config: Mapping) -> PipelineConfig:
    return PipelineConfig.from_dict(dict(config))


@dataclass
class StageResult:
    outputs: dict
    metrics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Stage:
    name: str
    fn: Callable[[Mapping, Mapping[str, bytes]], StageResult]
    inputs: tuple[str, ...]
    outputs: dict  # output name -> ArtifactKind


# --- (de)serialization helpers ---------------------------------------------

def _pair_row(p: LabeledPair) -> list:
    return [p.job_id, p.candidate_id, p.status, p.label.value]


def split_to_bytes(split: CorpusSplit) -> bytes:
    return canonical_json({"seed": split.seed, "ratios": list(split.ratios),
                           "train": [_pair_row(p) for p in split.train],
                           "validation": [_pair_row(p) for p in split.validation],
                           "test": [_pair_row(p) for p in split.test]})


def split_from_bytes(data: bytes) -> CorpusSplit:
    rec = json.loads(data.decode("utf-8"))
    rows = lambda key: tuple(LabeledPair(j, c, s, Label(lab)) for j, c, s, lab in rec[key])  # noqa: E731
    return CorpusSplit(rows("train"), rows("validation"), rows("test"), rec["seed"], tuple(rec["ratios"]))


@dataclass
class FilterArtifact:
    requirements: dict[str, list[HardRequirement]]
    outcomes: dict[str, FilterOutcome]
    profiles: dict[str, CandidateProfile]

    def to_bytes(self) -> bytes:
        return canonical_json({
            "requirements": {j: [r.to_record() for r in rs] for j, rs in self.requirements.items()},
            "outcomes": {j: o.to_record() for j, o in self.outcomes.items()},
            "profiles": {c: p.to_record() for c, p in self.profiles.items()},
        })

    @classmethod
    def from_bytes(cls, data: bytes) -> "FilterArtifact":
        rec = json.loads(data.decode("utf-8"))
        return cls({j: [HardRequirement.from_record(r) for r in rs] for j, rs in rec["requirements"].items()},
                   {j: FilterOutcome.from_record(o) for j, o in rec["outcomes"].items()},
                   {c: CandidateProfile.from_record(p) for c, p in rec["profiles"].items()})


def bundled_bytes(name: str) -> bytes:
    return resources.files("matchforge.data").joinpath(name).read_bytes()


BUNDLED = {"documents": "fixture_docs.jsonl", "pairs": "fixture_pairs.tsv",
           "status_map": "status_map.tsv", "ontology": "esco_mini.tsv", "patterns": "patterns.tsv"}


def source_bytes(cfg: PipelineConfig, name: str) -> bytes:
    path = getattr(cfg, name)
    if path is None:
        return bundled_bytes(BUNDLED[name])
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {name} file {path}: {exc}") from None


# --- stages ----------------------------------------------------------------

def ingest_stage(config: Mapping, inputs: Mapping[str, bytes]) -> StageResult:
    cfg = stage_config_from(config)
    table = StatusTable.parse(inputs["status_map"].decode("utf-8"))
    raw_docs = corpus_mod.read_documents(inputs["documents"].decode("utf-8"))
    docs = corpus_mod.clean_documents(raw_docs)
    pairs = corpus_mod.label_pairs(corpus_mod.read_pairs(inputs["pairs"].decode("utf-8")), table)
    clean = corpus_mod.dedupe_and_filter(pairs, docs, cfg.min_words)
    used = {i for p in clean.pairs for i in p.key}
    clean = CleanCorpus({k: v for k, v in clean.documents.items() if k in used}, clean.pairs, clean.audit)
    balance = corpus_mod.label_balance(clean.pairs)
    return StageResult({"corpus": clean.to_bytes(),
                        "audit": corpus_mod.write_audit(clean.audit).encode("utf-8")},
                       {"pairs": len(clean.pairs), "audit_entries": len(clean.audit),
                        "match": balance["Match"], "unmatch": balance["Unmatch"]})


def _role_lengths(clean: CleanCorpus) -> tuple[list[int], list[int]]:
    length = lambda i: len(tokenize(clean.documents[i].text))  # noqa: E731
    return [length(j) for j in clean.job_ids], [length(c) for c in clean.candidate_ids]


def plan_stage(config: Mapping, inputs: Mapping[str, bytes]) -> StageResult:
    cfg = stage_config_from(config)
    clean = CleanCorpus.from_bytes(inputs["corpus"])
    jobs, resumes = _role_lengths(clean)
    plan = plan_chunks(jobs, resumes, cfg.window, cfg.overlap, cfg.loss_threshold)
    return StageResult({"plan": plan.to_bytes()},
                       {"k_job": plan.k_job, "k_resume": plan.k_resume,
                        "loss_job": plan.realized_loss_job, "loss_resume": plan.realized_loss_resume})


def _model_init(cfg: PipelineConfig) -> MatchModel:
    variant = EncoderVariant(cfg.encoder)
    return MatchModel.init(variant, cfg.d, cfg.buckets if variant is EncoderVariant.TRAINABLE_BAG else None,
                           cfg.seed)


def train_stage(config: Mapping, inputs: Mapping[str, bytes]) -> StageResult:
    cfg = stage_config_from(config)
    clean = CleanCorpus.from_bytes(inputs["corpus"])
    plan = ChunkPlan.from_bytes(inputs["plan"])
    split = corpus_mod.stratified_split(clean.pairs, cfg.seed, cfg.test_fraction, cfg.validation_fraction)
    result = train(split, plan, _model_init(cfg), cfg.train_config(), clean.documents)
    best = result.log[result.best_epoch - 1] if result.best_epoch else None
    m = {"best_epoch": result.best_epoch, "epochs_run": len(result.log)}
    if best is not None:
        m.update({"val_f1": best.val_f1, "val_accuracy": best.val_accuracy, "val_loss": best.val_loss})
    return StageResult({"split": split_to_bytes(split), "checkpoint": save_checkpoint(result.model)}, m)


def _applicants(clean: CleanCorpus, split: CorpusSplit, rank_on: str) -> dict[str, list[str]]:
    pairs = split.test if rank_on == "test" else clean.pairs
    out: dict[str, list[str]] = {}
    for p in pairs:
        out.setdefault(p.job_id, []).append(p.candidate_id)
    return {j: sorted(set(c)) for j, c in sorted(out.items())}


def rank_stage(config: Mapping, inputs: Mapping[str, bytes]) -> StageResult:
    cfg = stage_config_from(config)
    clean = CleanCorpus.from_bytes(inputs["corpus"])
    graph = parse_graph(inputs["ontology"].decode("utf-8"))
    patterns = PatternSet.parse(inputs["patterns"].decode("utf-8"))
    plan = ChunkPlan.from_bytes(inputs["plan"])
    model = load_checkpoint(inputs["checkpoint"])
    split = split_from_bytes(inputs["split"])
    provenance = Provenance.NEURAL_HEAD if cfg.ranker == "neural" else Provenance.COSINE_BASELINE
    filt = FilterArtifact({}, {}, {})
    rankings = {}
    for job_id, cands in _applicants(clean, split, cfg.rank_on).items():
        job = clean.documents[job_id]
        reqs = parse_requirements(job, patterns, graph)
        profiles = []
        for cid in cands:
            if cid not in filt.profiles:
                filt.profiles[cid] = extract_profile(clean.documents[cid], patterns, graph)
            profiles.append(filt.profiles[cid])
        outcome = apply_filters(reqs, profiles, graph)
        filt.requirements[job_id] = reqs
        filt.outcomes[job_id] = outcome
        rankings[job_id] = rank_candidates(job, [clean.documents[c] for c in cands], model, plan,
                                           provenance, outcome)
    n_rej = sum(len(o.rejected) for o in filt.outcomes.values())
    n_pass = sum(len(o.passed) for o in filt.outcomes.values())
    return StageResult({"filter": filt.to_bytes(), "ranking": dump_rankings(rankings)},
                       {"jobs": len(rankings), "passed": n_pass, "rejected": n_rej})


def gold_labels(clean: CleanCorpus) -> dict[tuple[str, str], bool]:
    return {p.key: p.label is Label.MATCH for p in clean.pairs}


def evaluate_stage(config: Mapping, inputs: Mapping[str, bytes]) -> StageResult:
    cfg = stage_config_from(config)
    clean = CleanCorpus.from_bytes(inputs["corpus"])
    plan = ChunkPlan.from_bytes(inputs["plan"])
    model = load_checkpoint(inputs["checkpoint"])
    split = split_from_bytes(inputs["split"])
    rankings = load_rankings(inputs["ranking"])
    features = FeatureCache(clean.documents, plan, model.encoder)
    loss, counts = evaluate_pairs(model, features, split.test)
    stats = metrics.confusion_stats(counts)
    records = [metrics.MetricRecord("test_loss", None, loss)]
    for name in ("accuracy", "precision", "recall", "f1", "tnr", "fpr"):
        records.append(metrics.MetricRecord(name, None, getattr(stats, name)))
    jw, rw, q = features.batch(split.test)
    x = np.hstack([project(jw, model.encoder), project(rw, model.encoder)])
    scores = forward_batch(x, model.head).probs[:, 1]
    try:
        auc = metrics.roc_auc(scores, q[:, 1].astype(int))
    except SingleClass:
        auc = None
    records.append(metrics.MetricRecord("auc", None, auc))
    report = evaluate_ranking(rankings, gold_labels(clean), cfg.k_list)
    records.extend(report.to_records())
    records.append(metrics.MetricRecord("jobs_without_gold", None, float(report.warnings)))
    summary = {r.name: r.value for r in records if r.value is not None}
    return StageResult({"metrics": metrics.dump_records(records)}, summary)


def build_state(cfg: PipelineConfig, inputs: Mapping[str, bytes]) -> PipelineState:
    clean = CleanCorpus.from_bytes(inputs["corpus"])
    filt = FilterArtifact.from_bytes(inputs["filter"])
    rankings = load_rankings(inputs["ranking"])
    for job_id in filt.outcomes:
        rankings.setdefault(job_id, [])
    hired = {}
    for p in clean.pairs:
        if HIRED_RE.fullmatch(p.status.strip()) and p.job_id in filt.outcomes:
            if p.candidate_id in filt.outcomes[p.job_id].passed:
                hired.setdefault(p.job_id, p.candidate_id)
    return PipelineState(clean.documents, parse_graph(inputs["ontology"].decode("utf-8")),
                         ChunkPlan.from_bytes(inputs["plan"]), load_checkpoint(inputs["checkpoint"]),
                         filt.requirements, filt.outcomes, rankings, hired, filt.profiles, cfg.report_k)


def generate_reports(state: PipelineState) -> list:
    reports = []
    for job_id in sorted(state.outcomes):
        reports.append(recruiter_report(job_id, state.k, state))
        hired = state.hired.get(job_id)
        if hired is not None and any(e.candidate_id == hired for e in state.rankings[job_id][:state.k]):
            reports.append(poster_report(job_id, hired, state))
        outcome = state.outcomes[job_id]
        for cid in sorted((*outcome.passed, *outcome.rejected_ids)):
            reports.append(candidate_report(cid, job_id, state))
    return reports


def report_filename(report) -> str:
    subject = "_".join(str(v) for v in report.subject.values())
    return f"{report.audience.value.lower()}_{subject}"


def explain_stage(config: Mapping, inputs: Mapping[str, bytes]) -> StageResult:
    cfg = stage_config_from(config)
    state = build_state(cfg, inputs)
    reports = generate_reports(state)
    bundle = [{"name": report_filename(r), "report": r.to_dict(), "text": r.render()} for r in reports]
    counts: dict[str, int] = {}
    for r in reports:
        counts[r.audience.value] = counts.get(r.audience.value, 0) + 1
    return StageResult({"reports": canonical_json(bundle)}, {f"{k.lower()}_reports": v for k, v in counts.items()})


STAGES = {
    "ingest": Stage("ingest", ingest_stage, ("documents", "pairs", "status_map"),
                    {"corpus": ArtifactKind.CORPUS, "audit": ArtifactKind.REPORT}),
    "plan": Stage("plan", plan_stage, ("corpus",), {"plan": ArtifactKind.CHUNK_PLAN}),
    "train": Stage("train", train_stage, ("corpus", "plan"),
                   {"split": ArtifactKind.CORPUS, "checkpoint": ArtifactKind.CHECKPOINT}),
    "rank": Stage("rank", rank_stage, ("corpus", "ontology", "patterns", "plan", "checkpoint", "split"),
                  {"filter": ArtifactKind.RANKING, "ranking": ArtifactKind.RANKING}),
    "evaluate": Stage("evaluate", evaluate_stage, ("corpus", "plan", "checkpoint", "split", "ranking"),
                      {"metrics": ArtifactKind.REPORT}),
    "explain": Stage("explain", explain_stage,
                     ("corpus", "ontology", "plan", "checkpoint", "filter", "ranking"),
                     {"reports": ArtifactKind.REPORT}),
}

SOURCE_KINDS = {"documents": ArtifactKind.CORPUS, "pairs": ArtifactKind.CORPUS,
                "status_map": ArtifactKind.CONFIG, "ontology": ArtifactKind.ONTOLOGY,
                "patterns": ArtifactKind.CONFIG}

REPLAY = {name: (lambda fn: lambda config, inputs: fn(config, inputs).outputs)(s.fn)
          for name, s in STAGES.items()}
