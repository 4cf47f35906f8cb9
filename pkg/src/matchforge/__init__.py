"""Resume/job matching with chunked toy encoders, hard-requirement filtering,
ranking metrics, occlusion explanations and content-addressed lineage."""

from .corpus import CleanCorpus, Document, Label, LabeledPair, dedupe_and_filter, stratified_split
from .errors import ConfigError, DataError, MatchforgeError, ModelError, TraceError
from .filtering import FilterOutcome, HardRequirement, PatternSet, apply_filters, parse_requirements
from .matchnet import MatchModel, TrainConfig, predict_pair, train
from .ontology import SkillGraph, load_bundled_graph
from .ranker import RankingEntry, evaluate_ranking, rank_candidates
from .textpipe import ChunkPlan, plan_chunks, tokenize
from .trace import ArtifactKind, Store

__version__ = "0.1.0"

__all__ = [
    "ArtifactKind", "ChunkPlan", "CleanCorpus", "ConfigError", "DataError", "Document",
    "FilterOutcome", "HardRequirement", "Label", "LabeledPair", "MatchModel", "MatchforgeError",
    "ModelError", "PatternSet", "RankingEntry", "SkillGraph", "Store", "TraceError", "TrainConfig",
    "apply_filters", "dedupe_and_filter", "evaluate_ranking", "load_bundled_graph",
    "parse_requirements", "plan_chunks", "predict_pair", "rank_candidates", "stratified_split",
    "tokenize", "train",
]
