import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from matchforge import metrics
from matchforge.corpus import Document
from matchforge.embed import EncoderVariant
from matchforge.filtering import FilterOutcome
from matchforge.matchnet import MatchModel
from matchforge.ranker import (Provenance, RankingEntry, dump_rankings, evaluate_ranking, load_rankings,
                               rank_candidates, rank_scores)
from matchforge.textpipe import ChunkPlan

from .oracles import ndcg_formula

PLAN = ChunkPlan(32, 4, 2, 2, 0.1, 0.0, 0.0)
NH = Provenance.NEURAL_HEAD


def test_rank_order_and_ties():
    out = rank_scores({"b": 0.2, "a": 0.9}, NH)
    assert [(e.candidate_id, e.rank) for e in out] == [("a", 1), ("b", 2)]
    tied = rank_scores({"z": 0.5, "m": 0.5, "a": 0.1}, NH)
    assert [e.candidate_id for e in tied] == ["m", "z", "a"]


@given(st.dictionaries(st.text(min_size=1, max_size=3), st.sampled_from([0.0, 0.25, 0.5, 1.0]), max_size=10))
def test_rank_scores_is_a_pure_function(scores):
    a = rank_scores(scores, NH)
    b = rank_scores(dict(reversed(list(scores.items()))), NH)
    assert a == b
    assert [e.rank for e in a] == list(range(1, len(scores) + 1))
    assert all(x.score >= y.score for x, y in zip(a, a[1:]))


def test_cosine_baseline_identical_text_ranks_first():
    model = MatchModel.init(EncoderVariant.FEATURE_HASH, d=16, seed=0)
    job = Document("j", "en", "senior python developer with sql")
    cands = [Document("x", "en", "gardening and cooking"), Document("y", "en", "senior python developer with sql")]
    out = rank_candidates(job, cands, model, PLAN, Provenance.COSINE_BASELINE)
    assert out[0].candidate_id == "y"
    assert out[0].score == pytest.approx(1.0)
    assert all(e.provenance is Provenance.COSINE_BASELINE for e in out)


def test_filtered_candidates_never_ranked():
    model = MatchModel.init(EncoderVariant.FEATURE_HASH, d=8, seed=1)
    job = Document("j", "en", "python")
    cands = [Document(c, "en", f"text {c}") for c in "abcd"]
    outcome = FilterOutcome(("a", "c"), ())
    out = rank_candidates(job, cands, model, PLAN, outcome=outcome)
    assert sorted(e.candidate_id for e in out) == ["a", "c"]


def _entries(ids):
    return [RankingEntry(c, 1.0 - i / 10, i + 1, NH) for i, c in enumerate(ids)]


def test_ideal_rankings():
    rankings = {"j1": _entries(["a", "b", "c"]), "j2": _entries(["x", "y"])}
    gold = {("j1", "a"): True, ("j1", "b"): True, ("j2", "x"): True}
    rep = evaluate_ranking(rankings, gold, (1, 3))
    assert rep.mean["ndcg@1"] == rep.mean["ndcg@3"] == rep.mean["mrr"] == rep.mean["map"] == 1.0


def test_single_job_example():
    rep = evaluate_ranking({"j": _entries(["a", "b", "c"])}, {("j", "a"): True, ("j", "c"): True}, (3,))
    assert rep.per_job["j"]["ndcg@3"] == pytest.approx(0.9197, abs=5e-5)
    assert rep.per_job["j"]["ndcg@3"] == pytest.approx(ndcg_formula([1, 0, 1], 3))


def test_job_without_gold_is_skipped():
    rankings = {"j1": _entries(["a"]), "j2": _entries(["b"])}
    rep = evaluate_ranking(rankings, {("j1", "a"): True, ("j2", "b"): False}, (1,))
    assert rep.skipped_jobs == ["j2"] and rep.warnings == 1
    assert list(rep.per_job) == ["j1"]


def test_matches_direct_metric_calls():
    rng = np.random.default_rng(0)
    rankings, gold = {}, {}
    for j in range(6):
        ids = [f"c{i}" for i in range(8)]
        rankings[f"j{j}"] = _entries(ids)
        for c in ids:
            gold[(f"j{j}", c)] = bool(rng.random() < 0.3)
    rep = evaluate_ranking(rankings, gold, (1, 5))
    for job_id, row in rep.per_job.items():
        rels = [int(gold[(job_id, e.candidate_id)]) for e in rankings[job_id]]
        assert row["ndcg@5"] == metrics.ndcg(rels, 5)
        assert row["ap"] == metrics.average_precision(rels)
    firsts = [metrics.first_relevant_rank([int(gold[(j, e.candidate_id)]) for e in rankings[j]])
              for j in rep.per_job]
    assert rep.mean["mrr"] == metrics.mrr(firsts)
    names = {r.name for r in rep.to_records()}
    assert names == {"ndcg@1", "ndcg@5", "map", "mrr"}


def test_rankings_round_trip():
    rankings = {"j": _entries(["a", "b"]), "k": [RankingEntry("z", 0.1, 1, Provenance.COSINE_BASELINE)]}
    assert load_rankings(dump_rankings(rankings)) == rankings
