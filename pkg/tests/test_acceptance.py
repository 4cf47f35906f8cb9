import itertools
import time

import numpy as np
import pytest

from matchforge import metrics
from matchforge.corpus import Document, stratified_split
from matchforge.embed import EncoderVariant
from matchforge.errors import ZeroRelevant
from matchforge.explain import (Segment, candidate_report, occlude, occlusion_attribution,
                                recruiter_report, reproduce_evidence)
from matchforge.filtering import (CandidateProfile, HardRequirement, RequirementKind, apply_filters,
                                  parse_requirements)
from matchforge.matchnet import (FeatureCache, MatchModel, TrainConfig, evaluate_pairs, loss_and_grads,
                                 predict_pair, save_checkpoint, train)
from matchforge.ontology import ConceptKind, RelationKind, SkillRelation, jaro_winkler
from matchforge.ranker import rank_candidates
from matchforge.synthetic import separable_corpus
from matchforge.textpipe import (ChunkPlan, TokenSequence, capacity, choose_k, chunk, corpus_loss,
                                 plan_chunks, tokenize, unchunk)

from .helpers import build_state, make_candidates, resume_doc
from .oracles import (ap_formula, corpus_loss_scan, jaro_winkler_reference, mrr_formula,
                      ndcg_formula, numeric_grad, relative_error)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f}s, budget {self.seconds}s"


@pytest.mark.criterion(1, "metric-oracle equivalence (NDCG, AP, MRR)")
def test_criterion_01_metric_oracles():
    with Budget(5):
        worst = 0.0
        lists = []
        for length in range(1, 7):
            for rels in itertools.product((0, 1), repeat=length):
                lists.append(list(rels))
        for rels in lists:
            for n in range(1, len(rels) + 1):
                worst = max(worst, abs(metrics.ndcg(rels, n) - ndcg_formula(rels, n)))
            if sum(rels):
                worst = max(worst, abs(metrics.average_precision(rels) - ap_formula(rels)))
            else:
                with pytest.raises(ZeroRelevant):
                    metrics.average_precision(rels)
        # graded relevance, every permutation of a few multisets
        for grades in ([2, 1, 0], [3, 0, 1, 2], [2, 2, 1, 0, 0], [1, 0, 2, 0, 3, 1]):
            for perm in set(itertools.permutations(grades)):
                worst = max(worst, abs(metrics.ndcg(list(perm)) - ndcg_formula(list(perm), len(perm))))
        rng = np.random.default_rng(1)
        hits = [r for r in lists if sum(r)]
        for _ in range(200):
            group = [hits[i] for i in rng.integers(0, len(hits), size=rng.integers(1, 6))]
            got = metrics.mrr([metrics.first_relevant_rank(r) for r in group])
            worst = max(worst, abs(got - mrr_formula(group)))
        assert worst <= 1e-9
        assert metrics.ndcg([1, 0, 1], 3) == pytest.approx(0.9197, abs=5e-5)
        assert metrics.average_precision([1, 0, 1]) == pytest.approx(0.8333, abs=5e-5)


@pytest.mark.criterion(2, "confusion statistics: F1 = 0.86 and accuracy identity")
def test_criterion_02_confusion_stats():
    with Budget(1):
        assert round(metrics.f1_score(0.80, 0.93), 2) == 0.86
        rng = np.random.default_rng(2)
        for tp, fp, fn, tn in rng.integers(0, 1000, size=(10_000, 4)):
            counts = metrics.ConfusionCounts(int(tp), int(fp), int(fn), int(tn))
            n = tp + fp + fn + tn
            stats = metrics.confusion_stats(counts)
            if n == 0:
                assert stats.accuracy is None
                continue
            assert stats.accuracy == pytest.approx((tp + tn) / n, abs=1e-12)
            if stats.recall is not None and stats.tnr is not None:
                mixed = (tp + fn) / n * stats.recall + (tn + fp) / n * stats.tnr
                assert stats.accuracy == pytest.approx(mixed, abs=1e-12)


def _independent_loss(model, job_w, res_w, q):
    enc, head = model.encoder, model.head
    x = np.hstack([job_w @ enc.table, res_w @ enc.table]) if enc.trainable else np.hstack([job_w, res_w])
    h = np.maximum(0.0, x @ head.w_hidden + head.b_hidden)
    logits = h @ head.w_out + head.b_out
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return float(np.mean(-np.sum(q * np.log(p), axis=1)))


@pytest.mark.criterion(3, "gradient fidelity of every head tensor and the bag table")
def test_criterion_03_gradients():
    with Budget(10):
        worst = {}
        for seed in range(20):
            rng = np.random.default_rng(seed)
            for variant, buckets in ((EncoderVariant.FEATURE_HASH, None), (EncoderVariant.TRAINABLE_BAG, 16)):
                model = MatchModel.init(variant, d=8, buckets=buckets, seed=seed)
                b = model.encoder.buckets
                job_w = rng.random((5, b))
                res_w = rng.random((5, b))
                q = np.eye(2)[rng.integers(0, 2, size=5)]
                loss, grads = loss_and_grads(model, job_w, res_w, q)
                assert loss == pytest.approx(_independent_loss(model, job_w, res_w, q), rel=1e-12)
                for name, tensor in model.tensors().items():
                    num = numeric_grad(lambda: _independent_loss(model, job_w, res_w, q), tensor, h=1e-5)
                    err = relative_error(grads[name], num)
                    worst[name] = max(worst.get(name, 0.0), err)
        assert set(worst) == {"w_hidden", "b_hidden", "w_out", "b_out", "table"}
        assert max(worst.values()) < 1e-4, worst


@pytest.mark.criterion(4, "chunk planner: budget met, loss monotone, k minimal")
def test_criterion_04_chunk_planner():
    with Budget(2):
        rng = np.random.default_rng(4)
        for _ in range(100):
            window = int(rng.integers(8, 600))
            overlap = int(rng.integers(0, window))
            lengths = [int(x) for x in rng.integers(0, 4000, size=rng.integers(1, 30))]
            if sum(lengths) == 0:
                lengths[0] = 1
            threshold = float(rng.choice([0.0, 0.05, 0.1, 0.25, 0.5]))
            k, loss = choose_k(lengths, window, overlap, threshold)
            assert loss <= threshold
            assert loss == pytest.approx(corpus_loss_scan(lengths, k, window, overlap), abs=1e-15)
            losses = [corpus_loss(lengths, j, window, overlap) for j in range(1, k + 3)]
            assert all(a >= b for a, b in zip(losses, losses[1:]))
            scan = next(j for j in range(1, 10_000) if corpus_loss_scan(lengths, j, window, overlap) <= threshold)
            assert k == scan
        plan = plan_chunks([600, 400], [600, 400], 512, 50, 0.10)
        assert plan.k_job == 1
        assert plan.realized_loss_job == pytest.approx(0.088)


@pytest.mark.criterion(5, "overlap reconstruction of the first min(L, capacity(k)) tokens")
def test_criterion_05_overlap_reconstruction():
    with Budget(2):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            window = int(rng.integers(2, 300))
            overlap = int(rng.integers(0, window))
            k = int(rng.integers(1, 6))
            length = int(rng.integers(0, 2000))
            tokens = tuple(f"t{i}" for i in range(length))
            parts = chunk(tokens, k, window, overlap)
            keep = min(length, capacity(k, window, overlap))
            assert unchunk(parts.chunks, overlap) == tokens[:keep]
            assert parts.dropped == length - keep


def _learn(seed):
    docs, pairs = separable_corpus(500, seed=seed)
    split = stratified_split(pairs, seed=seed, test_fraction=0.2, validation_fraction=0.2)
    assert len(split.train) + len(split.validation) == 400 and len(split.test) == 100
    lengths = [len(tokenize(d.text)) for d in docs.values()]
    plan = plan_chunks(lengths, lengths, 512, 50, 0.1)
    model = MatchModel.init(EncoderVariant.TRAINABLE_BAG, d=8, buckets=256, seed=seed)
    config = TrainConfig(learning_rate=0.1, batch_size=4, max_epochs=200, patience=20, seed=seed)
    result = train(split, plan, model, config, docs)
    _, counts = evaluate_pairs(result.model, FeatureCache(docs, plan, result.model.encoder), split.test)
    return metrics.confusion_stats(counts).accuracy, save_checkpoint(result.model), len(result.log)


@pytest.mark.criterion(6, "desk-scale learnability: held-out accuracy >= 0.95 within 200 epochs")
def test_criterion_06_learnability():
    with Budget(60):
        acc, ckpt, epochs = _learn(seed=0)
        assert epochs <= 200
        assert acc >= 0.95
        acc2, ckpt2, _ = _learn(seed=0)
        assert acc2 == acc and ckpt2 == ckpt


@pytest.mark.criterion(7, "ontology contracts: bilingual URIs, C++ < programming, Jaro-Winkler")
def test_criterion_07_ontology(graph):
    with Budget(5):
        checked = 0
        for concept in graph.concepts.values():
            en, fr = concept.preferred("en"), concept.preferred("fr")
            if en is None or fr is None:
                continue
            hit_en = graph.resolve_label(en, "en")[0]
            hit_fr = graph.resolve_label(fr, "fr")[0]
            assert hit_en == (concept.uri, 1.0)
            assert hit_fr == (concept.uri, 1.0)
            checked += 1
        assert checked >= 20
        assert graph.relate_skills("esco:skill/cpp", "esco:skill/computer-programming") == \
            SkillRelation(RelationKind.NARROWER_THAN, 1)
        rng = np.random.default_rng(7)
        alphabet = list("abcdeéxy")
        for _ in range(1000):
            a = "".join(rng.choice(alphabet, size=rng.integers(0, 9)))
            b = "".join(rng.choice(alphabet, size=rng.integers(0, 9)))
            assert jaro_winkler(a, b) == pytest.approx(jaro_winkler_reference(a, b), abs=1e-12)
        assert jaro_winkler("MARTHA", "MARHTA") == pytest.approx(0.9611, abs=5e-5)


LANG_WORDS = {"en": "English", "fr": "French", "de": "German"}
SKILLS = ["python", "java", "C++", "sql", "programming", "statistics"]


def _random_job(rng):
    parts = []
    for _ in range(rng.integers(0, 4)):
        kind = rng.integers(0, 3)
        if kind == 0:
            parts.append(f"{rng.integers(0, 8)} years of experience in {rng.choice(SKILLS)}.")
        elif kind == 1:
            parts.append(f"Fluent in {LANG_WORDS[rng.choice(list(LANG_WORDS))]}.")
        else:
            parts.append("Bachelor's degree in computer science.")
    return " ".join(parts) or "Friendly team."


def _random_profile(rng, cid):
    skills = {str(s): float(rng.integers(0, 10)) for s in rng.choice(SKILLS, size=rng.integers(0, 4), replace=False)}
    langs = frozenset(str(x) for x in rng.choice(list(LANG_WORDS), size=rng.integers(0, 3), replace=False))
    creds = ("bachelor's degree in computer science",) if rng.random() < 0.5 else ()
    return CandidateProfile(cid, skills, langs, creds)


@pytest.mark.criterion(8, "filter soundness: partition, no rejected candidate ranked, monotone")
def test_criterion_08_filter_soundness(graph):
    with Budget(5):
        rng = np.random.default_rng(8)
        model = MatchModel.init(EncoderVariant.FEATURE_HASH, d=8, seed=0)
        plan = ChunkPlan(64, 8, 1, 1, 0.1, 0.0, 0.0)
        for i in range(500):
            job = Document(f"j{i}", "en", _random_job(rng))
            reqs = parse_requirements(job, graph=graph)
            ids = [f"c{i}_{j}" for j in range(rng.integers(1, 6))]
            profiles = [_random_profile(rng, c) for c in ids]
            outcome = apply_filters(reqs, profiles, graph)
            passed, rejected = set(outcome.passed), set(outcome.rejected_ids)
            assert passed.isdisjoint(rejected) and passed | rejected == set(ids)
            assert len(outcome.passed) + len(outcome.rejected) == len(ids)
            docs = [Document(c, "en", f"candidate {c} python team") for c in ids]
            ranked = rank_candidates(job, docs, model, plan, outcome=outcome)
            assert {e.candidate_id for e in ranked} == passed
            extra = HardRequirement(RequirementKind.MIN_YEARS, (0, 1), skill=str(rng.choice(SKILLS)),
                                    years=float(rng.integers(0, 8)))
            more = apply_filters([*reqs, extra], profiles, graph)
            assert rejected <= set(more.rejected_ids)


def _manual_delta(state, job_id, cand_id, segment):
    job = state.documents[job_id]
    res = state.documents[cand_id]
    base = predict_pair(job, res, state.plan, state.model).p_match
    if segment.unit == "chars":
        a, b = segment.span
        occluded = Document(res.id, res.lang, res.text[:a] + " " + res.text[b:])
    else:
        toks = tokenize(res.text).tokens
        occluded = TokenSequence(toks[:segment.span[0]] + toks[segment.span[1]:])
    return base - predict_pair(job, occluded, state.plan, state.model).p_match


@pytest.mark.criterion(9, "explanations: bit-exact deltas, empty segment 0, min(k, passed) entries")
def test_criterion_09_explanations():
    with Budget(10):
        cands = make_candidates(6, seed=9)
        cands.append(resume_doc("c99", {"java": 1}, langs=("French",), seed=99))
        state = build_state(cands, k=3)
        passed = len(state.outcomes["J"].passed)
        assert passed >= 4
        reports = [recruiter_report("J", k, state) for k in (1, 3, 5, passed + 2)]
        for k, rep in zip((1, 3, 5, passed + 2), reports):
            assert len(rep.details["entries"]) == min(k, passed)
        reports += [candidate_report(c.id, "J", state) for c in cands]
        n_attr = 0
        for rep in reports:
            for ev in rep.evidence:
                if ev.source != "occlusion_attribution":
                    assert reproduce_evidence(ev, state) == ev.value
                    continue
                cid = ev.args["candidate_id"]
                segs = [a.segment for a in state.attributions("J", cid).attributions
                        if a.segment.label == ev.args["segment"]]
                assert ev.value == _manual_delta(state, "J", cid, segs[0])
                n_attr += 1
        assert n_attr > 0
        doc = cands[0]
        empty = Segment("resume", "empty", (5, 5), "chars")
        assert occlude(doc, empty) is doc
        with_empty = Document(doc.id, doc.lang, doc.text, {**doc.sections, "blank": (0, 0)})
        attrs = occlusion_attribution(state.model, state.documents["J"], with_empty, state.plan, roles=("resume",))
        blank = [a for a in attrs.attributions if a.segment.label == "blank"]
        assert blank[0].delta == 0.0


@pytest.mark.criterion(10, "lineage reaches the corpus; every stage replays; tampering detected")
def test_criterion_10_lineage_and_replay(tmp_path, monkeypatch):
    from matchforge.cli import State, main
    from matchforge.pipeline import REPLAY
    from matchforge.trace import ArtifactKind, Diverged, Reproduced, Store
    monkeypatch.delenv("MATCHFORGE_STORE", raising=False)
    with Budget(30):
        out = tmp_path / "out"
        for stage in ("ingest", "plan", "train", "rank", "evaluate", "explain"):
            assert main([stage, "--out", str(out)]) == 0
        state = State(out / "state.json")
        store = Store(out / "store")
        lineage = store.lineage(state.artifacts["reports"])
        assert state.artifacts["corpus"] in lineage
        assert state.artifacts["documents"] in lineage
        for kind in (ArtifactKind.CORPUS, ArtifactKind.ONTOLOGY, ArtifactKind.CHUNK_PLAN, ArtifactKind.CHECKPOINT):
            assert lineage.artifacts(kind)
        for stage, run_id in state.runs.items():
            assert store.verify_replay(run_id, REPLAY) == Reproduced(), stage
        ckpt = state.artifacts["checkpoint"]
        path = store.blob_path(ckpt)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0x01
        path.write_bytes(bytes(data))
        result = store.verify_replay(state.runs["train"], REPLAY)
        assert isinstance(result, Diverged) and ckpt in result.hashes
