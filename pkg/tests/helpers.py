import numpy as np

from matchforge.corpus import Document
from matchforge.embed import EncoderVariant
from matchforge.explain import PipelineState
from matchforge.filtering import PatternSet, apply_filters, extract_profile, parse_requirements
from matchforge.matchnet import MatchModel
from matchforge.ontology import load_bundled_graph
from matchforge.ranker import rank_candidates
from matchforge.textpipe import plan_chunks, tokenize

FILL = "team project client meeting report schedule support quality process customer".split()


def resume_doc(cid, skills, langs=("English",), filler_words=12, seed=0):
    rng = np.random.default_rng(seed)
    parts = {
        "summary": "Summary: " + " ".join(rng.choice(FILL, size=filler_words)) + ".",
        "skills": "Skills: " + ", ".join(skills) + ".",
        "experience": "Experience: " + " ".join(f"{y} years of experience in {s}." for s, y in skills.items()),
        "languages": "Languages: " + ", ".join(langs) + ".",
    }
    text, sections = "", {}
    for name, body in parts.items():
        if text:
            text += "\n"
        sections[name] = (len(text), len(text) + len(body))
        text += body
    return Document(cid, "en", text, sections)


def build_state(candidates, job_text="We need 2 years of experience in python. Fluent in English.",
                k=3, d=16, seed=0, hired=None, window=64, overlap=8):
    """Filter, rank and wrap candidate documents for the job ``J``."""
    graph = load_bundled_graph()
    job = Document("J", "en", job_text)
    docs = {"J": job, **{c.id: c for c in candidates}}
    plan = plan_chunks([len(tokenize(job.text))], [len(tokenize(c.text)) for c in candidates],
                       window, overlap, 0.1)
    model = MatchModel.init(EncoderVariant.FEATURE_HASH, d=d, seed=seed)
    patterns = PatternSet.default()
    reqs = parse_requirements(job, patterns, graph)
    profiles = {c.id: extract_profile(c, patterns, graph) for c in candidates}
    outcome = apply_filters(reqs, list(profiles.values()), graph)
    ranking = rank_candidates(job, candidates, model, plan, outcome=outcome)
    return PipelineState(docs, graph, plan, model, {"J": reqs}, {"J": outcome}, {"J": ranking},
                         {} if hired is None else {"J": hired}, profiles, k)


def make_candidates(n, seed=0):
    rng = np.random.default_rng(seed)
    side = ["agile", "statistics", "php", "java", "sql", "machine learning", "C++"]
    out = []
    for i in range(n):
        skills = {"python": int(rng.integers(2, 9))}
        for s in rng.choice(side, size=2, replace=False):
            skills[str(s)] = int(rng.integers(1, 6))
        out.append(resume_doc(f"c{i:02d}", skills, seed=seed * 100 + i))
    return out
