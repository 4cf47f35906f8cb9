"""
Filtering, ranking and explaining one job
=========================================

Hard requirements are read from the job text, candidates who miss one are
rejected with a reason, the rest are ranked, and each stakeholder gets a
report whose evidence can be recomputed.
"""

# %%
from matchforge.corpus import Document
from matchforge.embed import EncoderVariant
from matchforge.errors import HiredNotRecommended
from matchforge.explain import (PipelineState, candidate_report, poster_report, recruiter_report,
                                reproduce_evidence)
from matchforge.filtering import apply_filters, extract_profile, parse_requirements
from matchforge.matchnet import MatchModel
from matchforge.ontology import load_bundled_graph
from matchforge.ranker import rank_candidates
from matchforge.textpipe import plan_chunks, tokenize

graph = load_bundled_graph()
print(graph.resolve_label("Développeur de logiciels", "fr")[:1])
print(graph.resolve_label("software develper", "en")[:1])
print(graph.relate_skills("esco:skill/cpp", "esco:skill/computer-programming"))

# %%
job = Document("J1", "en", "Software developer. 3 years of experience in programming. Fluent in English.")
resumes = [
    Document("ana", "en", "Summary: backend work.\n5 years of experience in C++. Languages: English, French."),
    Document("ben", "en", "Summary: scripting.\n4 years of experience in Python and 2 years of SQL.\n"
                          "Languages: English."),
    Document("cho", "en", "Summary: web.\n1 years of experience in JavaScript. Languages: English."),
    Document("dev", "en", "Summary: data.\n6 years of experience in Java. Languages: French."),
]
reqs = parse_requirements(job, graph=graph)
print([str(r) for r in reqs])

profiles = {r.id: extract_profile(r, graph=graph) for r in resumes}
outcome = apply_filters(reqs, list(profiles.values()), graph)
print("passed:", outcome.passed)
for rej in outcome.rejected:
    print("rejected:", rej.candidate_id, [f"{v.requirement}: {v.reason}" for v in rej.violations])

# %%
docs = {job.id: job, **{r.id: r for r in resumes}}
plan = plan_chunks([len(tokenize(job.text))], [len(tokenize(r.text)) for r in resumes], 64, 8, 0.1)
model = MatchModel.init(EncoderVariant.FEATURE_HASH, d=16, seed=1)
ranking = rank_candidates(job, resumes, model, plan, outcome=outcome)
for e in ranking:
    print(e.rank, e.candidate_id, round(e.score, 4))

# %%
# These resumes have no section map, so attributions occlude 8-token windows.
state = PipelineState(docs, graph, plan, model, {"J1": reqs}, {"J1": outcome}, {"J1": ranking},
                      hired={"J1": ranking[-1].candidate_id}, profiles=profiles, k=2, window=8)
print(recruiter_report("J1", 2, state).render())
print(candidate_report("dev", "J1", state).render())
print(candidate_report(ranking[-1].candidate_id, "J1", state).render())

# The hired candidate may sit outside the shortlist, in which case the
# poster report refuses to compare.
try:
    print(poster_report("J1", state.hired["J1"], state).render())
except HiredNotRecommended as exc:
    print(type(exc).__name__, exc)

# %%
# Every evidence item names the call that produced it.
rep = recruiter_report("J1", 2, state)
print(all(reproduce_evidence(e, state) == e.value for e in rep.evidence))
