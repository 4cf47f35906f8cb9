"""Synthetic corpora for tests, demos and the bundled pipeline fixture."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .corpus import Document, Label, LabeledPair

SKILLS = ("python", "java", "sql", "docker", "kotlin", "scala", "rust", "haskell")
# one embedding row per skill has to be learned; four keeps each well sampled
CORE_SKILLS = SKILLS[:4]

FILLER = (
    "team", "project", "client", "office", "meeting", "report", "schedule", "support",
    "quality", "process", "customer", "service", "growth", "planning", "budget", "travel",
    "friendly", "motivated", "flexible", "dynamic", "reliable", "organized", "creative",
    "communication", "leadership", "training", "documentation", "review", "delivery",
    "coordination", "operations", "strategy", "analysis", "marketing", "sales", "finance",
)


def _words(rng: np.random.Generator, vocab: Sequence[str], n: int) -> list[str]:
    return [vocab[i] for i in rng.integers(0, len(vocab), size=n)]


def separable_corpus(n_pairs: int = 500, n_jobs: int = 25, seed: int = 0,
                     match_fraction: float = 0.5, doc_words: tuple[int, int] = (10, 20),
                     skills: Sequence[str] = CORE_SKILLS, filler: Sequence[str] = FILLER
                     ) -> tuple[dict[str, Document], list[LabeledPair]]:
    """Pairs labelled by whether the resume mentions the job's skill token.

    Every job names one skill.  Matching resumes contain that skill; the
    others contain filler words only, so the presence of any skill token in
    the resume separates the classes.
    """
    rng = np.random.default_rng(seed)
    docs: dict[str, Document] = {}
    job_skill = {}
    for j in range(n_jobs):
        jid = f"job{j:03d}"
        skill = skills[j % len(skills)]
        words = _words(rng, filler, int(rng.integers(*doc_words)))
        words.insert(int(rng.integers(0, len(words) + 1)), skill)
        docs[jid] = Document(jid, "en", " ".join(words))
        job_skill[jid] = skill
    pairs = []
    n_match = int(round(match_fraction * n_pairs))
    labels = np.array([True] * n_match + [False] * (n_pairs - n_match))
    rng.shuffle(labels)
    for i, is_match in enumerate(labels):
        jid = f"job{int(rng.integers(0, n_jobs)):03d}"
        cid = f"cand{i:04d}"
        words = _words(rng, filler, int(rng.integers(*doc_words)))
        if is_match:
            words.insert(int(rng.integers(0, len(words) + 1)), job_skill[jid])
        docs[cid] = Document(cid, "en", " ".join(words))
        status = "Accepted Jobs Skills" if is_match else "Not retained - Physical interview"
        pairs.append(LabeledPair(jid, cid, status, Label.MATCH if is_match else Label.UNMATCH))
    return docs, pairs


# --- pipeline fixture --------------------------------------------------------

FIXTURE_SKILLS = ("python", "java", "sql", "javascript")
SIDE_SKILLS = ("agile", "statistics", "php", "machine learning", "C++")
OCCUPATIONS = {"python": "data scientist", "java": "software developer",
               "sql": "software engineer", "javascript": "web developer"}
SENTENCE_WORDS = FILLER + ("the", "and", "with", "for", "our", "a", "in", "to")


def _sentence(rng: np.random.Generator, n: int) -> str:
    words = _words(rng, SENTENCE_WORDS, n)
    return " ".join(words).capitalize() + "."


def _resume(rng: np.random.Generator, cid: str, skills: dict[str, int],
            languages: Sequence[str]) -> Document:
    parts = {}
    parts["summary"] = "Summary: " + _sentence(rng, 14) + " " + _sentence(rng, 10)
    parts["skills"] = "Skills: " + ", ".join(skills) + "."
    parts["experience"] = "Experience: " + " ".join(
        f"{y} years of experience in {s}." for s, y in skills.items()) + " " + _sentence(rng, 16)
    parts["languages"] = "Languages: " + ", ".join(languages) + "."
    text = ""
    sections = {}
    for name, body in parts.items():
        if text:
            text += "\n"
        sections[name] = (len(text), len(text) + len(body))
        text += body
    return Document(cid, "en", text, sections)


def pipeline_fixture(n_jobs: int = 8, per_job: int = 60, seed: int = 7
                     ) -> tuple[dict[str, Document], list[tuple[str, str, str]]]:
    """Raw documents and status rows for the end-to-end pipeline.

    Each job asks for a minimum number of years in one main skill; about half
    of its applicants list that skill, and those are the accepted ones.  The
    rest list side skills only.  One
    accepted applicant per job is marked hired.  The raw data also carries the
    defects the ingest stage removes: an unlabeled status, a duplicated job
    text, a too-short resume, a repeated pair and some control characters.
    """
    rng = np.random.default_rng(seed)
    docs: dict[str, Document] = {}
    rows: list[tuple[str, str, str]] = []
    for j in range(n_jobs):
        jid = f"job{j:02d}"
        main = FIXTURE_SKILLS[j % len(FIXTURE_SKILLS)]
        years = int(rng.integers(1, 4))
        text = (f"We are hiring a {OCCUPATIONS[main]}. " + _sentence(rng, 12) +
                f" Requirements: {years}+ years of experience in {main}.")
        if j % 3 == 0:
            text += " Fluent in English."
        text += " " + _sentence(rng, 10)
        docs[jid] = Document(jid, "en", text)
        hired = False
        for c in range(per_job):
            cid = f"{jid}-cand{c:02d}"
            is_match = bool(rng.random() < 0.5)
            pool = list(SIDE_SKILLS)
            picks = [pool[i] for i in rng.choice(len(pool), size=2, replace=False)]
            skills = {}
            if is_match:
                skills[main] = int(rng.integers(years - 1 if years > 1 else 1, years + 4))
            for s in picks:
                skills[s] = int(rng.integers(1, 8))
            langs = ["English", "French"] if rng.random() < 0.85 else ["French"]
            docs[cid] = _resume(rng, cid, skills, langs)
            if is_match and not hired and skills[main] >= years:
                status, hired = "Hired", True
            elif is_match:
                status = "Accepted Jobs Skills"
            else:
                status = "Not retained - Physical interview" if c % 2 else "Candidate refused"
            rows.append((jid, cid, status))
    # defects for the ingest stage to clean up
    docs["job99"] = Document("job99", "en", docs["job00"].text + "  ")
    rows.append(("job99", "job00-cand00", rows[0][2]))
    rows.append(rows[1])
    rows.append(("job01", "job00-cand05", "Interested candidate"))
    docs["short01"] = Document("short01", "en", "Python developer, 2 years.")
    rows.append(("job01", "short01", "Accepted Jobs Skills"))
    d = docs["job02"]
    docs["job02"] = Document(d.id, d.lang, d.text.replace("hiring", "hir\u0000ing", 1))
    return docs, rows
