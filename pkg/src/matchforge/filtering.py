"""Hard-requirement extraction and pre-ranking candidate elimination.

Patterns file format: one pattern per line, ``name <TAB> kind <TAB> regex``.
``kind`` is one of ``min_years`` (named groups ``years`` and ``skill``),
``language`` (group ``lang``) or ``credential`` (group ``credential``).
Expressions are matched case-insensitively.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InvalidPattern, OntologyError
from .ontology import SkillGraph, normalize_label

NOT_STATED = "NotStated"

LANGUAGE_CODES = {
    "english": "en", "anglais": "en",
    "french": "fr", "français": "fr", "francais": "fr",
    "spanish": "es", "espagnol": "es",
    "german": "de", "allemand": "de",
}


class RequirementKind(enum.Enum):
    MIN_YEARS = "MinYearsExperience"
    LANGUAGE = "RequiredLanguage"
    CREDENTIAL = "RequiredCredential"


_KINDS = {"min_years": RequirementKind.MIN_YEARS, "language": RequirementKind.LANGUAGE,
          "credential": RequirementKind.CREDENTIAL}
_GROUPS = {RequirementKind.MIN_YEARS: ("years", "skill"), RequirementKind.LANGUAGE: ("lang",),
           RequirementKind.CREDENTIAL: ("credential",)}


@dataclass(frozen=True)
class HardRequirement:
    kind: RequirementKind
    span: tuple[int, int]
    skill: Optional[str] = None
    years: Optional[float] = None
    language: Optional[str] = None
    credential: Optional[str] = None
    pattern: str = ""

    def __post_init__(self):
        if self.years is not None and self.years < 0:
            raise ValueError("years must be >= 0")
        if self.span[0] > self.span[1]:
            raise ValueError("invalid span")

    @property
    def value_key(self) -> tuple:
        return (self.kind, self.skill, self.years, self.language, self.credential)

    def __str__(self) -> str:
        if self.kind is RequirementKind.MIN_YEARS:
            return f"MinYearsExperience({self.skill}, {self.years:g})"
        if self.kind is RequirementKind.LANGUAGE:
            return f"RequiredLanguage({self.language})"
        return f"RequiredCredential({self.credential})"

    def to_record(self) -> dict:
        return {"kind": self.kind.value, "span": list(self.span), "skill": self.skill,
                "years": self.years, "language": self.language,
                "credential": self.credential, "pattern": self.pattern}

    @classmethod
    def from_record(cls, rec: Mapping) -> "HardRequirement":
        return cls(RequirementKind(rec["kind"]), tuple(rec["span"]), rec.get("skill"),
                   rec.get("years"), rec.get("language"), rec.get("credential"),
                   rec.get("pattern", ""))


@dataclass(frozen=True)
class Pattern:
    name: str
    kind: RequirementKind
    regex: re.Pattern


@dataclass(frozen=True)
class PatternSet:
    patterns: tuple[Pattern, ...]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str]]) -> "PatternSet":
        out = []
        for name, kind_name, expression in rows:
            kind = _KINDS.get(kind_name.strip())
            if kind is None:
                raise InvalidPattern(f"{name}: unknown kind {kind_name!r}")
            try:
                rx = re.compile(expression, re.IGNORECASE)
            except re.error as exc:
                raise InvalidPattern(f"{name}: {exc}") from None
            missing = [g for g in _GROUPS[kind] if g not in rx.groupindex]
            if missing:
                raise InvalidPattern(f"{name}: missing named group(s) {missing}")
            out.append(Pattern(name, kind, rx))
        return cls(tuple(out))

    @classmethod
    def parse(cls, text: str) -> "PatternSet":
        rows = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InvalidPattern(f"patterns line {lineno}: expected 'name<TAB>kind<TAB>expression'")
            rows.append((parts[0].strip(), parts[1].strip(), parts[2]))
        return cls.from_rows(rows)

    @classmethod
    def default(cls) -> "PatternSet":
        return cls.parse(resources.files("matchforge.data").joinpath("patterns.tsv")
                         .read_text(encoding="utf-8"))

    def of_kind(self, kind: RequirementKind) -> list[Pattern]:
        return [p for p in self.patterns if p.kind is kind]


def _clean_term(term: str) -> str:
    return normalize_label(term).rstrip(".,;:!?")


def _skill_term(match: re.Match, graph: Optional[SkillGraph]) -> tuple[str, tuple[int, int]]:
    """Skill text and span; the longest ontology label among the captured words wins."""
    start = match.start("skill")
    words = list(re.finditer(r"\S+", match.group("skill")))
    if graph is not None:
        for n in range(len(words), 0, -1):
            text = match.group("skill")[:words[n - 1].end()]
            term = _clean_term(text)
            if graph.lookup(term, threshold=1.0) is not None:
                return term, (start, start + len(text.rstrip(".,;:!?")))
    first = words[0].group(0).rstrip(".,;:!?") or words[0].group(0)
    return _clean_term(first), (start, start + len(first))


def _years(text: str) -> float:
    return float(text.replace(",", "."))


def _matches(text: str, patterns: PatternSet, graph: Optional[SkillGraph]) -> list[HardRequirement]:
    found = []
    for pat in patterns.patterns:
        if pat.kind is RequirementKind.MIN_YEARS:
            # the skill group is greedy, so resume after the resolved term
            # rather than the match end or "5 years of X and 2 years of Y" loses Y
            pos = 0
            while (m := pat.regex.search(text, pos)) is not None:
                skill, (_, end) = _skill_term(m, graph)
                found.append(HardRequirement(pat.kind, (m.start(), end), skill=skill,
                                             years=_years(m.group("years")), pattern=pat.name))
                pos = max(end, m.start() + 1)
            continue
        for m in pat.regex.finditer(text):
            if pat.kind is RequirementKind.LANGUAGE:
                word = normalize_label(m.group("lang"))
                found.append(HardRequirement(pat.kind, m.span(), language=LANGUAGE_CODES.get(word, word),
                                             pattern=pat.name))
            else:
                found.append(HardRequirement(pat.kind, m.span(),
                                             credential=_clean_term(m.group("credential")),
                                             pattern=pat.name))
    return found


def parse_requirements(jd, patterns: Optional[PatternSet] = None,
                       graph: Optional[SkillGraph] = None) -> list[HardRequirement]:
    """Every pattern hit in a job description, in text order.

    Repeated hits for the same requirement keep the first span.
    """
    patterns = PatternSet.default() if patterns is None else patterns
    text = jd if isinstance(jd, str) else jd.text
    out = []
    seen = set()
    for req in sorted(_matches(text, patterns, graph), key=lambda r: (r.span, r.pattern)):
        if req.value_key not in seen:
            seen.add(req.value_key)
            out.append(req)
    return out


@dataclass(frozen=True)
class CandidateProfile:
    candidate_id: str
    skills: dict[str, float] = field(default_factory=dict)
    languages: frozenset[str] = frozenset()
    credentials: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {"candidate_id": self.candidate_id, "skills": dict(sorted(self.skills.items())),
                "languages": sorted(self.languages), "credentials": list(self.credentials)}

    @classmethod
    def from_record(cls, rec: Mapping) -> "CandidateProfile":
        return cls(rec["candidate_id"], dict(rec.get("skills", {})),
                   frozenset(rec.get("languages", ())), tuple(rec.get("credentials", ())))


_LANG_LIST_RE = re.compile(r"(?:languages|langues)\s*:\s*(?P<list>[^\n.;]+)", re.IGNORECASE)


def extract_profile(resume, patterns: Optional[PatternSet] = None,
                    graph: Optional[SkillGraph] = None) -> CandidateProfile:
    """Profile of a resume: the requirement patterns run over its text.

    A ``Languages: French, English`` line also lists spoken languages.
    """
    text = resume.text
    skills: dict[str, float] = {}
    languages = set()
    credentials = []
    for req in parse_requirements(text, patterns, graph):
        if req.kind is RequirementKind.MIN_YEARS:
            skills[req.skill] = max(skills.get(req.skill, 0.0), req.years)
        elif req.kind is RequirementKind.LANGUAGE:
            languages.add(req.language)
        elif req.credential not in credentials:
            credentials.append(req.credential)
    for m in _LANG_LIST_RE.finditer(text):
        for word in re.split(r"[,/]|\band\b|\bet\b", m.group("list")):
            code = LANGUAGE_CODES.get(normalize_label(word))
            if code:
                languages.add(code)
    return CandidateProfile(resume.id, skills, frozenset(languages), tuple(credentials))


@dataclass(frozen=True)
class Violation:
    requirement: HardRequirement
    reason: str


@dataclass(frozen=True)
class Rejection:
    candidate_id: str
    violations: tuple[Violation, ...]

    @property
    def requirement(self) -> HardRequirement:
        return self.violations[0].requirement

    @property
    def reason(self) -> str:
        return self.violations[0].reason


@dataclass(frozen=True)
class FilterOutcome:
    passed: tuple[str, ...]
    rejected: tuple[Rejection, ...]

    @property
    def rejected_ids(self) -> tuple[str, ...]:
        return tuple(r.candidate_id for r in self.rejected)

    def rejection(self, candidate_id: str) -> Optional[Rejection]:
        for r in self.rejected:
            if r.candidate_id == candidate_id:
                return r
        return None

    def to_record(self) -> dict:
        return {
            "passed": list(self.passed),
            "rejected": [{"candidate_id": r.candidate_id,
                          "violations": [{"requirement": v.requirement.to_record(), "reason": v.reason}
                                         for v in r.violations]} for r in self.rejected],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "FilterOutcome":
        rejected = tuple(Rejection(r["candidate_id"], tuple(
            Violation(HardRequirement.from_record(v["requirement"]), v["reason"])
            for v in r["violations"])) for r in rec["rejected"])
        return cls(tuple(rec["passed"]), rejected)


class SkillMatcher:
    """Decides whether an offered skill covers a required one.

    Equal normalized names always match.  With a graph, both names are
    resolved to concepts and the offered one must be identical to or narrower
    than the required one.
    """

    def __init__(self, graph: Optional[SkillGraph] = None):
        self.graph = graph
        self._uris: dict[str, Optional[str]] = {}

    def uri(self, name: str) -> Optional[str]:
        if self.graph is None:
            return None
        if name not in self._uris:
            self._uris[name] = self.graph.lookup(name)
        return self._uris[name]

    def covers(self, offered: str, required: str) -> bool:
        if normalize_label(offered) == normalize_label(required):
            return True
        u_off, u_req = self.uri(offered), self.uri(required)
        if u_off is None or u_req is None:
            return False
        try:
            return self.graph.satisfies(u_off, u_req)
        except OntologyError:
            return False


def _fmt(x: float) -> str:
    return f"{x:g}"


def check_requirement(req: HardRequirement, profile: CandidateProfile,
                      matcher: SkillMatcher) -> Optional[str]:
    """Reason the requirement is unmet, or None when it is met."""
    if req.kind is RequirementKind.MIN_YEARS:
        observed = [y for s, y in profile.skills.items() if matcher.covers(s, req.skill)]
        if not observed:
            return NOT_STATED
        best = max(observed)
        return None if best >= req.years else f"{_fmt(best)} < {_fmt(req.years)}"
    if req.kind is RequirementKind.LANGUAGE:
        return None if req.language in profile.languages else NOT_STATED
    want = normalize_label(req.credential)
    for have in profile.credentials:
        h = normalize_label(have)
        if want in h or h in want:
            return None
    return NOT_STATED


def apply_filters(requirements: Sequence[HardRequirement], profiles: Sequence[CandidateProfile],
                  graph: Optional[SkillGraph] = None) -> FilterOutcome:
    """Reject every candidate with at least one unmet requirement."""
    matcher = SkillMatcher(graph)
    passed = []
    rejected = []
    for prof in profiles:
        violations = []
        for req in requirements:
            reason = check_requirement(req, prof, matcher)
            if reason is not None:
                violations.append(Violation(req, reason))
        if violations:
            rejected.append(Rejection(prof.candidate_id, tuple(violations)))
        else:
            passed.append(prof.candidate_id)
    return FilterOutcome(tuple(passed), tuple(rejected))
