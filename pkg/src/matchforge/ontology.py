"""Multilingual concept graph: loading, label resolution and skill relations.

Ontology file format (UTF-8, one concept per line, tab separated)::

    uri <TAB> kind <TAB> field <TAB> field ...

``kind`` is ``occupation``, ``skill`` or ``qualification``.  Each field is
``key=value``:

* ``<lang>=preferred|alt1|alt2`` labels in one language,
* ``hidden@<lang>=h1|h2`` hidden (search-only) labels,
* ``desc@<lang>=text`` description,
* ``broader=uri1,uri2`` parents in the hierarchy,
* ``essential=uri,...`` / ``optional=uri,...`` skill links of an occupation.

Blank lines and lines starting with ``#`` are ignored.
"""
from __future__ import annotations

import enum
import os
import unicodedata
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional

from .errors import (CycleDetected, DanglingUri, DuplicateUri, OntologyError,
                     UnknownLanguage, UnknownUri)
from .textpipe import tokenize

DEFAULT_FUZZY_THRESHOLD = 0.85


class ConceptKind(enum.Enum):
    OCCUPATION = "occupation"
    SKILL = "skill"
    QUALIFICATION = "qualification"


@dataclass(frozen=True)
class LabelSet:
    preferred: str
    alternatives: tuple[str, ...] = ()
    hidden: tuple[str, ...] = ()

    def all(self) -> tuple[str, ...]:
        return (self.preferred, *self.alternatives, *self.hidden)


@dataclass(frozen=True)
class Concept:
    uri: str
    kind: ConceptKind
    labels: dict[str, LabelSet] = field(default_factory=dict)
    description: dict[str, str] = field(default_factory=dict)
    broader: tuple[str, ...] = ()
    essential_skills: tuple[str, ...] = ()
    optional_skills: tuple[str, ...] = ()

    def preferred(self, lang: str) -> Optional[str]:
        ls = self.labels.get(lang)
        return ls.preferred if ls else None


class RelationKind(enum.Enum):
    IDENTICAL = "Identical"
    NARROWER_THAN = "NarrowerThan"
    BROADER_THAN = "BroaderThan"
    SHARED_ANCESTOR = "SharedAncestor"
    UNRELATED = "Unrelated"


@dataclass(frozen=True)
class SkillRelation:
    kind: RelationKind
    depth: Optional[int] = None

    def __post_init__(self):
        needs_depth = self.kind in (RelationKind.NARROWER_THAN, RelationKind.BROADER_THAN,
                                    RelationKind.SHARED_ANCESTOR)
        if needs_depth and (self.depth is None or self.depth < 1):
            raise ValueError(f"{self.kind.value} needs depth >= 1")
        if not needs_depth and self.depth is not None:
            raise ValueError(f"{self.kind.value} takes no depth")

    def mirror(self) -> "SkillRelation":
        flip = {RelationKind.NARROWER_THAN: RelationKind.BROADER_THAN,
                RelationKind.BROADER_THAN: RelationKind.NARROWER_THAN}
        return SkillRelation(flip.get(self.kind, self.kind), self.depth)

    def __str__(self) -> str:
        return self.kind.value if self.depth is None else f"{self.kind.value}({self.depth})"


def normalize_label(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


def jaro(a: str, b: str) -> float:
    if a == b:
        return 1.0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0.0
    window = max(max(la, lb) // 2 - 1, 0)
    matched_b = [False] * lb
    a_matches = []
    for i, ch in enumerate(a):
        lo, hi = max(0, i - window), min(lb, i + window + 1)
        for j in range(lo, hi):
            if not matched_b[j] and b[j] == ch:
                matched_b[j] = True
                a_matches.append(ch)
                break
    m = len(a_matches)
    if m == 0:
        return 0.0
    b_matches = [b[j] for j in range(lb) if matched_b[j]]
    transpositions = sum(x != y for x, y in zip(a_matches, b_matches)) / 2
    return (m / la + m / lb + (m - transpositions) / m) / 3


def jaro_winkler(a: str, b: str, prefix_scale: float = 0.1, max_prefix: int = 4) -> float:
    """Jaro similarity boosted by the length of the common prefix (capped at 4)."""
    j = jaro(a, b)
    prefix = 0
    for x, y in zip(a[:max_prefix], b[:max_prefix]):
        if x != y:
            break
        prefix += 1
    return j + prefix * prefix_scale * (1 - j)


_KIND_NAMES = {k.value: k for k in ConceptKind}


def _split_list(value: str, sep: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(sep) if v.strip())


def parse_line(line: str, lineno: int = 0) -> Concept:
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) < 2:
        raise OntologyError(f"line {lineno}: expected 'uri<TAB>kind<TAB>fields...'")
    uri, kind_name = parts[0].strip(), parts[1].strip().lower()
    if not uri:
        raise OntologyError(f"line {lineno}: empty uri")
    if kind_name not in _KIND_NAMES:
        raise OntologyError(f"line {lineno}: unknown concept kind {kind_name!r}")
    prefs: dict[str, tuple[str, ...]] = {}
    hidden: dict[str, tuple[str, ...]] = {}
    desc: dict[str, str] = {}
    links: dict[str, tuple[str, ...]] = {"broader": (), "essential": (), "optional": ()}
    for raw in parts[2:]:
        if not raw.strip():
            continue
        key, sep, value = raw.partition("=")
        key = key.strip()
        if not sep or not key:
            raise OntologyError(f"line {lineno}: field {raw!r} is not key=value")
        if key in links:
            links[key] = _split_list(value, ",")
        elif key.startswith("hidden@"):
            hidden[key[7:]] = _split_list(value, "|")
        elif key.startswith("desc@"):
            desc[key[5:]] = value.strip()
        else:
            names = _split_list(value, "|")
            if not names:
                raise OntologyError(f"line {lineno}: no labels for language {key!r}")
            prefs[key] = names
    labels = {}
    for lang in sorted(set(prefs) | set(hidden)):
        if lang not in prefs:
            raise OntologyError(f"line {lineno}: hidden labels for {lang!r} without a preferred label")
        names = prefs[lang]
        labels[lang] = LabelSet(names[0], names[1:], hidden.get(lang, ()))
    return Concept(uri, _KIND_NAMES[kind_name], labels, desc, links["broader"],
                   links["essential"], links["optional"])


class SkillGraph:
    """Immutable concept DAG with per-language label indexes."""

    def __init__(self, concepts: Iterable[Concept]):
        self.concepts: dict[str, Concept] = {}
        for c in concepts:
            if c.uri in self.concepts:
                raise DuplicateUri(c.uri)
            self.concepts[c.uri] = c
        self.narrower: dict[str, list[str]] = {u: [] for u in self.concepts}
        for c in self.concepts.values():
            for target in (*c.broader, *c.essential_skills, *c.optional_skills):
                if target not in self.concepts:
                    raise DanglingUri(f"{c.uri} -> {target}")
            for target in (*c.essential_skills, *c.optional_skills):
                if self.concepts[target].kind is not ConceptKind.SKILL:
                    raise OntologyError(f"{c.uri}: skill link {target} is not a skill")
            if (c.essential_skills or c.optional_skills) and c.kind is not ConceptKind.OCCUPATION:
                raise OntologyError(f"{c.uri}: only occupations carry skill links")
            for parent in c.broader:
                self.narrower[parent].append(c.uri)
        for kids in self.narrower.values():
            kids.sort()
        self._check_acyclic()
        self._index: dict[str, dict[str, set[str]]] = {}
        for c in self.concepts.values():
            for lang, ls in c.labels.items():
                idx = self._index.setdefault(lang, {})
                for label in ls.all():
                    idx.setdefault(normalize_label(label), set()).add(c.uri)

    def _check_acyclic(self) -> None:
        white, grey, black = 0, 1, 2
        color = dict.fromkeys(self.concepts, white)
        for root in sorted(self.concepts):
            if color[root] != white:
                continue
            stack = [(root, iter(self.concepts[root].broader))]
            color[root] = grey
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    color[node] = black
                    stack.pop()
                elif color[nxt] == grey:
                    raise CycleDetected(f"broader cycle through {nxt}")
                elif color[nxt] == white:
                    color[nxt] = grey
                    stack.append((nxt, iter(self.concepts[nxt].broader)))

    def __len__(self) -> int:
        return len(self.concepts)

    def __contains__(self, uri: str) -> bool:
        return uri in self.concepts

    def __getitem__(self, uri: str) -> Concept:
        try:
            return self.concepts[uri]
        except KeyError:
            raise UnknownUri(uri) from None

    @property
    def languages(self) -> list[str]:
        return sorted(self._index)

    def edges(self) -> list[tuple[str, str]]:
        """(narrower, broader) pairs."""
        return sorted((c.uri, p) for c in self.concepts.values() for p in c.broader)

    def resolve_label(self, text: str, lang: str,
                      threshold: float = DEFAULT_FUZZY_THRESHOLD) -> list[tuple[str, float]]:
        """Concepts whose ``lang`` labels match ``text``, best first.

        Exact (case- and whitespace-insensitive) label hits score 1.0; other
        labels are scored with Jaro-Winkler and kept when ``>= threshold``.
        """
        if lang not in self._index:
            raise UnknownLanguage(lang)
        idx = self._index[lang]
        query = normalize_label(text)
        best: dict[str, float] = {}
        for label, uris in idx.items():
            score = 1.0 if label == query else jaro_winkler(query, label)
            if score < threshold:
                continue
            for uri in uris:
                if score > best.get(uri, -1.0):
                    best[uri] = score
        return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))

    def lookup(self, text: str, lang: Optional[str] = None,
               threshold: float = DEFAULT_FUZZY_THRESHOLD) -> Optional[str]:
        """Top uri for ``text`` in ``lang`` (or any language), else None."""
        langs = [lang] if lang in self._index else self.languages
        hits = []
        for lg in langs:
            hits.extend(self.resolve_label(text, lg, threshold))
        if not hits:
            return None
        return min(hits, key=lambda kv: (-kv[1], kv[0]))[0]

    def ancestors(self, uri: str) -> dict[str, int]:
        """Every ancestor (and ``uri`` itself at 0) with its minimal broader-edge distance."""
        self[uri]
        dist = {uri: 0}
        queue = deque([uri])
        while queue:
            u = queue.popleft()
            for p in self.concepts[u].broader:
                if p not in dist:
                    dist[p] = dist[u] + 1
                    queue.append(p)
        return dist

    def relate_skills(self, a: str, b: str) -> SkillRelation:
        """How ``a`` sits relative to ``b`` in the broader hierarchy."""
        up_a = self.ancestors(a)
        up_b = self.ancestors(b)
        if a == b:
            return SkillRelation(RelationKind.IDENTICAL)
        if b in up_a:
            return SkillRelation(RelationKind.NARROWER_THAN, up_a[b])
        if a in up_b:
            return SkillRelation(RelationKind.BROADER_THAN, up_b[a])
        common = set(up_a) & set(up_b)
        if not common:
            return SkillRelation(RelationKind.UNRELATED)
        return SkillRelation(RelationKind.SHARED_ANCESTOR, min(up_a[c] + up_b[c] for c in common))

    def path_length(self, a: str, b: str) -> Optional[int]:
        """Shortest undirected hierarchy path, None when disconnected."""
        self[a]
        self[b]
        if a == b:
            return 0
        seen = {a: 0}
        queue = deque([a])
        while queue:
            u = queue.popleft()
            for v in (*self.concepts[u].broader, *self.narrower[u]):
                if v not in seen:
                    seen[v] = seen[u] + 1
                    if v == b:
                        return seen[v]
                    queue.append(v)
        return None

    def path_similarity(self, a: str, b: str) -> float:
        length = self.path_length(a, b)
        return 0.0 if length is None else 1.0 / (1.0 + length)

    def satisfies(self, offered: str, required: str) -> bool:
        """Offered skill covers the requirement: identical or narrower."""
        rel = self.relate_skills(offered, required)
        return rel.kind in (RelationKind.IDENTICAL, RelationKind.NARROWER_THAN)

    def extract_concepts(self, text: str, kinds: Iterable[ConceptKind] = (ConceptKind.SKILL,),
                         langs: Optional[Iterable[str]] = None) -> list[str]:
        """Uris whose labels occur as token n-grams in ``text``, sorted."""
        kinds = set(kinds)
        tokens = tokenize(text).tokens
        wanted: dict[tuple[str, ...], set[str]] = {}
        for lang in (self.languages if langs is None else langs):
            for label, uris in self._index.get(lang, {}).items():
                keep = {u for u in uris if self.concepts[u].kind in kinds}
                if keep:
                    wanted.setdefault(tokenize(label).tokens, set()).update(keep)
        found: set[str] = set()
        for n in sorted({len(k) for k in wanted if k}):
            for i in range(len(tokens) - n + 1):
                found |= wanted.get(tokens[i:i + n], set())
        return sorted(found)


def parse_graph(text: str) -> SkillGraph:
    concepts = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        concepts.append(parse_line(line, lineno))
    return SkillGraph(concepts)


def load_graph(path: "str | os.PathLike[str]") -> SkillGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def bundled_graph_text() -> str:
    return resources.files("matchforge.data").joinpath("esco_mini.tsv").read_text(encoding="utf-8")


def load_bundled_graph() -> SkillGraph:
    """The small bilingual (en/fr) fixture shipped with the package."""
    return parse_graph(bundled_graph_text())


def dump_graph(graph: SkillGraph) -> str:
    lines = []
    for uri in sorted(graph.concepts):
        c = graph.concepts[uri]
        fields = [c.uri, c.kind.value]
        for lang, ls in sorted(c.labels.items()):
            fields.append(f"{lang}=" + "|".join((ls.preferred, *ls.alternatives)))
            if ls.hidden:
                fields.append(f"hidden@{lang}=" + "|".join(ls.hidden))
        for lang, d in sorted(c.description.items()):
            fields.append(f"desc@{lang}={d}")
        for key, vals in (("broader", c.broader), ("essential", c.essential_skills),
                          ("optional", c.optional_skills)):
            if vals:
                fields.append(f"{key}=" + ",".join(vals))
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"

