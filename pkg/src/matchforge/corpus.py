"""Ingestion, cleaning, labeling, deduplication and stratified splitting.

File formats:

* documents: JSON lines ``{"id", "lang", "text", "sections"?}`` where
  ``sections`` maps a section name to a ``[start, end)`` character span,
* pairs: tab-separated ``job_id, candidate_id, status`` with a header row,
* audit log: JSON lines ``{"entity_id", "reason_code"}``,
* status table: tab-separated ``regex, label`` (first full match wins).
"""
from __future__ import annotations

import csv
import enum
import io
import json
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DanglingReference, DataError, InsufficientData


class Label(enum.Enum):
    MATCH = "Match"
    UNMATCH = "Unmatch"
    UNKNOWN = "Unknown"


class Reason(str, enum.Enum):
    UNLABELED = "Unlabeled"
    DUPLICATE_JOB = "DuplicateJob"
    DUPLICATE_PAIR = "DuplicatePair"
    CONTRADICTION = "Contradiction"
    SHORT_DOCUMENT = "ShortDocument"
    CANDIDATE_REMOVED = "CandidateRemoved"


@dataclass(frozen=True)
class Document:
    id: str
    lang: str
    text: str
    sections: Optional[dict[str, tuple[int, int]]] = None
    word_count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "word_count", len(self.text.split()))
        if self.sections is not None:
            spans = {k: (int(v[0]), int(v[1])) for k, v in self.sections.items()}
            object.__setattr__(self, "sections", spans)
            ordered = sorted(spans.values())
            for start, end in ordered:
                if not 0 <= start <= end <= len(self.text):
                    raise DataError(f"{self.id}: section span {(start, end)} outside text")
            for (_, e1), (s2, _) in zip(ordered, ordered[1:]):
                if s2 < e1:
                    raise DataError(f"{self.id}: overlapping sections")

    def section_text(self, name: str) -> str:
        start, end = self.sections[name]
        return self.text[start:end]

    def to_record(self) -> dict:
        rec = {"id": self.id, "lang": self.lang, "text": self.text}
        if self.sections is not None:
            rec["sections"] = {k: list(v) for k, v in sorted(self.sections.items())}
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "Document":
        try:
            return cls(str(rec["id"]), str(rec.get("lang", "und")), str(rec["text"]),
                       rec.get("sections"))
        except KeyError as exc:
            raise DataError(f"document record missing field {exc}") from None


@dataclass(frozen=True)
class LabeledPair:
    job_id: str
    candidate_id: str
    status: str
    label: Label

    @property
    def key(self) -> tuple[str, str]:
        return (self.job_id, self.candidate_id)


@dataclass(frozen=True)
class AuditEntry:
    entity_id: str
    reason_code: str


# common UTF-8-read-as-cp1252 sequences for French text
_MOJIBAKE = {
    "Ã©": "é", "Ã¨": "è", "Ãª": "ê", "Ã«": "ë", "Ã ": "à", "Ã¢": "â",
    "Ã§": "ç", "Ã®": "î", "Ã¯": "ï", "Ã´": "ô", "Ã¹": "ù", "Ã»": "û",
    "Ã¼": "ü", "Ã‰": "É", "Ãˆ": "È", "ÃŠ": "Ê", "Ã€": "À", "Ã‡": "Ç",
    "Å“": "œ", "Å’": "Œ", "â€™": "’", "â€“": "\u2013", "â€”": "\u2014",
}
_MOJIBAKE_RE = re.compile("|".join(sorted(map(re.escape, _MOJIBAKE), key=len, reverse=True)))


def _drop_controls(text: str) -> str:
    out = []
    for ch in text:
        cat = unicodedata.category(ch)
        if ch.isspace():
            out.append(" ")
        elif cat in ("Cc", "Cf", "Cs", "Co", "Cn"):
            continue
        else:
            out.append(ch)
    return "".join(out)


def _clean_once(text: str) -> str:
    text = unicodedata.normalize("NFC", text)
    text = _MOJIBAKE_RE.sub(lambda m: _MOJIBAKE[m.group(0)], text)
    text = _drop_controls(text)
    return " ".join(text.split())


def clean_text(raw: str) -> str:
    """Repair French mojibake, drop control characters, collapse whitespace.

    Passes repeat until nothing changes, so ``clean_text`` is idempotent even
    when removing a control character exposes a new mojibake sequence.
    """
    text = raw
    for _ in range(16):
        cleaned = _clean_once(text)
        if cleaned == text:
            break
        text = cleaned
    return text


@dataclass(frozen=True)
class StatusTable:
    rules: tuple[tuple[re.Pattern, Label], ...]

    @classmethod
    def from_rules(cls, rules: Iterable[tuple[str, "Label | str"]]) -> "StatusTable":
        compiled = []
        for pattern, label in rules:
            try:
                rx = re.compile(pattern, re.IGNORECASE)
            except re.error as exc:
                raise ConfigError(f"bad status pattern {pattern!r}: {exc}") from None
            compiled.append((rx, label if isinstance(label, Label) else Label(label)))
        return cls(tuple(compiled))

    @classmethod
    def parse(cls, text: str) -> "StatusTable":
        rules = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"status table line {lineno}: expected 'pattern<TAB>label'")
            try:
                rules.append((parts[0], Label(parts[1].strip())))
            except ValueError:
                raise ConfigError(f"status table line {lineno}: unknown label {parts[1]!r}") from None
        return cls.from_rules(rules)

    @classmethod
    def default(cls) -> "StatusTable":
        return cls.parse(resources.files("matchforge.data").joinpath("status_map.tsv")
                         .read_text(encoding="utf-8"))


def map_status(status: str, table: Optional[StatusTable] = None) -> Label:
    table = StatusTable.default() if table is None else table
    key = " ".join(status.split())
    for rx, label in table.rules:
        if rx.fullmatch(key):
            return label
    return Label.UNKNOWN


def label_pairs(rows: Iterable[tuple[str, str, str]],
                table: Optional[StatusTable] = None) -> list[LabeledPair]:
    table = StatusTable.default() if table is None else table
    return [LabeledPair(j, c, s, map_status(s, table)) for j, c, s in rows]


@dataclass(frozen=True)
class CleanCorpus:
    documents: dict[str, Document]
    pairs: tuple[LabeledPair, ...]
    audit: tuple[AuditEntry, ...]

    @property
    def job_ids(self) -> list[str]:
        return sorted({p.job_id for p in self.pairs})

    @property
    def candidate_ids(self) -> list[str]:
        return sorted({p.candidate_id for p in self.pairs})

    def to_bytes(self) -> bytes:
        """Canonical serialization: documents then pairs, both sorted."""
        payload = {
            "documents": [self.documents[k].to_record() for k in sorted(self.documents)],
            "pairs": [[p.job_id, p.candidate_id, p.status, p.label.value] for p in self.pairs],
        }
        return (json.dumps(payload, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "CleanCorpus":
        payload = json.loads(data.decode("utf-8"))
        docs = {d["id"]: Document.from_record(d) for d in payload["documents"]}
        pairs = tuple(LabeledPair(j, c, s, Label(lab)) for j, c, s, lab in payload["pairs"])
        return cls(docs, pairs, ())


def _pair_id(p: LabeledPair) -> str:
    return f"{p.job_id}::{p.candidate_id}"


def dedupe_and_filter(pairs: Sequence[LabeledPair], docs: Mapping[str, Document],
                      min_words: int = 50) -> CleanCorpus:
    """Drop unlabeled, duplicate, contradictory and short-candidate data.

    Every removed pair or document gets one audit entry.  Jobs with identical
    cleaned text collapse onto the smallest id; pairs are re-pointed to it.
    """
    for p in pairs:
        for ref in (p.job_id, p.candidate_id):
            if ref not in docs:
                raise DanglingReference(f"pair {_pair_id(p)} cites missing document {ref}")
    audit: list[AuditEntry] = []
    documents = dict(docs)

    labeled = []
    for p in pairs:
        if p.label is Label.UNKNOWN:
            audit.append(AuditEntry(_pair_id(p), Reason.UNLABELED.value))
        else:
            labeled.append(p)

    job_ids = sorted({p.job_id for p in labeled})
    by_text: dict[str, list[str]] = {}
    for jid in job_ids:
        by_text.setdefault(clean_text(documents[jid].text), []).append(jid)
    canonical: dict[str, str] = {}
    for ids in by_text.values():
        for jid in ids:
            canonical[jid] = ids[0]
            if jid != ids[0]:
                del documents[jid]
                audit.append(AuditEntry(jid, Reason.DUPLICATE_JOB.value))
    repointed = [LabeledPair(canonical[p.job_id], p.candidate_id, p.status, p.label)
                 for p in labeled]

    short = sorted({p.candidate_id for p in repointed
                    if documents[p.candidate_id].word_count < min_words})
    for cid in short:
        del documents[cid]
        audit.append(AuditEntry(cid, Reason.SHORT_DOCUMENT.value))
    short_set = set(short)
    kept_pairs = []
    for p in repointed:
        if p.candidate_id in short_set:
            audit.append(AuditEntry(_pair_id(p), Reason.CANDIDATE_REMOVED.value))
        else:
            kept_pairs.append(p)

    groups: dict[tuple[str, str], list[LabeledPair]] = {}
    for p in kept_pairs:
        groups.setdefault(p.key, []).append(p)
    out = []
    for key, group in groups.items():
        if len({p.label for p in group}) > 1:
            audit.extend(AuditEntry(_pair_id(p), Reason.CONTRADICTION.value) for p in group)
            continue
        out.append(group[0])
        audit.extend(AuditEntry(_pair_id(p), Reason.DUPLICATE_PAIR.value) for p in group[1:])
    out.sort(key=lambda p: p.key)
    return CleanCorpus(documents, tuple(out), tuple(audit))


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[LabeledPair, ...]
    validation: tuple[LabeledPair, ...]
    test: tuple[LabeledPair, ...]
    seed: int
    ratios: tuple[float, float] = (0.8, 0.8)

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            **{name: [list(p.key) for p in getattr(self, name)]
               for name in ("train", "validation", "test")},
        }


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _allocate(class_sizes: Sequence[int], total: int) -> list[int]:
    """Split ``total`` across classes proportionally (largest remainder)."""
    n = sum(class_sizes)
    exact = [s * total / n for s in class_sizes]
    quota = [int(np.floor(e)) for e in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - quota[i]), i))
    for i in order[:total - sum(quota)]:
        quota[i] += 1
    return quota


def _stratified_cut(groups: list[list[LabeledPair]], fraction: float):
    n = sum(len(g) for g in groups)
    quota = _allocate([len(g) for g in groups], _round_half_up(fraction * n))
    held = [g[:q] for g, q in zip(groups, quota)]
    rest = [g[q:] for g, q in zip(groups, quota)]
    return rest, held


def stratified_split(pairs: Sequence[LabeledPair], seed: int, test_fraction: float = 0.2,
                     validation_fraction: float = 0.2, min_per_class: int = 5) -> CorpusSplit:
    """Stratified train/validation/test split: test first, then validation from train."""
    groups = []
    for label in (Label.MATCH, Label.UNMATCH):
        members = [p for p in pairs if p.label is label]
        if len(members) < min_per_class:
            raise InsufficientData(f"{label.value}: {len(members)} pairs, need {min_per_class}")
        groups.append(members)
    if len(groups[0]) + len(groups[1]) != len(pairs):
        raise InsufficientData("split input must contain only Match/Unmatch pairs")
    rng = np.random.default_rng(seed)
    groups = [[g[i] for i in rng.permutation(len(g))] for g in groups]
    train_groups, test_groups = _stratified_cut(groups, test_fraction)
    train_groups, val_groups = _stratified_cut(train_groups, validation_fraction)
    flat = lambda gs: tuple(p for g in gs for p in g)  # noqa: E731
    return CorpusSplit(flat(train_groups), flat(val_groups), flat(test_groups), seed,
                       (1 - test_fraction, 1 - validation_fraction))


def read_documents(text: str) -> dict[str, Document]:
    docs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = Document.from_record(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"documents line {lineno}: {exc}") from None
        if doc.id in docs:
            raise DataError(f"documents line {lineno}: duplicate id {doc.id}")
        docs[doc.id] = doc
    return docs


def clean_documents(docs: Mapping[str, Document]) -> dict[str, Document]:
    """Clean every text; section spans are dropped when cleaning shifts them."""
    out = {}
    for k, d in docs.items():
        text = clean_text(d.text)
        sections = None
        if d.sections:
            sections = {}
            for name, (s, e) in d.sections.items():
                body = clean_text(d.text[s:e])
                pos = text.find(body) if body else -1
                if pos < 0:
                    sections = None
                    break
                sections[name] = (pos, pos + len(body))
            if sections is not None:
                try:
                    Document(d.id, d.lang, text, sections)
                except DataError:
                    sections = None
        out[k] = Document(d.id, d.lang, text, sections)
    return out


def read_pairs(text: str) -> list[tuple[str, str, str]]:
    reader = csv.reader(io.StringIO(text), delimiter="\t")
    rows = [r for r in reader if r and any(x.strip() for x in r)]
    if rows and [c.strip() for c in rows[0]] == ["job_id", "candidate_id", "status"]:
        rows = rows[1:]
    out = []
    for i, r in enumerate(rows, start=1):
        if len(r) != 3:
            raise DataError(f"pairs row {i}: expected 3 fields, got {len(r)}")
        out.append((r[0].strip(), r[1].strip(), r[2].strip()))
    return out


def write_documents(docs: Mapping[str, Document]) -> str:
    return "".join(json.dumps(docs[k].to_record(), ensure_ascii=False) + "\n" for k in sorted(docs))


def write_pairs(rows: Iterable[tuple[str, str, str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["job_id", "candidate_id", "status"])
    w.writerows(rows)
    return buf.getvalue()


def write_audit(entries: Iterable[AuditEntry]) -> str:
    return "".join(json.dumps({"entity_id": e.entity_id, "reason_code": e.reason_code},
                              ensure_ascii=False) + "\n" for e in entries)


def read_audit(text: str) -> list[AuditEntry]:
    return [AuditEntry(**json.loads(line)) for line in text.splitlines() if line.strip()]


def label_balance(pairs: Iterable[LabeledPair]) -> dict[str, int]:
    counts = {lab.value: 0 for lab in Label}
    for p in pairs:
        counts[p.label.value] += 1
    return counts
