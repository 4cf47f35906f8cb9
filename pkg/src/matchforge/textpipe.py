"""Tokenization, overlapping window chunking and chunk-count planning.

A document of ``L`` tokens is cut into windows of ``window`` tokens whose
starts are ``window - overlap`` apart.  With ``k`` encoder slots at most
``capacity(k) = k*window - (k-1)*overlap`` tokens are seen; the rest is lost.
The planner picks, per document role, the smallest ``k`` whose corpus-level
loss stays under a threshold.
"""
from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Sequence

DEFAULT_WINDOW = 512
DEFAULT_OVERLAP = 50
DEFAULT_LOSS_THRESHOLD = 0.10

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

Tokenizer = Callable[[str], Sequence[str]]


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    doc_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def normalize(text: str) -> str:
    return unicodedata.normalize("NFKC", text).lower()


def tokenize(text: str, doc_id: str = "") -> TokenSequence:
    """Lowercase, NFKC-normalize and split on whitespace/punctuation.

    Runs of word characters form one token, every other non-space character is
    its own token:

    >>> tokenize("C++ et Java.").tokens
    ('c', '+', '+', 'et', 'java', '.')
    """
    return TokenSequence(tuple(_TOKEN_RE.findall(normalize(text))), doc_id)


def _check_window(window: int, overlap: int) -> None:
    if not 0 <= overlap < window:
        raise ValueError(f"need 0 <= overlap < window, got overlap={overlap}, window={window}")


def capacity(k: int, window: int = DEFAULT_WINDOW, overlap: int = DEFAULT_OVERLAP) -> int:
    """Number of distinct tokens covered by ``k`` overlapping windows."""
    _check_window(window, overlap)
    if k < 1:
        raise ValueError("k must be >= 1")
    return k * window - (k - 1) * overlap


def chunks_needed(length: int, window: int = DEFAULT_WINDOW, overlap: int = DEFAULT_OVERLAP) -> int:
    _check_window(window, overlap)
    if length <= 0:
        return 0
    if length <= window:
        return 1
    return math.ceil((length - window) / (window - overlap)) + 1


class Chunks(NamedTuple):
    chunks: list[tuple[str, ...]]
    dropped: int


def chunk(tokens: Sequence[str], k: int, window: int = DEFAULT_WINDOW,
          overlap: int = DEFAULT_OVERLAP) -> Chunks:
    """Split ``tokens`` into at most ``k`` windows sharing ``overlap`` tokens.

    Chunk ``i`` covers ``[i*stride, i*stride + window)`` clipped to the
    document, ``stride = window - overlap``.  Tokens past ``capacity(k)`` are
    dropped and counted.
    """
    _check_window(window, overlap)
    if k < 1:
        raise ValueError("k must be >= 1")
    tokens = tuple(tokens)
    stride = window - overlap
    n = min(k, chunks_needed(len(tokens), window, overlap))
    out = [tokens[i * stride:i * stride + window] for i in range(n)]
    kept = min(len(tokens), capacity(k, window, overlap))
    return Chunks(out, len(tokens) - kept)


def unchunk(chunks: Sequence[Sequence[str]], overlap: int) -> tuple[str, ...]:
    """Inverse of :func:`chunk` over the kept tokens."""
    out: list[str] = []
    for i, c in enumerate(chunks):
        out.extend(c if i == 0 else c[overlap:])
    return tuple(out)


def corpus_loss(lengths: Sequence[int], k: int, window: int = DEFAULT_WINDOW,
                overlap: int = DEFAULT_OVERLAP) -> float:
    """Fraction of corpus tokens beyond ``capacity(k)``."""
    total = sum(lengths)
    if total == 0:
        return 0.0
    cap = capacity(k, window, overlap)
    return sum(max(0, n - cap) for n in lengths) / total


def choose_k(lengths: Sequence[int], window: int = DEFAULT_WINDOW,
             overlap: int = DEFAULT_OVERLAP,
             loss_threshold: float = DEFAULT_LOSS_THRESHOLD) -> tuple[int, float]:
    """Smallest slot count meeting the loss budget, and its realized loss."""
    if not lengths:
        raise ValueError("empty length list")
    if any(n < 0 for n in lengths):
        raise ValueError("negative document length")
    if loss_threshold < 0:
        raise ValueError("loss_threshold must be >= 0")
    # loss is 0 once every document fits, so the scan terminates there
    k_max = max(1, chunks_needed(max(lengths), window, overlap))
    for k in range(1, k_max + 1):
        loss = corpus_loss(lengths, k, window, overlap)
        if loss <= loss_threshold:
            return k, loss
    raise AssertionError("unreachable: loss is zero at k_max")


@dataclass(frozen=True)
class ChunkPlan:
    window: int
    overlap: int
    k_job: int
    k_resume: int
    loss_threshold: float
    realized_loss_job: float
    realized_loss_resume: float

    def k_for(self, role: str) -> int:
        if role == "job":
            return self.k_job
        if role == "resume":
            return self.k_resume
        raise ValueError(f"unknown document role {role!r}")

    def to_record(self) -> dict:
        return asdict(self)

    def to_bytes(self) -> bytes:
        return (json.dumps(self.to_record(), sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "ChunkPlan":
        return cls(**json.loads(data.decode("utf-8")))


def plan_chunks(job_lengths: Sequence[int], resume_lengths: Sequence[int],
                window: int = DEFAULT_WINDOW, overlap: int = DEFAULT_OVERLAP,
                loss_threshold: float = DEFAULT_LOSS_THRESHOLD) -> ChunkPlan:
    k_job, loss_job = choose_k(job_lengths, window, overlap, loss_threshold)
    k_res, loss_res = choose_k(resume_lengths, window, overlap, loss_threshold)
    return ChunkPlan(window, overlap, k_job, k_res, loss_threshold, loss_job, loss_res)
