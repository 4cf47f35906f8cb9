"""Matching head: concat -> ReLU hidden layer -> 2 logits -> softmax.

Class index 1 is "match", index 0 is "not match".  Everything runs in float64
numpy; gradients are written out by hand and checked against finite
differences in the test-suite.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .corpus import CorpusSplit, Document, Label, LabeledPair
from .embed import (EncoderParams, EncoderVariant, doc_embedding, embed_chunk,
                    mixing_weights, project)
from .errors import CheckpointError, DimensionMismatch, EmptyChunk, NonFiniteLoss
from .metrics import ConfusionCounts, confusion_stats
from .textpipe import ChunkPlan, TokenSequence, chunk, tokenize

log = logging.getLogger(__name__)

NOT_MATCH, MATCH = 0, 1
PROB_CLAMP = 1e-12
CHECKPOINT_MAGIC = "matchforge-checkpoint"
CHECKPOINT_VERSION = 1


class MatchClass(enum.Enum):
    NOT_MATCH = "NotMatch"
    MATCH = "Match"


@dataclass
class HeadParams:
    w_hidden: np.ndarray  # (2d, d)
    b_hidden: np.ndarray  # (d,)
    w_out: np.ndarray     # (d, 2)
    b_out: np.ndarray     # (2,)
    d: int
    seed: int = 0

    def __post_init__(self):
        d = self.d
        shapes = {"w_hidden": (2 * d, d), "b_hidden": (d,), "w_out": (d, 2), "b_out": (2,)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @classmethod
    def init(cls, d: int, seed: int = 0, rng: Optional[np.random.Generator] = None) -> "HeadParams":
        """Glorot-uniform weights, zero biases.

        Small uniform(+-0.05) weights in all three factors (table, hidden,
        output) leave training stuck at the symmetric saddle.
        """
        rng = np.random.default_rng(seed) if rng is None else rng

        def glorot(fan_in, fan_out):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(glorot(2 * d, d), np.zeros(d), glorot(d, 2), np.zeros(2), d, seed)

    @classmethod
    def zeros(cls, d: int) -> "HeadParams":
        return cls(np.zeros((2 * d, d)), np.zeros(d), np.zeros((d, 2)), np.zeros(2), d)

    def copy(self) -> "HeadParams":
        return HeadParams(self.w_hidden.copy(), self.b_hidden.copy(), self.w_out.copy(),
                          self.b_out.copy(), self.d, self.seed)


@dataclass
class MatchModel:
    encoder: EncoderParams
    head: HeadParams

    def __post_init__(self):
        if self.encoder.d != self.head.d:
            raise DimensionMismatch(f"encoder d={self.encoder.d} but head d={self.head.d}")

    @classmethod
    def init(cls, variant: EncoderVariant = EncoderVariant.FEATURE_HASH, d: int = 8,
             buckets: Optional[int] = None, seed: int = 0) -> "MatchModel":
        rng = np.random.default_rng(seed)
        if variant is EncoderVariant.FEATURE_HASH:
            enc = EncoderParams.feature_hash(d, seed)
        else:
            enc = EncoderParams.trainable_bag(d, buckets or 256, seed, rng)
        return cls(enc, HeadParams.init(d, seed, rng))

    @property
    def d(self) -> int:
        return self.head.d

    def tensors(self) -> dict[str, np.ndarray]:
        """Every trainable tensor, in checkpoint order."""
        out = {"w_hidden": self.head.w_hidden, "b_hidden": self.head.b_hidden,
               "w_out": self.head.w_out, "b_out": self.head.b_out}
        if self.encoder.table is not None:
            out["table"] = self.encoder.table
        return out

    def copy(self) -> "MatchModel":
        return MatchModel(self.encoder.copy(), self.head.copy())


@dataclass(frozen=True)
class Prediction:
    p_match: float
    p_not_match: float

    @property
    def predicted(self) -> MatchClass:
        return MatchClass.MATCH if self.p_match > self.p_not_match else MatchClass.NOT_MATCH

    @property
    def probs(self) -> np.ndarray:
        return np.array([self.p_not_match, self.p_match])


@dataclass
class ForwardCache:
    x: np.ndarray       # (n, 2d) concatenated document embeddings
    z: np.ndarray       # (n, d) hidden pre-activation
    h: np.ndarray       # (n, d) hidden output
    logits: np.ndarray  # (n, 2)
    probs: np.ndarray   # (n, 2)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(x: np.ndarray, head: HeadParams) -> ForwardCache:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != 2 * head.d:
        raise DimensionMismatch(f"input width {x.shape[1]} != 2*d = {2 * head.d}")
    z = x @ head.w_hidden + head.b_hidden
    h = np.maximum(z, 0.0)
    logits = h @ head.w_out + head.b_out
    return ForwardCache(x, z, h, logits, softmax(logits))


def forward(job_embeds, resume_embeds, head: HeadParams) -> tuple[Prediction, ForwardCache]:
    job = np.asarray(job_embeds, dtype=float)
    res = np.asarray(resume_embeds, dtype=float)
    if job.shape != (head.d,) or res.shape != (head.d,):
        raise DimensionMismatch(f"embeddings {job.shape}/{res.shape}, expected ({head.d},)")
    cache = forward_batch(np.concatenate([job, res])[None, :], head)
    p = cache.probs[0]
    return Prediction(float(p[MATCH]), float(p[NOT_MATCH])), cache


def one_hot(labels: Sequence[bool]) -> np.ndarray:
    y = np.asarray(labels, dtype=bool)
    q = np.zeros((len(y), 2))
    q[np.arange(len(y)), y.astype(int)] = 1.0
    return q


def bce_loss(prediction, truth, class_weights: Sequence[float] = (1.0, 1.0)) -> float:
    """Two-term cross-entropy of one prediction against a one-hot truth.

    ``truth`` is ``(q_not_match, q_match)``; probabilities are clamped away
    from 0 and 1 before the log.
    """
    p = prediction.probs if isinstance(prediction, Prediction) else np.asarray(prediction, float)
    q = np.asarray(truth, dtype=float)
    p = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    w = class_weights[int(np.argmax(q))]
    return float(-w * np.sum(q * np.log(p)))


def batch_loss(probs: np.ndarray, q: np.ndarray, class_weights: Sequence[float] = (1.0, 1.0)) -> float:
    p = np.clip(probs, PROB_CLAMP, 1 - PROB_CLAMP)
    w = np.asarray(class_weights)[np.argmax(q, axis=1)]
    return float(np.mean(-w * np.sum(q * np.log(p), axis=1)))


def backward(cache: ForwardCache, q: np.ndarray, head: HeadParams,
             class_weights: Sequence[float] = (1.0, 1.0)) -> dict[str, np.ndarray]:
    """Gradients of the mean batch loss.

    Returns head gradients plus ``"x"``, the gradient with respect to the
    concatenated input embeddings.  The ReLU derivative at exactly 0 is 0.
    The clamp in the loss is ignored (it only bites at saturated outputs).
    """
    q = np.atleast_2d(q)
    n = q.shape[0]
    w = np.asarray(class_weights)[np.argmax(q, axis=1)][:, None]
    dlogits = w * (cache.probs - q) / n
    dh = dlogits @ head.w_out.T
    dz = dh * (cache.z > 0)
    return {
        "w_hidden": cache.x.T @ dz,
        "b_hidden": dz.sum(axis=0),
        "w_out": cache.h.T @ dlogits,
        "b_out": dlogits.sum(axis=0),
        "x": dz @ head.w_hidden.T,
    }


def loss_and_grads(model: MatchModel, job_w: np.ndarray, resume_w: np.ndarray, q: np.ndarray,
                   class_weights: Sequence[float] = (1.0, 1.0)) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss and gradients for a batch given documents' mixing weights.

    ``job_w`` / ``resume_w`` are ``(n, buckets)`` rows from
    :func:`matchforge.embed.mixing_weights`.
    """
    d = model.d
    x = np.hstack([project(job_w, model.encoder), project(resume_w, model.encoder)])
    cache = forward_batch(x, model.head)
    loss = batch_loss(cache.probs, q, class_weights)
    grads = backward(cache, q, model.head, class_weights)
    dx = grads.pop("x")
    if model.encoder.trainable:
        grads["table"] = job_w.T @ dx[:, :d] + resume_w.T @ dx[:, d:]
    return loss, grads


# --- document path ---------------------------------------------------------

def document_chunks(doc, role: str, plan: ChunkPlan,
                    tokenizer: Callable[[str], TokenSequence] = tokenize) -> list[tuple[str, ...]]:
    tokens = doc.tokens if isinstance(doc, TokenSequence) else tokenizer(
        doc.text if isinstance(doc, Document) else doc).tokens
    if not tokens:
        name = getattr(doc, "id", None) or getattr(doc, "doc_id", "") or "<text>"
        raise EmptyChunk(f"{role} document {name} has no tokens")
    return chunk(tokens, plan.k_for(role), plan.window, plan.overlap).chunks


def document_embedding(doc, role: str, plan: ChunkPlan, encoder: EncoderParams,
                       tokenizer: Callable[[str], TokenSequence] = tokenize) -> np.ndarray:
    chunks = document_chunks(doc, role, plan, tokenizer)
    return doc_embedding([embed_chunk(c, encoder) for c in chunks])


def predict_pair(job, resume, plan: ChunkPlan, model: MatchModel,
                 tokenizer: Callable[[str], TokenSequence] = tokenize) -> Prediction:
    """tokenize -> chunk -> embed -> chunk mean -> head, for one (job, resume)."""
    job_vec = document_embedding(job, "job", plan, model.encoder, tokenizer)
    res_vec = document_embedding(resume, "resume", plan, model.encoder, tokenizer)
    return forward(job_vec, res_vec, model.head)[0]


# --- training --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 4
    max_epochs: int = 20
    patience: int = 1
    seed: int = 0
    class_weights: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
            raise ValueError("class_weights must be two positive numbers")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float
    val_accuracy: float


@dataclass
class TrainResult:
    model: MatchModel
    log: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0


class FeatureCache:
    """Per-document mixing weights, computed once per (document, role)."""

    def __init__(self, documents: Mapping[str, object], plan: ChunkPlan, encoder: EncoderParams,
                 tokenizer: Callable[[str], TokenSequence] = tokenize):
        self.documents = documents
        self.plan = plan
        self.encoder = encoder
        self.tokenizer = tokenizer
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    def weights(self, doc_id: str, role: str) -> np.ndarray:
        key = (doc_id, role)
        if key not in self._cache:
            chunks = document_chunks(self.documents[doc_id], role, self.plan, self.tokenizer)
            self._cache[key] = mixing_weights(chunks, self.encoder)
        return self._cache[key]

    def batch(self, pairs: Sequence[LabeledPair]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        job_w = np.array([self.weights(p.job_id, "job") for p in pairs])
        res_w = np.array([self.weights(p.candidate_id, "resume") for p in pairs])
        q = one_hot([p.label is Label.MATCH for p in pairs])
        return job_w, res_w, q


def evaluate_pairs(model: MatchModel, features: FeatureCache, pairs: Sequence[LabeledPair],
                   class_weights: Sequence[float] = (1.0, 1.0)) -> tuple[float, ConfusionCounts]:
    job_w, res_w, q = features.batch(pairs)
    x = np.hstack([project(job_w, model.encoder), project(res_w, model.encoder)])
    probs = forward_batch(x, model.head).probs
    loss = batch_loss(probs, q, class_weights)
    predicted = probs[:, MATCH] > probs[:, NOT_MATCH]
    return loss, ConfusionCounts.from_predictions(predicted, q[:, MATCH] == 1)


def sgd_step(model: MatchModel, grads: Mapping[str, np.ndarray], lr: float) -> None:
    for name, tensor in model.tensors().items():
        tensor -= lr * grads[name]


def train(split: CorpusSplit, plan: ChunkPlan, model: MatchModel, config: TrainConfig,
          documents: Mapping[str, object],
          tokenizer: Callable[[str], TokenSequence] = tokenize) -> TrainResult:
    """Mini-batch SGD with validation-F1 early stopping.

    ``documents`` maps ids to :class:`Document`, raw text or token sequences.
    The input model is not modified; the returned model holds the parameters
    of the epoch with the best validation F1.
    """
    if not split.train or not split.validation:
        raise ValueError("need non-empty train and validation sets")
    if any(p.label is Label.UNKNOWN for p in (*split.train, *split.validation)):
        raise ValueError("Unknown labels cannot be trained on")
    model = model.copy()
    features = FeatureCache(documents, plan, model.encoder, tokenizer)
    rng = np.random.default_rng(config.seed)
    train_pairs = list(split.train)
    result = TrainResult(model.copy())
    best_f1 = -math.inf
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_pairs))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_pairs[i] for i in order[start:start + config.batch_size]]
            job_w, res_w, q = features.batch(batch)
            loss, grads = loss_and_grads(model, job_w, res_w, q, config.class_weights)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch}, batch starting at {start}: loss={loss}")
            total += loss * len(batch)
            sgd_step(model, grads, config.learning_rate)
        val_loss, counts = evaluate_pairs(model, features, split.validation, config.class_weights)
        if not math.isfinite(val_loss):
            raise NonFiniteLoss(f"epoch {epoch}: validation loss={val_loss}")
        stats = confusion_stats(counts)
        f1 = stats.f1 or 0.0
        entry = EpochLog(epoch, total / len(train_pairs), val_loss, f1, stats.accuracy)
        result.log.append(entry)
        log.info("epoch %d train_loss=%.4f val_loss=%.4f val_f1=%.4f", epoch,
                 entry.train_loss, val_loss, f1)
        if f1 > best_f1:
            best_f1 = f1
            stale = 0
            result.model = model.copy()
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    return result


# --- checkpoints -----------------------------------------------------------

def save_checkpoint(model: MatchModel) -> bytes:
    """Header line, then each tensor as row-major little-endian float64."""
    tensors = model.tensors()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "d": model.d,
        "B": model.encoder.buckets,
        "variant": model.encoder.variant.value,
        "seed": model.encoder.seed,
        "head_seed": model.head.seed,
        "tensors": [[name, list(t.shape)] for name, t in tensors.items()],
    }
    head = f"{CHECKPOINT_MAGIC} {json.dumps(header, sort_keys=True)}\n".encode("utf-8")
    body = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in tensors.values())
    return head + body


def load_checkpoint(data: bytes) -> MatchModel:
    newline = data.find(b"\n")
    if newline < 0 or not data.startswith(CHECKPOINT_MAGIC.encode()):
        raise CheckpointError("not a matchforge checkpoint")
    try:
        header = json.loads(data[len(CHECKPOINT_MAGIC) + 1:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from None
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    body = memoryview(data)[newline + 1:]
    arrays = {}
    offset = 0
    for name, shape in header["tensors"]:
        size = int(np.prod(shape)) * 8
        if offset + size > len(body):
            raise CheckpointError("truncated checkpoint")
        arrays[name] = np.frombuffer(body[offset:offset + size], dtype="<f8").astype(float).reshape(shape)
        offset += size
    if offset != len(body):
        raise CheckpointError("trailing bytes after checkpoint tensors")
    d = header["d"]
    variant = EncoderVariant(header["variant"])
    encoder = EncoderParams(variant, d, header["B"], header["seed"], arrays.get("table"))
    head = HeadParams(arrays["w_hidden"], arrays["b_hidden"], arrays["w_out"], arrays["b_out"],
                      d, header.get("head_seed", header["seed"]))
    return MatchModel(encoder, head)
