"""Toy chunk encoders and the chunk-mean document representation.

Two backends stand in for a pre-trained transformer encoder:

``FeatureHash``
    L2-normalized bucket counts; the bucket count equals the embedding size.
``TrainableBag``
    Mean of per-bucket embedding rows, trained with the rest of the model.

Tokens are bucketed with 64-bit FNV-1a over their UTF-8 bytes, so features
are identical on every platform.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyChunk, ModelError, NoChunks

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

INIT_SCALE = 0.05


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def token_bucket(token: str, buckets: int) -> int:
    return fnv1a_64(token.encode("utf-8")) % buckets


class EncoderVariant(enum.Enum):
    FEATURE_HASH = "hash"
    TRAINABLE_BAG = "bag"


@dataclass
class EncoderParams:
    variant: EncoderVariant
    d: int
    buckets: int
    seed: int = 0
    table: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 1 or self.buckets < 1:
            raise ModelError("d and buckets must be >= 1")
        if self.variant is EncoderVariant.FEATURE_HASH:
            if self.buckets != self.d:
                raise ModelError("FeatureHash embeds into its buckets: buckets must equal d")
            if self.table is not None:
                raise ModelError("FeatureHash has no embedding table")
        else:
            if self.table is None:
                raise ModelError("TrainableBag needs an embedding table")
            if self.table.shape != (self.buckets, self.d):
                raise DimensionMismatch(f"table shape {self.table.shape} != {(self.buckets, self.d)}")
            if not np.all(np.isfinite(self.table)):
                raise ModelError("non-finite embedding table")

    @classmethod
    def feature_hash(cls, d: int, seed: int = 0) -> "EncoderParams":
        return cls(EncoderVariant.FEATURE_HASH, d, d, seed)

    @classmethod
    def trainable_bag(cls, d: int, buckets: int, seed: int = 0,
                      rng: Optional[np.random.Generator] = None) -> "EncoderParams":
        rng = np.random.default_rng(seed) if rng is None else rng
        table = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(buckets, d))
        return cls(EncoderVariant.TRAINABLE_BAG, d, buckets, seed, table)

    @property
    def trainable(self) -> bool:
        return self.variant is EncoderVariant.TRAINABLE_BAG

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.variant, self.d, self.buckets, self.seed,
                             None if self.table is None else self.table.copy())


def bucket_counts(tokens: Sequence[str], buckets: int) -> np.ndarray:
    counts = np.zeros(buckets)
    for t in tokens:
        counts[token_bucket(t, buckets)] += 1.0
    return counts


def embed_chunk(chunk: Sequence[str], params: EncoderParams) -> np.ndarray:
    tokens = tuple(chunk)
    if not tokens:
        raise EmptyChunk("cannot embed an empty chunk")
    counts = bucket_counts(tokens, params.buckets)
    if params.variant is EncoderVariant.FEATURE_HASH:
        return counts / np.linalg.norm(counts)
    return (counts / len(tokens)) @ params.table


def doc_embedding(chunk_embeddings: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise mean over the chunks actually produced."""
    if len(chunk_embeddings) == 0:
        raise NoChunks("document produced no chunks")
    if len({np.shape(v) for v in chunk_embeddings}) != 1:
        raise DimensionMismatch("chunk embeddings differ in dimension")
    stacked = np.asarray(chunk_embeddings, dtype=float)
    if stacked.ndim != 2:
        raise DimensionMismatch("chunk embeddings differ in dimension")
    return stacked.sum(axis=0) / len(chunk_embeddings)


def mixing_weights(chunks: Sequence[Sequence[str]], params: EncoderParams) -> np.ndarray:
    """Bucket-space vector ``w`` of a document.

    The document embedding is ``w`` itself for FeatureHash and ``w @ table``
    for TrainableBag; the latter is linear in the table, which is what the
    trainer differentiates through.
    """
    if len(chunks) == 0:
        raise NoChunks("document produced no chunks")
    w = np.zeros(params.buckets)
    for c in chunks:
        if len(c) == 0:
            raise EmptyChunk("cannot embed an empty chunk")
        counts = bucket_counts(c, params.buckets)
        if params.variant is EncoderVariant.FEATURE_HASH:
            w += counts / np.linalg.norm(counts)
        else:
            w += counts / len(c)
    return w / len(chunks)


def project(weights: np.ndarray, params: EncoderParams) -> np.ndarray:
    if params.variant is EncoderVariant.FEATURE_HASH:
        return weights
    return weights @ params.table
