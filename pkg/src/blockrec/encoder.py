"""Query-aware suggestion embeddings.

A two-layer tanh network maps the concatenated ``[suggestion; query]``
features to a representation ``a``; the projection ``e = tanh(a W + b)``
produces the embedding consumed by the decoder and the pairwise classifier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from blockrec import autodiff as ad
from blockrec.autodiff import ParamStore, Tensor
from blockrec.errors import DimensionError

PREFIX = "encoder."


@dataclass
class EncoderConfig:
    d_raw: int = 32
    d_hidden: int = 64
    d_a: int = 64
    d_e: int = 32


@dataclass
class QueryAwareEmbedding:
    e: np.ndarray
    suggestion_id: int


def init_encoder(store: ParamStore, config: EncoderConfig, rng: np.random.Generator) -> None:
    d_in = 2 * config.d_raw
    store.add(PREFIX + "pair_w1", ad.glorot(rng, d_in, config.d_hidden))
    store.add(PREFIX + "pair_b1", np.zeros(config.d_hidden))
    store.add(PREFIX + "pair_w2", ad.glorot(rng, config.d_hidden, config.d_a))
    store.add(PREFIX + "pair_b2", np.zeros(config.d_a))
    store.add(PREFIX + "W", ad.glorot(rng, config.d_a, config.d_e))
    store.add(PREFIX + "b", np.zeros(config.d_e))


def pair_inputs(query_features: np.ndarray, suggestion_features: np.ndarray) -> np.ndarray:
    """Rows ``[suggestion_t; query]`` for every candidate ``t``."""
    s = np.atleast_2d(suggestion_features)
    q = np.broadcast_to(query_features, (s.shape[0], query_features.shape[-1]))
    return np.concatenate([s, q], axis=1)


def encode(pairs: np.ndarray, store: ParamStore) -> Tensor:
    """Embed a ``[n, 2*d_raw]`` block of pair inputs as ``[n, d_e]``."""
    w1 = store[PREFIX + "pair_w1"]
    if pairs.ndim != 2 or pairs.shape[1] != w1.shape[0]:
        raise DimensionError(f"encoder expects [n, {w1.shape[0]}] pair inputs, got {pairs.shape}")
    x = Tensor(pairs)
    hidden = ad.tanh(ad.add_bias(ad.matmul(x, w1), store[PREFIX + "pair_b1"]))
    a = ad.tanh(ad.add_bias(ad.matmul(hidden, store[PREFIX + "pair_w2"]), store[PREFIX + "pair_b2"]))
    return ad.tanh(ad.add_bias(ad.matmul(a, store[PREFIX + "W"]), store[PREFIX + "b"]))


def encode_pair(query_features, suggestion_features, store: ParamStore) -> Tensor:
    q = np.asarray(query_features, dtype=np.float64)
    s = np.asarray(suggestion_features, dtype=np.float64)
    if q.shape != s.shape or q.ndim != 1:
        raise DimensionError(f"query {q.shape} and suggestion {s.shape} features must be equal-length vectors")
    return ad.reshape(encode(pair_inputs(q, s), store), (-1,))


def encode_all(example, store: ParamStore) -> Tensor:
    """Embeddings for every candidate of ``example``, in candidate order."""
    pairs = example._cache.get("pairs")
    if pairs is None:
        pairs = example._cache["pairs"] = pair_inputs(example.query_features, example.feature_matrix)
    return encode(pairs, store)


def embeddings_for(example, store: ParamStore) -> list:
    with ad.no_grad():
        e = encode_all(example, store).data
    return [QueryAwareEmbedding(e=row.copy(), suggestion_id=c.suggestion_id) for row, c in zip(e, example.candidates)]
