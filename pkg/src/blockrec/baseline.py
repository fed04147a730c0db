"""Pairwise relevance classifier followed by MMR reordering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from blockrec import autodiff as ad
from blockrec import encoder as enc
from blockrec.autodiff import Adam, AdamConfig, ParamStore
from blockrec.errors import ContractError

PREFIX = "classifier."


@dataclass
class MmrConfig:
    gamma: float = 0.6
    m: int = 4

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass
class ClassifierConfig:
    epochs: int = 3
    lr: float = 1e-3
    seed: int = 0


def init_classifier(encoder_config: enc.EncoderConfig, seed: int = 0) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    enc.init_encoder(store, encoder_config, rng)
    store.add(PREFIX + "w", ad.glorot(rng, encoder_config.d_e, 1))
    store.add(PREFIX + "b", np.zeros(1))
    return store


def classifier_logits(pairs: np.ndarray, store: ParamStore) -> ad.Tensor:
    e = enc.encode(pairs, store)
    logits = ad.add_bias(ad.matmul(e, store[PREFIX + "w"]), store[PREFIX + "b"])
    return ad.reshape(logits, (pairs.shape[0],))


def example_pairs(example) -> np.ndarray:
    pairs = example._cache.get("pairs")
    if pairs is None:
        pairs = example._cache["pairs"] = enc.pair_inputs(example.query_features, example.feature_matrix)
    return pairs


def example_targets(example) -> np.ndarray:
    t = np.zeros(example.n)
    t[example.label_indices] = 1.0
    return t


def relevance_scores(example, store: ParamStore) -> np.ndarray:
    """Classifier probability that each candidate belongs to the gold block."""
    with ad.no_grad():
        z = classifier_logits(example_pairs(example), store).data
    return 1.0 / (1.0 + np.exp(-z))


def train_classifier(examples, store: ParamStore, config: ClassifierConfig | None = None) -> list:
    """Binary cross-entropy over every (query, candidate) pair, one query per step.

    Labels are left at their natural skew (4 positives per query). Returns the
    mean loss of each epoch.
    """
    config = config or ClassifierConfig()
    rng = np.random.default_rng(config.seed)
    opt = Adam(store, AdamConfig(lr=config.lr))
    history = []
    for _ in range(config.epochs):
        losses = []
        for i in rng.permutation(len(examples)):
            ex = examples[i]
            store.zero_grad()
            loss = ad.bce_with_logits(classifier_logits(example_pairs(ex), store), example_targets(ex))
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return history


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def similarity_matrix(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = features / safe[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    sim[norms == 0.0, :] = 0.0
    sim[:, norms == 0.0] = 0.0
    np.fill_diagonal(sim, 1.0)
    return sim


def mmr_rerank(relevance, sim, config: MmrConfig) -> list:
    """Greedy MMR: first the most relevant item, then repeatedly
    ``argmax gamma * rel[t] - (1 - gamma) * max_s sim[t, s]`` over unselected t."""
    rel = np.asarray(relevance, dtype=np.float64)
    sim = np.asarray(sim, dtype=np.float64)
    n = rel.shape[0]
    if config.m > n:
        raise ContractError(f"cannot select {config.m} items from {n}")
    if sim.shape != (n, n):
        raise ContractError(f"similarity matrix {sim.shape} does not match {n} items")
    selected = [int(rel.argmax())]
    redundancy = sim[selected[0]].copy()
    while len(selected) < config.m:
        score = config.gamma * rel - (1.0 - config.gamma) * redundancy
        score[selected] = -np.inf
        nxt = int(score.argmax())
        selected.append(nxt)
        redundancy = np.maximum(redundancy, sim[nxt])
    return selected


def predict_block(example, store: ParamStore, config: MmrConfig) -> list:
    sim = example._cache.get("sim")
    if sim is None:
        sim = example._cache["sim"] = similarity_matrix(example.feature_matrix)
    return mmr_rerank(relevance_scores(example, store), sim, config)
