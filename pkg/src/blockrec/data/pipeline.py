"""Raw click logs -> QueryExamples: threshold, cluster, rank, pick labels."""
from __future__ import annotations

import hashlib

import numpy as np

from blockrec.data.generator import GeneratorConfig
from blockrec.data.gmm import GmmModel, fit_gmm
from blockrec.data.records import (
    NUM_LABELS,
    QueryExample,
    RawQueryLog,
    Rejection,
    SuggestionRecord,
)


def surviving_candidates(raw: RawQueryLog, config: GeneratorConfig) -> list:
    return [c for c in raw.candidates if c.cooccurrence_count >= config.min_cooccurrence]


def build_example(raw: RawQueryLog, gmm: GmmModel | None, config: GeneratorConfig):
    """Turn one raw log into a QueryExample, or a Rejection carrying the reason.

    ``gmm`` clusters the candidates that pass the co-occurrence threshold.
    Passing ``None`` fits one on those candidates (see ``fit_query_gmm``).
    """
    if raw.impressions < config.min_impressions:
        return Rejection(raw.query_id, "impressions")
    kept = surviving_candidates(raw, config)
    if len(kept) < NUM_LABELS:
        return Rejection(raw.query_id, "candidates")
    feats = np.stack([c.features for c in kept])
    if gmm is None:
        gmm = fit_query_gmm(feats, raw.query_id, config)
    clusters = gmm.predict(feats)

    # rank within cluster: click rate descending, lower suggestion_id first on ties
    order = sorted(range(len(kept)), key=lambda j: (-kept[j].click_rate, kept[j].suggestion_id))
    rank = np.zeros(len(kept), dtype=np.int64)
    seen: dict = {}
    for j in order:
        cid = int(clusters[j])
        seen[cid] = seen.get(cid, 0) + 1
        rank[j] = seen[cid]

    if len(seen) < NUM_LABELS:
        return Rejection(raw.query_id, "clusters")

    records = [
        SuggestionRecord(
            suggestion_id=c.suggestion_id,
            features=np.asarray(c.features, dtype=np.float64),
            click_rate=c.click_rate,
            cooccurrence_count=c.cooccurrence_count,
            cluster_id=int(clusters[j]),
            rank_in_cluster=int(rank[j]),
        )
        for j, c in enumerate(kept)
    ]
    # `order` is already click-descending, so the rank-1 members appear best-first
    bests = [records[j] for j in order if rank[j] == 1]
    labels = [r.suggestion_id for r in bests[:NUM_LABELS]]
    return QueryExample(
        query_id=raw.query_id,
        query_features=np.asarray(raw.query_features, dtype=np.float64),
        impressions=raw.impressions,
        candidates=records,
        labels=labels,
    )


def query_seed(base_seed: int, query_id: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{query_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def fit_query_gmm(features: np.ndarray, query_id: int, config: GeneratorConfig) -> GmmModel:
    return fit_gmm(features, config.k, seed=query_seed(config.seed, query_id))


def build_examples(raws, config: GeneratorConfig):
    """Run the pipeline over a corpus; returns ``(examples, rejections)``."""
    examples, rejections = [], []
    for raw in raws:
        out = build_example(raw, None, config)
        (rejections if isinstance(out, Rejection) else examples).append(out)
    return examples, rejections
