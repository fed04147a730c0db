"""Synthetic click-log corpora.

Each query gets a random feature vector and a handful of latent intent
clusters placed at a fixed distance from it. Candidates scatter around their
cluster centre. The click rate of a candidate is a logistic function of

* the popularity of its cluster, which is a fixed linear function of the
  cluster's direction from the query (so a model can learn it from features),
* its distance to the query (closer is better),
* optional Gaussian noise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from blockrec.data.records import RawQueryLog, RawSuggestion


@dataclass
class GeneratorConfig:
    num_queries: int = 2000
    mean_candidates_per_query: float = 30.0
    d_raw: int = 32
    k: int = 8
    latent_clusters: int | None = None  # defaults to k
    min_cooccurrence: int = 2
    min_impressions: int = 100
    click_noise: float = 0.3
    separation: float = 8.0  # cluster-centre distance from the query, in units of sigma
    sigma: float = 1.0
    popularity_scale: float = 1.0
    proximity_weight: float = 0.5
    click_bias: float = -1.0
    cooccurrence_mean: float = 8.0
    impressions_log_mean: float = float(np.log(1000.0))
    impressions_log_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_queries", "d_raw", "k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mean_candidates_per_query <= 0:
            raise ValueError("mean_candidates_per_query must be positive")
        if self.k < 4:
            raise ValueError("k must be >= 4: the label block needs 4 distinct clusters")
        if self.latent_clusters is not None and self.latent_clusters < 1:
            raise ValueError("latent_clusters must be positive")

    @property
    def num_latent(self) -> int:
        return self.latent_clusters or self.k

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator config keys {sorted(unknown)}")
        return cls(**d)


def _unit(rng, d, size=None):
    v = rng.standard_normal((size, d) if size else d)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def generate_corpus(config: GeneratorConfig) -> list:
    """Raw per-query logs; deterministic in ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    d = config.d_raw
    popularity_axis = _unit(rng, d)
    logs = []
    next_id = 0
    for qid in range(config.num_queries):
        q = rng.standard_normal(d)
        m = config.num_latent
        directions = _unit(rng, d, m)
        centres = q + config.separation * config.sigma * directions
        popularity = config.popularity_scale * np.sqrt(d) * (directions @ popularity_axis)

        n = max(config.k, int(rng.poisson(config.mean_candidates_per_query)))
        membership = rng.integers(m, size=n)
        feats = centres[membership] + config.sigma * rng.standard_normal((n, d))
        # distance offset by the centre radius so click rates stay in a readable range
        dist = np.linalg.norm(feats - q, axis=1) / config.sigma - config.separation
        logit = config.click_bias + popularity[membership] - config.proximity_weight * dist
        if config.click_noise > 0:
            logit = logit + config.click_noise * rng.standard_normal(n)
        clicks = 1.0 / (1.0 + np.exp(-logit))
        cooc = rng.poisson(config.cooccurrence_mean, size=n)
        impressions = int(rng.lognormal(config.impressions_log_mean, config.impressions_log_sd))

        candidates = [
            RawSuggestion(
                suggestion_id=next_id + j,
                features=feats[j],
                click_rate=float(clicks[j]),
                cooccurrence_count=int(cooc[j]),
                latent_cluster=int(membership[j]),
            )
            for j in range(n)
        ]
        next_id += n
        logs.append(RawQueryLog(query_id=qid, query_features=q, impressions=impressions, candidates=candidates))
    return logs
