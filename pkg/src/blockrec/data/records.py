"""Record types for raw click logs and pipeline-built training examples."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NUM_LABELS = 4


@dataclass
class RawSuggestion:
    suggestion_id: int
    features: np.ndarray
    click_rate: float
    cooccurrence_count: int
    latent_cluster: int


@dataclass
class RawQueryLog:
    query_id: int
    query_features: np.ndarray
    impressions: int
    candidates: list


@dataclass
class SuggestionRecord:
    suggestion_id: int
    features: np.ndarray
    click_rate: float
    cooccurrence_count: int
    cluster_id: int
    rank_in_cluster: int


@dataclass
class Rejection:
    query_id: int
    reason: str


@dataclass
class QueryExample:
    """One query, its candidate pool and the gold ordered block of 4 ids.

    Invariants are checked on construction; a violation raises ``ValueError``.
    """

    query_id: int
    query_features: np.ndarray
    impressions: int
    candidates: list
    labels: list
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.query_features = np.asarray(self.query_features, dtype=np.float64)
        self.labels = [int(x) for x in self.labels]
        self.validate()

    @property
    def n(self) -> int:
        return len(self.candidates)

    def validate(self) -> None:
        if self.n < NUM_LABELS:
            raise ValueError(f"query {self.query_id}: {self.n} candidates, need >= {NUM_LABELS}")
        if len(self.labels) != NUM_LABELS or len(set(self.labels)) != NUM_LABELS:
            raise ValueError(f"query {self.query_id}: labels must be {NUM_LABELS} distinct ids")
        by_id = {c.suggestion_id: c for c in self.candidates}
        if len(by_id) != self.n:
            raise ValueError(f"query {self.query_id}: duplicate suggestion ids")
        missing = [y for y in self.labels if y not in by_id]
        if missing:
            raise ValueError(f"query {self.query_id}: labels {missing} not among candidates")
        clicks = [by_id[y].click_rate for y in self.labels]
        if any(a < b for a, b in zip(clicks, clicks[1:])):
            raise ValueError(f"query {self.query_id}: labels not ordered by click rate")
        if len({by_id[y].cluster_id for y in self.labels}) != NUM_LABELS:
            raise ValueError(f"query {self.query_id}: labels share a cluster")
        groups: dict = {}
        for c in self.candidates:
            groups.setdefault(c.cluster_id, []).append(c.rank_in_cluster)
        for cid, ranks in groups.items():
            if sorted(ranks) != list(range(1, len(ranks) + 1)):
                raise ValueError(f"query {self.query_id}: cluster {cid} ranks {sorted(ranks)} not 1..m")

    # array views used by the models; cached because examples are revisited every epoch

    def index_of(self, suggestion_id: int) -> int:
        ids = self._cache.get("ids")
        if ids is None:
            ids = self._cache["ids"] = {c.suggestion_id: i for i, c in enumerate(self.candidates)}
        return ids[suggestion_id]

    @property
    def label_indices(self) -> np.ndarray:
        if "y" not in self._cache:
            self._cache["y"] = np.array([self.index_of(y) for y in self.labels], dtype=np.int64)
        return self._cache["y"]

    @property
    def feature_matrix(self) -> np.ndarray:
        if "x" not in self._cache:
            self._cache["x"] = np.stack([c.features for c in self.candidates]).astype(np.float64)
        return self._cache["x"]

    @property
    def cluster_ids(self) -> np.ndarray:
        if "c" not in self._cache:
            self._cache["c"] = np.array([c.cluster_id for c in self.candidates], dtype=np.int64)
        return self._cache["c"]

    @property
    def ranks(self) -> np.ndarray:
        if "r" not in self._cache:
            self._cache["r"] = np.array([c.rank_in_cluster for c in self.candidates], dtype=np.int64)
        return self._cache["r"]

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "query_features": self.query_features.tolist(),
            "impressions": self.impressions,
            "candidates": [
                {
                    "suggestion_id": c.suggestion_id,
                    "features": np.asarray(c.features).tolist(),
                    "click_rate": c.click_rate,
                    "cooccurrence_count": c.cooccurrence_count,
                    "cluster_id": c.cluster_id,
                    "rank_in_cluster": c.rank_in_cluster,
                }
                for c in self.candidates
            ],
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryExample":
        cands = [
            SuggestionRecord(
                suggestion_id=int(c["suggestion_id"]),
                features=np.asarray(c["features"], dtype=np.float64),
                click_rate=float(c["click_rate"]),
                cooccurrence_count=int(c["cooccurrence_count"]),
                cluster_id=int(c["cluster_id"]),
                rank_in_cluster=int(c["rank_in_cluster"]),
            )
            for c in d["candidates"]
        ]
        return cls(
            query_id=int(d["query_id"]),
            query_features=np.asarray(d["query_features"], dtype=np.float64),
            impressions=int(d["impressions"]),
            candidates=cands,
            labels=[int(x) for x in d["labels"]],
        )
