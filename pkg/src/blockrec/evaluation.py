"""Block-level test metrics: Div Score, Recall, P@1 and Exact Match."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from blockrec.errors import ContractError

METRIC_NAMES = ("div_score", "recall", "p_at_1", "em")


@dataclass
class PredictionRecord:
    query_id: int
    yp: tuple  # predicted candidate indices, in block order
    yp_clusters: tuple
    yp_ranks: tuple

    @classmethod
    def from_pointers(cls, example, pointers) -> "PredictionRecord":
        idx = np.asarray(pointers, dtype=np.int64)
        n = example.n
        if np.any(idx < 0) or np.any(idx >= n):
            raise ContractError(f"query {example.query_id}: pointers {idx.tolist()} outside [0, {n})")
        return cls(
            query_id=example.query_id,
            yp=tuple(int(i) for i in idx),
            yp_clusters=tuple(int(c) for c in example.cluster_ids[idx]),
            yp_ranks=tuple(int(r) for r in example.ranks[idx]),
        )


def query_metrics(pred: PredictionRecord, gold) -> dict:
    """Per-query metrics against the ordered gold indices ``gold``."""
    y = [int(i) for i in gold]
    yp = list(pred.yp)
    return {
        "div_score": len(set(pred.yp_clusters)) / len(pred.yp_clusters),
        "recall": len(set(y) & set(yp)) / len(y),
        "p_at_1": float(yp[0] == y[0]),
        "em": float(yp == y),
    }


@dataclass
class MetricsReport:
    div_score: float
    recall: float
    p_at_1: float
    em: float
    per_query: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {m: getattr(self, m) for m in METRIC_NAMES}

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "MetricsReport":
        return cls(**json.loads(Path(path).read_text()))


def aggregate(records, metadata: dict | None = None) -> MetricsReport:
    """Unweighted means over per-query metric dicts (each carrying ``query_id``)."""
    records = list(records)
    if not records:
        raise ContractError("cannot aggregate an empty prediction set")
    means = {m: float(np.mean([r[m] for r in records])) for m in METRIC_NAMES}
    return MetricsReport(**means, per_query=records, metadata=dict(metadata or {}))


def evaluate_predictions(examples, pointer_blocks, metadata: dict | None = None) -> MetricsReport:
    rows = []
    for ex, pointers in zip(examples, pointer_blocks):
        pred = PredictionRecord.from_pointers(ex, pointers)
        rows.append({"query_id": ex.query_id, **query_metrics(pred, ex.label_indices)})
    return aggregate(rows, metadata)
