"""JSON-lines dataset files and the deterministic train/validation/test split."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from blockrec.data.records import QueryExample
from blockrec.errors import DatasetParseError

# 100k train, remaining 22k split equally
SPLIT_PROPORTIONS = (100, 11, 11)


def write_dataset(path, examples) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict()))
            fh.write("\n")


def read_dataset(path) -> list:
    examples = []
    with Path(path).open() as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                examples.append(QueryExample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetParseError(path, line_no, f"{type(exc).__name__}: {exc}") from exc
    return examples


def _split_key(query_id: int, seed: int) -> bytes:
    return hashlib.sha256(f"split:{seed}:{query_id}".encode()).digest()


def split_sizes(total: int, proportions=SPLIT_PROPORTIONS) -> tuple:
    whole = sum(proportions)
    n_train = round(total * proportions[0] / whole)
    n_val = round(total * proportions[1] / whole)
    return n_train, n_val, total - n_train - n_val


def split_dataset(examples, seed: int = 0, proportions=SPLIT_PROPORTIONS):
    """Split by hash order of query_id into (train, validation, test)."""
    ordered = sorted(examples, key=lambda ex: _split_key(ex.query_id, seed))
    n_train, n_val, _ = split_sizes(len(ordered), proportions)
    train = ordered[:n_train]
    val = ordered[n_train : n_train + n_val]
    test = ordered[n_train + n_val :]
    # restore corpus order inside each split
    key = {ex.query_id: i for i, ex in enumerate(examples)}
    return tuple(sorted(part, key=lambda ex: key[ex.query_id]) for part in (train, val, test))
