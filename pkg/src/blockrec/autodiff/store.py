"""Named parameter storage, Adam, and binary-safe JSON checkpoints."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from blockrec.autodiff.tensor import Tensor
from blockrec.errors import CheckpointError, ContractError

CHECKPOINT_FORMAT_VERSION = 1


class ParamStore:
    """Ordered mapping of unique names to trainable tensors."""

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._entries:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def names(self, prefix: str = "") -> list:
        return [n for n in self._entries if n.startswith(prefix)]

    @property
    def grads(self) -> dict:
        return {n: t.grad for n, t in self._entries.items()}

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = np.zeros_like(t.data)

    def snapshot(self) -> dict:
        return {n: t.data.copy() for n, t in self._entries.items()}

    def restore(self, snap: dict) -> None:
        for n, arr in snap.items():
            self._entries[n].data = arr.copy()

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self._entries.values()))

    # -- checkpoints -------------------------------------------------------

    def to_manifest(self, metadata: dict | None = None) -> dict:
        records = []
        for name, t in self._entries.items():
            raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
            records.append(
                {
                    "name": name,
                    "shape": list(t.shape),
                    "values": base64.b64encode(raw).decode("ascii"),
                }
            )
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "metadata": metadata or {},
            "params": records,
        }

    def save(self, path, metadata: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_manifest(metadata)))

    def load_manifest(self, manifest: dict) -> dict:
        version = manifest.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {version!r}")
        seen = set()
        for rec in manifest["params"]:
            name, shape = rec["name"], tuple(rec["shape"])
            if name not in self._entries:
                raise CheckpointError(f"checkpoint has unknown parameter {name!r}")
            target = self._entries[name]
            if target.shape != shape:
                raise CheckpointError(
                    f"shape mismatch for {name!r}: checkpoint {shape}, store {target.shape}"
                )
            values = np.frombuffer(base64.b64decode(rec["values"]), dtype="<f8")
            if values.size != int(np.prod(shape)):
                raise CheckpointError(f"{name!r}: {values.size} values for shape {shape}")
            target.data = values.reshape(shape).astype(np.float64)
            seen.add(name)
        missing = set(self._entries) - seen
        if missing:
            raise CheckpointError(f"checkpoint lacks parameters {sorted(missing)}")
        return manifest.get("metadata", {})

    def load(self, path) -> dict:
        return self.load_manifest(json.loads(Path(path).read_text()))


def read_checkpoint_metadata(path) -> dict:
    return json.loads(Path(path).read_text()).get("metadata", {})


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Bias-corrected Adam over every entry of a ParamStore."""

    def __init__(self, store: ParamStore, config: AdamConfig | None = None):
        self.store = store
        self.config = config or AdamConfig()
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in store.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in store.items()}

    def step(self) -> None:
        cfg = self.config
        for name, p in self.store.items():
            if p.grad is None:
                raise ContractError(f"no gradient for parameter {name!r}")
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, p in self.store.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p.data = p.data - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def adam_step(store: ParamStore, optimizer: Adam) -> None:
    optimizer.step()
