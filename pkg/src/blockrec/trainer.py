"""Training loop and the experiment matrix of objective combinations."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from blockrec import autodiff as ad
from blockrec import baseline
from blockrec import decoder as dec
from blockrec import encoder as enc
from blockrec import objectives as obj
from blockrec.autodiff import Adam, AdamConfig, ParamStore
from blockrec.errors import TrainingError
from blockrec.evaluation import MetricsReport, evaluate_predictions

logger = logging.getLogger(__name__)

POINTER_ROWS = ("ce", "ce+f1", "ce+f1+mrr", "ce+f1+div", "ce+f1+mrr+div")
MMR_ROWS = {"mmr(γ = 0.6)": 0.6, "mmr(γ = 1.0)": 1.0}
TABLE1_ROWS = POINTER_ROWS + tuple(MMR_ROWS)


@dataclass
class RunConfig:
    objectives: tuple = ("ce",)
    encoder: enc.EncoderConfig = field(default_factory=enc.EncoderConfig)
    decoder: dec.DecoderConfig = field(default_factory=dec.DecoderConfig)
    epochs: int = 5
    lr: float = 1e-3
    seed: int = 0
    temperature: float = 1.0
    # box constraint on s_i = log w_i^2; see train()
    log_weight_bounds: tuple = (-1.0, 5.0)
    classifier_epochs: int = 3
    data_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    report_path: Optional[str] = None

    def __post_init__(self):
        self.objectives = obj.parse_objectives(self.objectives)
        if isinstance(self.encoder, dict):
            self.encoder = enc.EncoderConfig(**self.encoder)
        if isinstance(self.decoder, dict):
            self.decoder = dec.DecoderConfig(**self.decoder)
        if self.decoder.d_e != self.encoder.d_e:
            raise ValueError(f"decoder.d_e={self.decoder.d_e} must equal encoder.d_e={self.encoder.d_e}")
        self.log_weight_bounds = tuple(self.log_weight_bounds)

    @property
    def rewards(self) -> tuple:
        return tuple(o for o in self.objectives if o in obj.REWARDS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objectives"] = list(self.objectives)
        d["log_weight_bounds"] = list(self.log_weight_bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown run config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def build_model(config: RunConfig) -> ParamStore:
    rng = np.random.default_rng(config.seed)
    store = ParamStore()
    enc.init_encoder(store, config.encoder, rng)
    dec.init_decoder(store, config.decoder, rng)
    obj.init_loss_weights(store, len(config.objectives))
    return store


def example_loss(example, store: ParamStore, config: RunConfig, rng=None):
    """Combined training loss for one query plus its named components."""
    embeddings = enc.encode_all(example, store)
    sample_rng = rng if config.rewards else None
    trace = dec.decode(embeddings, store, config.decoder, rng=sample_rng, temperature=config.temperature)
    labels = obj.Labels.from_example(example)
    parts = {"ce": obj.ce_loss(trace, labels)}
    if config.rewards:
        rewards = obj.compute_rewards(trace, labels)
        for name in config.rewards:
            parts[name] = obj.rl_loss(trace, rewards, name)
    ordered = [parts[o] for o in config.objectives]
    total = obj.combine_losses(ordered, store[obj.WEIGHTS_NAME])
    return total, parts, trace


def predict_blocks(examples, store: ParamStore, decoder_config: dec.DecoderConfig) -> list:
    blocks = []
    with ad.no_grad():
        for ex in examples:
            trace = dec.decode(enc.encode_all(ex, store), store, decoder_config)
            blocks.append(trace.final_pointers)
    return blocks


def mean_ce(examples, store: ParamStore, decoder_config: dec.DecoderConfig) -> float:
    vals = []
    with ad.no_grad():
        for ex in examples:
            trace = dec.decode(enc.encode_all(ex, store), store, decoder_config)
            vals.append(obj.ce_loss(trace, obj.Labels.from_example(ex)).item())
    return float(np.mean(vals))


def evaluate_model(examples, store, config: RunConfig, label: str = "") -> MetricsReport:
    blocks = predict_blocks(examples, store, config.decoder)
    return evaluate_predictions(examples, blocks, run_metadata(config, label))


def run_metadata(config: RunConfig, label: str = "") -> dict:
    return {
        "row": label or "+".join(config.objectives),
        "objectives": list(config.objectives),
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "mask_within_iteration": config.decoder.mask_within_iteration,
    }


@dataclass
class TrainResult:
    store: ParamStore
    log: list
    best_epoch: int
    best_val: Optional[dict]


def train(config: RunConfig, train_examples, val_examples=None, store: ParamStore | None = None) -> TrainResult:
    """One query per optimisation step; keeps the parameters of the epoch with
    the best validation recall (or the last epoch without validation data).

    The uncertainty weights ``s`` are projected back onto
    ``config.log_weight_bounds`` after every step. The policy-gradient
    surrogates are usually negative, and for a negative loss the weighting term
    is unbounded below in ``s``.
    """
    store = store or build_model(config)
    opt = Adam(store, AdamConfig(lr=config.lr))
    rng = np.random.default_rng([config.seed, 1])
    lo, hi = config.log_weight_bounds
    weights = store[obj.WEIGHTS_NAME]
    log = []
    best_key, best_snap, best_epoch, best_val = None, None, -1, None
    last_finite = {}
    for epoch in range(config.epochs):
        sums = {o: 0.0 for o in config.objectives}
        iters = 0
        for i in rng.permutation(len(train_examples)):
            ex = train_examples[i]
            store.zero_grad()
            total, parts, trace = example_loss(ex, store, config, rng)
            values = {k: v.item() for k, v in parts.items()}
            if not math.isfinite(total.item()) or not all(map(math.isfinite, values.values())):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, query {ex.query_id}: {values}; "
                    f"last finite: {last_finite}"
                )
            last_finite = values
            total.backward()
            opt.step()
            np.clip(weights.data, lo, hi, out=weights.data)
            for k, v in values.items():
                sums[k] += v
            iters += trace.iterations_used
        n = max(len(train_examples), 1)
        entry = {
            "epoch": epoch,
            "train": {k: v / n for k, v in sums.items()},
            "mean_iterations": iters / n,
            "loss_weights": weights.data.tolist(),
        }
        if val_examples:
            report = evaluate_model(val_examples, store, config)
            entry["validation"] = report.row()
            key = report.recall
        else:
            key = epoch
        if best_key is None or key > best_key:
            best_key, best_snap, best_epoch = key, store.snapshot(), epoch
            best_val = entry.get("validation")
        logger.info("epoch %d %s", epoch, entry)
        log.append(entry)
    store.restore(best_snap)
    if config.checkpoint_path:
        store.save(config.checkpoint_path, metadata={"run_config": config.to_dict(), "best_epoch": best_epoch})
    return TrainResult(store=store, log=log, best_epoch=best_epoch, best_val=best_val)


def train_mmr_classifier(config: RunConfig, train_examples) -> ParamStore:
    store = baseline.init_classifier(config.encoder, seed=config.seed)
    baseline.train_classifier(
        train_examples,
        store,
        baseline.ClassifierConfig(epochs=config.classifier_epochs, lr=config.lr, seed=config.seed),
    )
    return store


def evaluate_mmr(examples, store: ParamStore, gamma: float, metadata: dict | None = None) -> MetricsReport:
    cfg = baseline.MmrConfig(gamma=gamma)
    blocks = [baseline.predict_block(ex, store, cfg) for ex in examples]
    return evaluate_predictions(examples, blocks, metadata)


@dataclass
class MatrixReport:
    rows: dict  # row name -> metrics dict, or {"error": message}
    metadata: dict = field(default_factory=dict)

    def table(self) -> str:
        header = f"{'Objectives':<16}{'Div Score':>11}{'Recall':>10}{'P@1':>10}{'EM':>10}"
        lines = [header, "-" * len(header)]
        for name, row in self.rows.items():
            if "error" in row:
                lines.append(f"{name:<16}  FAILED: {row['error']}")
            else:
                lines.append(
                    f"{name:<16}{row['div_score']:>11.5f}{row['recall']:>10.5f}"
                    f"{row['p_at_1']:>10.5f}{row['em']:>10.5f}"
                )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "metadata": self.metadata}

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False))


def run_matrix(
    base: RunConfig,
    train_examples,
    val_examples,
    test_examples,
    rows=TABLE1_ROWS,
) -> MatrixReport:
    """Train/evaluate every requested Table-1 row on a shared dataset split.

    Pointer rows share ``base`` (hence the same initialisation seed) and differ
    only in their objective set; MMR rows share one classifier. A failing row
    is recorded with its error instead of aborting the matrix.
    """
    out: dict = {}
    classifier = None
    for name in rows:
        try:
            if name in MMR_ROWS:
                if classifier is None:
                    classifier = train_mmr_classifier(base, train_examples)
                meta = {"row": name, "gamma": MMR_ROWS[name], "seed": base.seed}
                out[name] = evaluate_mmr(test_examples, classifier, MMR_ROWS[name], meta).row()
            elif name in POINTER_ROWS:
                cfg = RunConfig.from_dict({**base.to_dict(), "objectives": name.split("+"), "checkpoint_path": None})
                result = train(cfg, train_examples, val_examples)
                out[name] = evaluate_model(test_examples, result.store, cfg, name).row()
            else:
                raise ValueError(f"unknown matrix row {name!r}")
        except Exception as exc:  # noqa: BLE001 - a failed row must not sink the others
            logger.exception("matrix row %s failed", name)
            out[name] = {"error": f"{type(exc).__name__}: {exc}"}
    meta = {"seed": base.seed, "config_hash": base.config_hash(), "base_config": base.to_dict()}
    return MatrixReport(rows=out, metadata=meta)
