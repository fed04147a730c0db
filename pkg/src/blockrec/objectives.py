"""Training objectives: per-iteration cross-entropy, block rewards, the
self-critic policy-gradient loss and uncertainty-weighted loss combination."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from blockrec import autodiff as ad
from blockrec.autodiff import ParamStore, Tensor
from blockrec.decoder import DecodeTrace
from blockrec.errors import ContractError

OBJECTIVES = ("ce", "f1", "div", "mrr")
REWARDS = ("f1", "div", "mrr")
WEIGHTS_NAME = "loss_weights.s"


@dataclass
class Labels:
    y: np.ndarray  # gold candidate indices, best first
    clusters: np.ndarray  # cluster id of every candidate
    ranks: np.ndarray  # within-cluster rank of every candidate

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(set(self.y.tolist())) != len(self.y):
            raise ContractError(f"gold indices must be distinct, got {self.y.tolist()}")
        n = len(self.clusters)
        if np.any(self.y < 0) or np.any(self.y >= n):
            raise ContractError(f"gold indices {self.y.tolist()} out of range for {n} candidates")

    @property
    def y_clusters(self) -> np.ndarray:
        return self.clusters[self.y]

    @property
    def y_ranks(self) -> np.ndarray:
        return self.ranks[self.y]

    @classmethod
    def from_example(cls, example) -> "Labels":
        return cls(y=example.label_indices, clusters=example.cluster_ids, ranks=example.ranks)


def reward_overlap(y, yp) -> float:
    """|Y & Y_p| / |Y| with set semantics (duplicate predictions count once)."""
    y = [int(i) for i in y]
    return len(set(y) & {int(i) for i in yp}) / len(y)


def reward_diversity(yp_clusters) -> float:
    """Distinct clusters among the predictions over the number of predictions."""
    yp_clusters = [int(c) for c in yp_clusters]
    return len(set(yp_clusters)) / len(yp_clusters)


def reward_mrr(yp_ranks) -> float:
    total = 0.0
    for r in yp_ranks:
        if r < 1:
            raise ContractError(f"within-cluster ranks start at 1, got {r}")
        total += 1.0 / r
    return total


def block_rewards(pointers, labels: Labels) -> dict:
    idx = np.asarray(pointers, dtype=np.int64)
    return {
        "f1": reward_overlap(labels.y, idx),
        "div": reward_diversity(labels.clusters[idx]),
        "mrr": reward_mrr(labels.ranks[idx]),
    }


@dataclass
class RewardBundle:
    """Rewards of the sampled block at each decode step, and of the final greedy block."""

    per_step: list = field(default_factory=list)  # one {"f1","div","mrr"} dict per step
    baseline: dict = field(default_factory=dict)

    def advantages(self, which: str) -> np.ndarray:
        return np.array([r[which] - self.baseline[which] for r in self.per_step])


def compute_rewards(trace: DecodeTrace, labels: Labels) -> RewardBundle:
    if any(s is None for s in trace.sampled):
        raise ContractError("trace carries no sampled pointers; decode with an rng")
    return RewardBundle(
        per_step=[block_rewards(s, labels) for s in trace.sampled],
        baseline=block_rewards(trace.final_pointers, labels),
    )


def ce_loss(trace: DecodeTrace, labels: Labels) -> Tensor:
    """Sum over iterations and pointers of -log softmax(scores_k)[y_k]."""
    if not trace.iterations:
        raise ContractError("empty decode trace")
    total = None
    for it in trace.iterations:
        step = ad.softmax_cross_entropy(it.scores, labels.y)
        total = step if total is None else ad.add(total, step)
    return total


def rl_loss(trace: DecodeTrace, rewards: RewardBundle, which: str) -> Tensor:
    """Self-critic REINFORCE surrogate.

    ``-(1/T) * sum_t (R_t - R_greedy) * log pi(sampled block at t)``; the
    advantage is a constant, gradients flow only through the log-probabilities.
    """
    if which not in REWARDS:
        raise ContractError(f"unknown reward {which!r}; expected one of {REWARDS}")
    its = trace.iterations
    if any(it.sample_logprob is None for it in its):
        raise ContractError("rl_loss needs the log-probabilities of sampled pointers")
    adv = rewards.advantages(which)
    if len(adv) != len(its):
        raise ContractError(f"{len(adv)} reward steps for {len(its)} decode steps")
    total = None
    for a, it in zip(adv, its):
        term = ad.scale(it.sample_logprob, float(a))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, -1.0 / len(its))


def init_loss_weights(store: ParamStore, count: int) -> Tensor:
    """Trainable log-variances ``s_i = log w_i^2``, initialised at 0 (w_i = 1)."""
    return store.add(WEIGHTS_NAME, np.zeros(count))


def combine_losses(losses, s: Tensor) -> Tensor:
    """``sum_i exp(-s_i)/2 * l_i + s_i`` with ``s_i = log w_i^2``."""
    losses = list(losses)
    if len(losses) != s.shape[0]:
        raise ContractError(f"{len(losses)} losses but {s.shape[0]} weights")
    stacked = ad.stack([ad.reshape(l, ()) if l.shape != () else l for l in losses])
    precision = ad.scale(ad.exp(ad.scale(s, -1.0)), 0.5)
    return ad.sum(ad.add(ad.mul(precision, stacked), s))


def parse_objectives(spec) -> tuple:
    """Normalise ``"ce+f1+div"`` or an iterable of names into canonical order."""
    names = spec.split("+") if isinstance(spec, str) else list(spec)
    names = [n.strip() for n in names if n.strip()]
    unknown = set(names) - set(OBJECTIVES)
    if unknown:
        raise ValueError(f"unknown objectives {sorted(unknown)}; choose from {OBJECTIVES}")
    if "ce" not in names:
        raise ValueError("the objective set must contain 'ce'")
    return tuple(o for o in OBJECTIVES if o in names)
