"""Iterative four-pointer decoder.

Each iteration feeds the embeddings of the four previously selected
candidates through an LSTM, then scores every candidate once per pointer with
a separate highway-maxout network (HMN). Pointers are the per-head argmaxes;
iterations stop when the pointer 4-tuple repeats or the cap is hit.

HMN for pointer k, on candidate embedding ``e_t``::

    r   = tanh([h; e_p1; e_p2; e_p3; e_p4] U + bU)
    m1  = maxout([e_t; r] W1 + b1)
    t   = maxout(m1 W2 + b2)
    g   = sigmoid(m1 Wg + bg)
    m2  = m1 + g * (t - m1)            # highway: gate between transform and carry
    out = maxout([m1; m2] W3 + b3)     # pool p -> one scalar

The four heads are evaluated together with batched products over stacked
per-head weights; every head still owns separate parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from blockrec import autodiff as ad
from blockrec.autodiff import ParamStore, Tensor
from blockrec.errors import ContractError, DimensionError

PREFIX = "decoder."
NUM_POINTERS = 4
HMN_BLOCKS = ("U", "bU", "W1e", "W1r", "b1", "W2", "b2", "Wg", "bg", "W3", "b3")


@dataclass
class DecoderConfig:
    d_e: int = 32
    lstm_hidden_dim: int = 32
    hmn_hidden_dim: int = 32
    maxout_pool: int = 4
    max_iterations: int = 8
    mask_within_iteration: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.maxout_pool < 1:
            raise ValueError("maxout_pool must be >= 1")


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    prev_pointers: Optional[tuple]
    prev_embeddings: Tensor  # concatenated [e_p1; e_p2; e_p3; e_p4]


@dataclass
class Iteration:
    scores: Tensor  # [4, n]; row k scores every candidate for pointer k
    pointers: tuple
    sampled: Optional[tuple] = None
    sample_logprob: Optional[Tensor] = None  # sum over pointers of log pi(sampled)

    @property
    def alpha(self) -> np.ndarray:
        """Scores as an ``n x 4`` matrix (column k belongs to pointer k)."""
        return self.scores.data.T


@dataclass
class DecodeTrace:
    iterations: list = field(default_factory=list)

    @property
    def iterations_used(self) -> int:
        return len(self.iterations)

    @property
    def final_pointers(self) -> tuple:
        return self.iterations[-1].pointers

    @property
    def sampled(self) -> list:
        return [it.sampled for it in self.iterations]


def hmn_name(k: int, block: str) -> str:
    return f"{PREFIX}hmn{k}.{block}"


def init_decoder(store: ParamStore, config: DecoderConfig, rng: np.random.Generator) -> None:
    H, d_e, d_m, p = config.lstm_hidden_dim, config.d_e, config.hmn_hidden_dim, config.maxout_pool
    lstm_in = NUM_POINTERS * d_e
    store.add(PREFIX + "lstm.weight", ad.glorot(rng, lstm_in + H, 4 * H))
    bias = np.zeros(4 * H)
    bias[H : 2 * H] = 1.0  # forget-gate bias
    store.add(PREFIX + "lstm.bias", bias)
    for k in range(NUM_POINTERS):
        store.add(hmn_name(k, "U"), ad.glorot(rng, H + lstm_in, d_m))
        store.add(hmn_name(k, "bU"), np.zeros(d_m))
        store.add(hmn_name(k, "W1e"), ad.glorot(rng, d_e + d_m, d_m * p, (d_e, d_m * p)))
        store.add(hmn_name(k, "W1r"), ad.glorot(rng, d_e + d_m, d_m * p, (d_m, d_m * p)))
        store.add(hmn_name(k, "b1"), np.zeros(d_m * p))
        store.add(hmn_name(k, "W2"), ad.glorot(rng, d_m, d_m * p))
        store.add(hmn_name(k, "b2"), np.zeros(d_m * p))
        store.add(hmn_name(k, "Wg"), ad.glorot(rng, d_m, d_m))
        store.add(hmn_name(k, "bg"), np.zeros(d_m))
        store.add(hmn_name(k, "W3"), ad.glorot(rng, 2 * d_m, p))
        store.add(hmn_name(k, "b3"), np.zeros(p))


def initial_state(config: DecoderConfig) -> DecoderState:
    H = config.lstm_hidden_dim
    return DecoderState(
        h=Tensor(np.zeros(H)),
        c=Tensor(np.zeros(H)),
        prev_pointers=None,
        prev_embeddings=Tensor(np.zeros(NUM_POINTERS * config.d_e)),
    )


class _Prepared:
    """Per-decode constants: stacked head weights and the state-free e_t term."""

    def __init__(self, embeddings: Tensor, store: ParamStore, config: DecoderConfig):
        n, d_e = embeddings.shape
        if d_e != config.d_e:
            raise DimensionError(f"embeddings have width {d_e}, decoder expects {config.d_e}")
        if n < NUM_POINTERS:
            raise ContractError(f"decoding needs at least {NUM_POINTERS} candidates, got {n}")
        self.n = n
        self.embeddings = embeddings
        self.config = config
        self.lstm_w = store[PREFIX + "lstm.weight"]
        self.lstm_b = store[PREFIX + "lstm.bias"]

        def stacked(block, as_bias=False):
            t = ad.stack([store[hmn_name(k, block)] for k in range(NUM_POINTERS)])
            return ad.reshape(t, (NUM_POINTERS, 1, t.shape[1])) if as_bias else t

        self.U, self.bU = stacked("U"), stacked("bU", True)
        self.W1r, self.b1 = stacked("W1r"), stacked("b1", True)
        self.W2, self.b2 = stacked("W2"), stacked("b2", True)
        self.Wg, self.bg = stacked("Wg"), stacked("bg", True)
        self.W3, self.b3 = stacked("W3"), stacked("b3", True)
        tiled = ad.stack([embeddings] * NUM_POINTERS)
        self.e_term = ad.bmm(tiled, stacked("W1e"))  # [4, n, d_m * p]


def _hmn_scores(prep: _Prepared, h: Tensor, prev_embeddings: Tensor) -> Tensor:
    p = prep.config.maxout_pool
    u = ad.concat([h, prev_embeddings])
    u4 = ad.reshape(ad.stack([u] * NUM_POINTERS), (NUM_POINTERS, 1, u.shape[0]))
    r = ad.tanh(ad.add_bias(ad.bmm(u4, prep.U), prep.bU))  # [4, 1, d_m]
    r_term = ad.add_bias(ad.bmm(r, prep.W1r), prep.b1)  # [4, 1, d_m * p]
    m1 = ad.maxout(ad.add_bias(prep.e_term, r_term), p)  # [4, n, d_m]
    t = ad.maxout(ad.add_bias(ad.bmm(m1, prep.W2), prep.b2), p)
    g = ad.sigmoid(ad.add_bias(ad.bmm(m1, prep.Wg), prep.bg))
    m2 = ad.add(m1, ad.mul(g, ad.sub(t, m1)))
    out = ad.maxout(ad.add_bias(ad.bmm(ad.concat([m1, m2], axis=2), prep.W3), prep.b3), p)
    return ad.reshape(out, (NUM_POINTERS, prep.n))


def hmn_score(e_t, state: DecoderState, store: ParamStore, k: int, config: DecoderConfig) -> Tensor:
    """Score of one candidate embedding for pointer ``k`` (unbatched reference path).

    ``state.h`` must already be the updated LSTM state of the iteration.
    """
    e_t = e_t if isinstance(e_t, Tensor) else Tensor(e_t)
    if e_t.shape != (config.d_e,):
        raise DimensionError(f"e_t has shape {e_t.shape}, expected ({config.d_e},)")
    p = config.maxout_pool
    P = lambda block: store[hmn_name(k, block)]  # noqa: E731
    r = ad.tanh(ad.add(ad.matmul(ad.concat([state.h, state.prev_embeddings]), P("U")), P("bU")))
    pre1 = ad.add(ad.add(ad.matmul(e_t, P("W1e")), ad.matmul(r, P("W1r"))), P("b1"))
    m1 = ad.maxout(pre1, p)
    t = ad.maxout(ad.add(ad.matmul(m1, P("W2")), P("b2")), p)
    g = ad.sigmoid(ad.add(ad.matmul(m1, P("Wg")), P("bg")))
    m2 = ad.add(m1, ad.mul(g, ad.sub(t, m1)))
    out = ad.maxout(ad.add(ad.matmul(ad.concat([m1, m2]), P("W3")), P("b3")), p)
    return ad.reshape(out, ())


def greedy_pointers(scores: np.ndarray, mask_within_iteration: bool = False) -> tuple:
    """Row-wise argmax, lowest index on ties; optionally excluding earlier picks."""
    if not mask_within_iteration:
        return tuple(int(i) for i in scores.argmax(axis=1))
    chosen = []
    for k in range(scores.shape[0]):
        row = scores[k].copy()
        row[chosen] = -np.inf
        chosen.append(int(row.argmax()))
    return tuple(chosen)


def sample_pointers(scores: Tensor, temperature: float, rng: np.random.Generator, mask_within_iteration: bool = False):
    """Draw one index per pointer from ``softmax(scores[k] / temperature)``.

    Pointers are drawn independently unless ``mask_within_iteration`` is set,
    in which case pointer k draws from the candidates not yet taken by
    pointers 1..k-1 (renormalised), mirroring the masked greedy rule.

    Returns ``(indices, logprob)`` where ``logprob`` is the differentiable sum of
    the log-probabilities of the drawn indices.
    """
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    if not np.all(np.isfinite(scores.data)):
        raise ContractError("cannot sample from non-finite scores")
    logits = scores if temperature == 1.0 else ad.scale(scores, 1.0 / temperature)
    if mask_within_iteration:
        return _sample_masked(logits, rng)
    probs = ad.softmax(logits.data)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = np.array([_draw(cdf[k], u[k]) for k in range(len(u))])
    logprob = ad.scale(ad.softmax_cross_entropy(logits, idx), -1.0)
    return tuple(int(i) for i in idx), logprob


def _draw(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.shape[0] - 1)


def _sample_masked(logits: Tensor, rng: np.random.Generator):
    n = logits.shape[1]
    chosen, nll = [], None
    u = rng.random(logits.shape[0])
    for k in range(logits.shape[0]):
        allowed = np.array([t for t in range(n) if t not in chosen])
        sub = ad.take(ad.take(logits, k), allowed)
        cdf = np.cumsum(ad.softmax(sub.data))
        j = _draw(cdf, u[k] * cdf[-1])
        chosen.append(int(allowed[j]))
        step = ad.softmax_cross_entropy(sub, j)
        nll = step if nll is None else ad.add(nll, step)
    return tuple(chosen), ad.scale(nll, -1.0)


def decode_step(prep_or_embeddings, state: DecoderState, store: ParamStore, config: DecoderConfig):
    """One decoder iteration: returns ``(scores [4, n], pointers, new_state)``."""
    prep = (
        prep_or_embeddings
        if isinstance(prep_or_embeddings, _Prepared)
        else _Prepared(prep_or_embeddings, store, config)
    )
    h, c = ad.lstm_cell(state.prev_embeddings, state.h, state.c, prep.lstm_w, prep.lstm_b)
    scores = _hmn_scores(prep, h, state.prev_embeddings)
    pointers = greedy_pointers(scores.data, config.mask_within_iteration)
    chosen = ad.reshape(ad.take(prep.embeddings, np.array(pointers)), (NUM_POINTERS * config.d_e,))
    return scores, pointers, DecoderState(h=h, c=c, prev_pointers=pointers, prev_embeddings=chosen)


def decode(
    embeddings: Tensor,
    store: ParamStore,
    config: DecoderConfig,
    rng: Optional[np.random.Generator] = None,
    temperature: float = 1.0,
) -> DecodeTrace:
    """Run the iterative decoder from the zero state.

    With ``rng`` given, pointers are additionally sampled from every
    iteration's scores (the greedy pointers still drive the state).
    """
    prep = _Prepared(embeddings, store, config)
    state = initial_state(config)
    trace = DecodeTrace()
    for _ in range(config.max_iterations):
        previous = state.prev_pointers
        scores, pointers, state = decode_step(prep, state, store, config)
        it = Iteration(scores=scores, pointers=pointers)
        if rng is not None:
            it.sampled, it.sample_logprob = sample_pointers(scores, temperature, rng, config.mask_within_iteration)
        trace.iterations.append(it)
        if pointers == previous:
            break
    return trace
