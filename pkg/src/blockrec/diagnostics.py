"""Finite-difference gradient suite shared by the CLI and the test-suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from blockrec import autodiff as ad
from blockrec import decoder as dec
from blockrec import encoder as enc
from blockrec import objectives as obj
from blockrec.autodiff import ParamStore, Tensor, numeric_gradient, relative_error
from blockrec.data import QueryExample, SuggestionRecord

GRAD_TOL = 1e-3


@dataclass
class GradResult:
    name: str
    rel_error: float

    @property
    def ok(self) -> bool:
        return self.rel_error <= GRAD_TOL


def _check(name, f, params) -> GradResult:
    worst = 0.0
    for p in params:
        p.grad = None
        f().backward()
        worst = max(worst, relative_error(p.grad, numeric_gradient(f, p)))
    return GradResult(name, worst)


def _op_cases(rng):
    def leaf(*shape):
        return Tensor(rng.uniform(-1.5, 1.5, size=shape), requires_grad=True)

    w = Tensor(rng.normal(size=(3, 4)))  # fixed projection to make outputs scalar
    x, y = leaf(3, 4), leaf(3, 4)
    m, v = leaf(4, 2), leaf(4)
    b1, b2 = leaf(2, 3, 4), leaf(2, 4, 2)
    z = leaf(3, 8)
    logits, rows = leaf(6), leaf(3, 5)
    h, c = leaf(3), leaf(3)
    lw, lb = leaf(4 + 3, 12), leaf(12)
    inp = leaf(4)

    def dot(t):
        return ad.sum(ad.mul(t, w))

    return [
        ("add", lambda: dot(ad.add(x, y)), [x, y]),
        ("sub", lambda: dot(ad.sub(x, y)), [x, y]),
        ("mul", lambda: dot(ad.mul(x, y)), [x, y]),
        ("scale", lambda: dot(ad.scale(x, -2.5)), [x]),
        ("tanh", lambda: dot(ad.tanh(x)), [x]),
        ("sigmoid", lambda: dot(ad.sigmoid(x)), [x]),
        ("exp", lambda: dot(ad.exp(x)), [x]),
        ("add_bias", lambda: dot(ad.tanh(ad.add_bias(x, v))), [x, v]),
        ("matmul", lambda: ad.sum(ad.tanh(ad.matmul(x, m))), [x, m]),
        ("matmul_vector", lambda: ad.sum(ad.tanh(ad.matmul(v, m))), [v, m]),
        ("bmm", lambda: ad.sum(ad.tanh(ad.bmm(b1, b2))), [b1, b2]),
        ("transpose", lambda: ad.sum(ad.tanh(ad.matmul(ad.transpose(x), y))), [x, y]),
        ("reshape", lambda: ad.sum(ad.tanh(ad.matmul(ad.reshape(x, (6, 2)), ad.reshape(y, (2, 6))))), [x, y]),
        ("take", lambda: ad.sum(ad.tanh(ad.take(x, np.array([2, 0, 2])))), [x]),
        ("concat", lambda: ad.sum(ad.tanh(ad.concat([x, ad.scale(y, 2.0)], axis=1))), [x, y]),
        ("stack", lambda: ad.sum(ad.tanh(ad.stack([x, ad.mul(x, y)]))), [x, y]),
        ("tile_rows", lambda: dot(ad.tanh(ad.tile_rows(v, 3))), [v]),
        ("mean", lambda: ad.mean(ad.mul(x, x)), [x]),
        ("maxout", lambda: ad.sum(ad.mul(ad.maxout(z, 2), x)), [z, x]),
        ("maxout_pool4", lambda: ad.sum(ad.tanh(ad.maxout(z, 4))), [z]),
        ("softmax_cross_entropy", lambda: ad.softmax_cross_entropy(logits, 4), [logits]),
        ("softmax_cross_entropy_rows", lambda: ad.softmax_cross_entropy(rows, np.array([0, 4, 2])), [rows]),
        ("bce_with_logits", lambda: ad.bce_with_logits(logits, np.array([1.0, 0, 0, 1, 0, 1])), [logits]),
        ("lstm_cell", lambda: ad.sum(ad.add(*ad.lstm_cell(inp, h, c, lw, lb))), [inp, h, c, lw, lb]),
    ]


def _toy_example(rng, n=7, d_raw=3):
    feats = rng.normal(size=(n, d_raw))
    cands = [
        SuggestionRecord(i, feats[i], 1.0 - 0.1 * i, 5, i % 4, 1 + i // 4)
        for i in range(n)
    ]
    return QueryExample(0, rng.normal(size=d_raw), 1000, cands, [0, 1, 2, 3])


def full_pass_case(seed: int = 0):
    """Encoder, decoder with sampling, every objective, combined loss."""
    rng = np.random.default_rng(seed)
    enc_cfg = enc.EncoderConfig(d_raw=3, d_hidden=4, d_a=4, d_e=3)
    dec_cfg = dec.DecoderConfig(d_e=3, lstm_hidden_dim=3, hmn_hidden_dim=3, maxout_pool=2)
    store = ParamStore()
    enc.init_encoder(store, enc_cfg, rng)
    dec.init_decoder(store, dec_cfg, rng)
    s = obj.init_loss_weights(store, len(obj.OBJECTIVES))
    s.data[:] = rng.uniform(-0.5, 0.5, size=s.shape)
    example = _toy_example(rng)
    labels = obj.Labels.from_example(example)

    def f():
        trace = dec.decode(enc.encode_all(example, store), store, dec_cfg, rng=np.random.default_rng(seed + 1))
        rewards = obj.compute_rewards(trace, labels)
        losses = [obj.ce_loss(trace, labels)] + [obj.rl_loss(trace, rewards, r) for r in obj.REWARDS]
        return obj.combine_losses(losses, s)

    return f, [store[n] for n in store.names()]


def run_gradient_suite(seed: int = 0) -> list:
    """Every differentiable op plus one full forward/backward pass."""
    rng = np.random.default_rng(seed)
    results = [_check(name, f, params) for name, f, params in _op_cases(rng)]
    f, params = full_pass_case(seed)
    results.append(_check("encoder->decoder->combined_loss", f, params))
    return results
