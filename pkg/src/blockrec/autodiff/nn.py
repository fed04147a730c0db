"""Composite layers built from the differentiable primitives."""
from __future__ import annotations

import numpy as np

from blockrec.autodiff import tensor as T
from blockrec.autodiff.tensor import Tensor
from blockrec.errors import DimensionError


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, weight: Tensor, bias: Tensor):
    """One step of a standard LSTM.

    ``weight`` has shape ``[input_dim + hidden, 4 * hidden]`` and ``bias``
    ``[4 * hidden]``; gate blocks are ordered input, forget, output, candidate.

    Returns ``(h_next, c_next)`` with ``c_next = f*c + i*g`` and
    ``h_next = o * tanh(c_next)``.
    """
    hidden = h.shape[0]
    if c.shape != (hidden,):
        raise DimensionError(f"lstm_cell: cell {c.shape} vs hidden {h.shape}")
    if weight.shape != (x.shape[0] + hidden, 4 * hidden) or bias.shape != (4 * hidden,):
        raise DimensionError(
            f"lstm_cell: weight {weight.shape}/bias {bias.shape} incompatible with "
            f"input {x.shape[0]} and hidden {hidden}"
        )
    z = T.add(T.matmul(T.concat([x, h]), weight), bias)
    i = T.sigmoid(T.take(z, slice(0, hidden)))
    f = T.sigmoid(T.take(z, slice(hidden, 2 * hidden)))
    o = T.sigmoid(T.take(z, slice(2 * hidden, 3 * hidden)))
    g = T.tanh(T.take(z, slice(3 * hidden, 4 * hidden)))
    c_next = T.add(T.mul(f, c), T.mul(i, g))
    h_next = T.mul(o, T.tanh(c_next))
    return h_next, c_next


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))
