"""Central finite-difference oracle for gradient checks."""
from __future__ import annotations

from typing import Callable

import numpy as np

from blockrec.autodiff.tensor import Tensor, no_grad


def numeric_gradient(f: Callable[[], Tensor], param: Tensor, h: float = 1e-6) -> np.ndarray:
    """d f / d param by central differences, perturbing ``param.data`` in place."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f().item()
            flat[i] = orig - h
            down = f().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> float:
    """Norm-wise ``|a - n| / max(|a|, |n|, floor)``."""
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    denom = max(np.linalg.norm(np.ravel(analytic)), np.linalg.norm(np.ravel(numeric)))
    return float(diff / max(denom, floor))
