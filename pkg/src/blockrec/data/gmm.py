"""Diagonal-covariance Gaussian mixture fitted by EM with k-means++ seeding."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
MIN_SUPPORT = 1.5


@dataclass
class GmmModel:
    k: int
    means: np.ndarray  # [k, d]
    covariances: np.ndarray  # [k, d] diagonal variances
    mixture_weights: np.ndarray  # [k]
    log_likelihood_trace: list = field(default_factory=list)
    requested_k: int | None = None
    converged: bool = False
    support: np.ndarray | None = None  # responsibility mass per component at the final E-step

    def log_joint(self, x: np.ndarray) -> np.ndarray:
        """``log pi_j + log N(x_i | mu_j, diag var_j)`` as an ``[n, k]`` array."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = x.shape[1]
        var = self.covariances
        log_det = np.log(var).sum(axis=1)  # [k]
        # (x - mu)^2 / var summed over dims, expanded to avoid an [n, k, d] tensor
        # one component at a time: the expanded x^2 - 2 x mu + mu^2 form cancels
        # badly once a variance sits on the floor, enough to break EM monotonicity
        maha = np.empty((x.shape[0], self.k))
        for j in range(self.k):
            maha[:, j] = (((x - self.means[j]) ** 2) / var[j]).sum(axis=1)
        return np.log(self.mixture_weights)[None, :] - 0.5 * (d * np.log(2 * np.pi) + log_det[None, :] + maha)

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        lj = self.log_joint(x)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def predict(self, x: np.ndarray) -> np.ndarray:
        # argmax ties resolve to the lowest component index
        return self.log_joint(x).argmax(axis=1)

    def log_likelihood(self, x: np.ndarray) -> float:
        return float(logsumexp(self.log_joint(x), axis=1).sum())


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator, n_trials: int | None = None) -> np.ndarray:
    """Greedy k-means++ seeding.

    Each new centre is the best of ``n_trials`` D^2-sampled candidates, judged
    by the resulting total squared distance to the nearest centre.
    """
    n = x.shape[0]
    if n_trials is None:
        n_trials = 2 + int(np.log(k))
    first = int(rng.integers(n))
    chosen = [first]
    d2 = ((x - x[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            cands = rng.integers(n, size=n_trials)
        else:
            cands = rng.choice(n, size=n_trials, p=d2 / total)
        best, best_pot, best_d2 = None, np.inf, None
        for c in cands:
            cand_d2 = np.minimum(d2, ((x - x[c]) ** 2).sum(axis=1))
            pot = cand_d2.sum()
            if pot < best_pot:
                best, best_pot, best_d2 = int(c), pot, cand_d2
        chosen.append(best)
        d2 = best_d2
    return x[chosen].copy()


def fit_gmm(
    vectors,
    k: int,
    max_iter: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
    var_floor: float = VAR_FLOOR,
    n_init: int = 8,
) -> GmmModel:
    """Fit a ``k``-component diagonal GMM by EM.

    Each of ``n_init`` restarts is seeded by greedy k-means++ and iterated
    until the total log-likelihood improves by less than ``tol`` or
    ``max_iter`` E-steps have run; the restart with the highest final
    log-likelihood is returned, preferring restarts in which every component
    carries at least ``MIN_SUPPORT`` points of responsibility (a component fed
    by a single point collapses onto the variance floor and wins on
    likelihood while meaning nothing). When there are fewer distinct vectors than
    ``k`` the component count drops to the number of distinct vectors; the
    returned model records both counts.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"fit_gmm expects a non-empty [n, d] array, got shape {x.shape}")
    distinct = np.unique(x, axis=0).shape[0]
    k_eff = min(k, distinct)
    if k_eff < k:
        logger.info("fit_gmm: only %d distinct vectors, using k=%d instead of %d", distinct, k_eff, k)

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        model = _fit_once(x, k_eff, rng, max_iter, tol, var_floor)
        model.requested_k = k
        key = (model.support.min() >= MIN_SUPPORT, model.log_likelihood_trace[-1])
        if best is None or key > best_key:
            best, best_key = model, key
    return best


def _fit_once(x, k, rng, max_iter, tol, var_floor) -> GmmModel:
    n, d = x.shape
    means = kmeans_plus_plus(x, k, rng)
    # initial moments from a hard nearest-seed assignment
    nearest = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2).argmin(axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), nearest] = 1.0
    model = GmmModel(
        k=k,
        means=means,
        covariances=np.ones((k, d)),
        mixture_weights=np.full(k, 1.0 / k),
    )
    _m_step(model, x, resp, var_floor)
    # pooled within-seed variance, so singleton seeds do not start as spikes
    pooled = ((x - model.means[nearest]) ** 2).mean(axis=0)
    model.covariances = np.tile(np.maximum(pooled, var_floor), (k, 1))

    prev = -np.inf
    for _ in range(max_iter):
        lj = model.log_joint(x)
        norm = logsumexp(lj, axis=1, keepdims=True)
        ll = float(norm.sum())
        model.log_likelihood_trace.append(ll)
        resp = np.exp(lj - norm)
        model.support = resp.sum(axis=0)
        if ll - prev < tol:
            model.converged = True
            break
        prev = ll
        _m_step(model, x, resp, var_floor)
    return model


def _m_step(model: GmmModel, x: np.ndarray, resp: np.ndarray, var_floor: float) -> None:
    nk = resp.sum(axis=0) + 10 * np.finfo(np.float64).eps
    model.mixture_weights = nk / nk.sum()
    model.means = (resp.T @ x) / nk[:, None]
    sq = (x[:, None, :] - model.means[None, :, :]) ** 2  # [n, k, d]
    var = np.einsum("nk,nkd->kd", resp, sq) / nk[:, None]
    model.covariances = np.maximum(var, var_floor)
