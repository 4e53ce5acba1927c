"""One-dimensional Gaussian mixtures fitted by EM (grabcut appearance models)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

VARIANCE_FLOOR = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    # mean per-sample log-likelihood after each EM step
    history: tuple = field(default=(), compare=False, repr=False)

    @property
    def k(self) -> int:
        return len(self.weights)

    def component_log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None]
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw - 0.5 * (_LOG_2PI + np.log(self.variances)) - (x - self.means) ** 2 / (2.0 * self.variances)

    def log_pdf(self, x) -> np.ndarray:
        return logsumexp(self.component_log_pdf(x), axis=-1)

    def log_likelihood(self, samples) -> float:
        return float(np.sum(self.log_pdf(samples)))


def _kmeanspp(values: np.ndarray, counts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    p = counts / counts.sum()
    centers = [values[rng.choice(len(values), p=p)]]
    for _ in range(1, k):
        d2 = np.min((values[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1) * counts
        if not d2.sum() > 0:
            break  # remaining values coincide with centres numerically
        centers.append(values[rng.choice(len(values), p=d2 / d2.sum())])
    return np.sort(np.asarray(centers))


def _m_step(values, counts, resp, prev: GmmModel | None, floor: float):
    r = resp * counts[:, None]
    nk = r.sum(axis=0)
    live = nk > 0
    safe = np.where(live, nk, 1.0)
    means = (r.T @ values) / safe
    variances = np.maximum(np.einsum("ij,ij->j", r, (values[:, None] - means) ** 2) / safe, floor)
    # an empty component keeps its previous shape and carries no weight
    if prev is not None:
        means = np.where(live, means, prev.means)
        variances = np.where(live, variances, prev.variances)
    weights = nk / nk.sum()
    return weights, means, variances


def fit_gmm(
    samples,
    k: int = 5,
    seed: int = 0,
    init: GmmModel | None = None,
    tol: float = 1e-6,
    max_iter: int = 300,
    floor: float = VARIANCE_FLOOR,
) -> GmmModel:
    """Fit a K-component 1-D GMM by EM.

    Starts from k-means++ centres drawn with ``seed`` unless ``init`` is given,
    in which case EM continues from that model (the log-likelihood can then
    only go up relative to ``init``).  K is clamped to the number of distinct
    sample values.  Stops when the mean log-likelihood improves by less than
    ``tol`` or after ``max_iter`` iterations.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("cannot fit a GMM to zero samples")
    if k < 1:
        raise ValueError("k must be >= 1")
    # EM on (value, multiplicity) pairs is exact and much cheaper for quantized images
    values, counts = np.unique(samples, return_counts=True)
    counts = counts.astype(np.float64)
    n = counts.sum()

    if init is not None:
        model = GmmModel(init.weights.copy(), init.means.copy(), init.variances.copy())
    else:
        k = min(k, len(values))
        rng = np.random.default_rng(seed)
        centers = _kmeanspp(values, counts, k, rng)
        k = len(centers)
        assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        resp = np.zeros((len(values), k))
        resp[np.arange(len(values)), assign] = 1.0
        prev = GmmModel(np.full(k, 1.0 / k), centers, np.full(k, floor))
        model = GmmModel(*_m_step(values, counts, resp, prev, floor))

    history = []
    ll = -np.inf
    for it in range(max_iter + 1):
        log_r = model.component_log_pdf(values)
        top = log_r.max(axis=1, keepdims=True)
        log_p = top[:, 0] + np.log(np.exp(log_r - top).sum(axis=1))
        new_ll = float(counts @ log_p) / n
        history.append(new_ll)
        if new_ll - ll < tol or it == max_iter:
            break
        ll = new_ll
        resp = np.exp(log_r - log_p[:, None])
        model = GmmModel(*_m_step(values, counts, resp, model, floor))
    return GmmModel(model.weights, model.means, model.variances, tuple(history))
