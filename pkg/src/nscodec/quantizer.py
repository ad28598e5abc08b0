"""Softmax scalar quantization with trainable bins and temperature."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import TooFewDistinctValues

SIGMA_INIT = 300.0
NUM_BINS = 32
KMEANS_CAP = 1 << 20


class QuantizerState:
    """Shared bins and temperature for every symbol position.

    The temperature is stored as ``log_sigma`` so that gradient steps can
    never make it non-positive.
    """

    def __init__(self, bins, sigma: float = SIGMA_INIT, dtype=np.float32):
        bins = np.asarray(bins, dtype=dtype).ravel()
        if bins.size < 2:
            raise ValueError("need at least two bins")
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.bins = ad.parameter(bins)
        self.log_sigma = ad.parameter(np.asarray(np.log(sigma), dtype=dtype))

    @property
    def n(self) -> int:
        return self.bins.data.size

    @property
    def sigma(self) -> float:
        return float(np.exp(self.log_sigma.data))

    def parameters(self):
        return [self.bins, self.log_sigma]

    def astype(self, dtype) -> "QuantizerState":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


def soft_quantize(x, q: QuantizerState) -> Tensor:
    """Soft assignment ``softmax(-sigma * |x - B|)`` over the last axis.

    Output has shape ``x.shape + (N,)``.
    """
    x = ad.as_tensor(x)
    bins, log_sigma = q.bins, q.log_sigma
    sigma = np.exp(log_sigma.data)
    diff = x.data[..., None] - bins.data
    dist = np.abs(diff)
    z = -sigma * dist
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        # dL/dz_j = s_j * (g_j - sum_k g_k s_k)
        gz = s * (g - (g * s).sum(axis=-1, keepdims=True))
        sgn = np.sign(diff)
        if ad._tracks(x):
            x.accumulate(-sigma * (gz * sgn).sum(axis=-1))
        if ad._tracks(bins):
            bins.accumulate((sigma * gz * sgn).reshape(-1, s.shape[-1]).sum(axis=0))
        if ad._tracks(log_sigma):
            log_sigma.accumulate(np.asarray(-(gz * dist).sum() * sigma, dtype=log_sigma.dtype))

    return ad._result(s, (x, bins, log_sigma), backward)


def dequantize(s, q: QuantizerState) -> Tensor:
    """Dot product of each soft assignment with the bin values."""
    s = ad.as_tensor(s)
    bins = q.bins

    def backward(g):
        if ad._tracks(s):
            s.accumulate(g[..., None] * bins.data)
        if ad._tracks(bins):
            bins.accumulate((g[..., None] * s.data).reshape(-1, bins.data.size).sum(axis=0))

    return ad._result(s.data @ bins.data, (s, bins), backward)


def harden(s) -> np.ndarray:
    """Argmax symbol index; ties resolve to the lowest index."""
    data = s.data if isinstance(s, Tensor) else np.asarray(s)
    return np.argmax(data, axis=-1)


def nearest_bin(x, bins) -> np.ndarray:
    """Index of the closest bin to each value (lowest index on ties)."""
    x = np.asarray(x, dtype=np.float64)
    return np.argmin(np.abs(x[..., None] - np.asarray(bins, dtype=np.float64)), axis=-1)


def hard_symbols(x, q: QuantizerState) -> np.ndarray:
    """Deployment path: ``harden(soft_quantize(x))`` without building a graph."""
    return harden(soft_quantize(np.asarray(x), q))


def kmeans_init(samples, n: int = NUM_BINS, seed: int = 0, max_iter: int = 100, tol: float = 1e-6,
                history: list | None = None) -> np.ndarray:
    """1-D k-means with k-means++ seeding; returns sorted centroids.

    If ``history`` is given, the inertia after each assignment step is
    appended to it.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    if x.size > KMEANS_CAP:
        x = x[rng.choice(x.size, KMEANS_CAP, replace=False)]
    distinct = np.unique(x)
    if distinct.size < n:
        raise TooFewDistinctValues(f"k-means needs {n} distinct values, got {distinct.size}")
    if distinct.size == n:
        return distinct.copy()

    centers = np.empty(n)
    centers[0] = x[rng.integers(x.size)]
    d2 = (x - centers[0]) ** 2
    for k in range(1, n):
        total = d2.sum()
        if total == 0:
            pick = rng.choice(np.setdiff1d(distinct, centers[:k]))
        else:
            pick = x[rng.choice(x.size, p=d2 / total)]
        centers[k] = pick
        d2 = np.minimum(d2, (x - pick) ** 2)

    centers.sort()
    for _ in range(max_iter):
        # sorted 1-D centers: nearest is found through midpoints
        mids = 0.5 * (centers[1:] + centers[:-1])
        labels = np.searchsorted(mids, x)
        if history is not None:
            history.append(float(((x - centers[labels]) ** 2).sum()))
        sums = np.bincount(labels, weights=x, minlength=n)
        counts = np.bincount(labels, minlength=n)
        new = np.where(counts > 0, sums / np.maximum(counts, 1), centers)
        new.sort()
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift < tol:
            break
    if history is not None:
        mids = 0.5 * (centers[1:] + centers[:-1])
        history.append(float(((x - centers[np.searchsorted(mids, x)]) ** 2).sum()))
    return centers
