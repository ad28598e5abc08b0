"""Training objective terms and the entropy-based bitrate estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import LengthMismatch
from .mfcc import DEFAULT as MFCC_DEFAULT, MfccConfig, perceptual_loss

SAMPLE_RATE = 16000
HOP = 512 - 32
SYMBOLS_PER_WINDOW = 256
BPS_PER_BIT = SAMPLE_RATE / HOP * SYMBOLS_PER_WINDOW
SQRT_GRAD_FLOOR = 1e-12
LOG_FLOOR = 1e-12


@dataclass
class LossWeights:
    mse: float = 30.0
    perceptual: float = 5.0
    quantization: float = 10.0
    entropy: float = 0.5


@dataclass
class LossReport:
    mse: float
    perceptual: float
    quantization_penalty: float
    entropy_bits: float
    total: float


def mse_loss(x, y) -> Tensor:
    """Mean squared error, differentiable in both arguments."""
    y = ad.as_tensor(y)
    x = ad.as_tensor(x)
    if x.shape != y.shape:
        raise LengthMismatch(f"mse_loss: {x.shape} vs {y.shape}")
    diff = y.data - x.data.astype(y.dtype, copy=False)
    n = diff.size

    def backward(g):
        grad = g * 2.0 * diff / n
        y.accumulate(grad)
        if ad._tracks(x):
            x.accumulate(-grad)

    return ad._result(np.asarray(np.mean(diff ** 2), dtype=y.dtype), (x, y), backward)


def quantization_penalty(c) -> Tensor:
    """Mean over symbols of ``sum_j sqrt(c_j) - 1``; zero iff every assignment is one-hot."""
    c = ad.as_tensor(c)
    root = np.sqrt(np.maximum(c.data, 0.0))
    symbols = c.data.size // c.shape[-1]
    value = (root.sum(axis=-1) - 1.0).mean()

    def backward(g):
        c.accumulate(g * 0.5 / np.sqrt(np.maximum(c.data, SQRT_GRAD_FLOOR)) / symbols)

    return ad._result(np.asarray(value, dtype=c.dtype), (c,), backward)


def symbol_histogram(c) -> np.ndarray:
    data = c.data if isinstance(c, Tensor) else np.asarray(c)
    return data.reshape(-1, data.shape[-1]).mean(axis=0)


def entropy_bits(h) -> float:
    h = np.asarray(h, dtype=np.float64)
    return float(-(h * np.log2(np.maximum(h, LOG_FLOOR))).sum())


def entropy_estimate(c):
    """Histogram (mean soft assignment) and its entropy in bits as a scalar Tensor."""
    c = ad.as_tensor(c)
    n = c.shape[-1]
    flat = c.data.reshape(-1, n)
    h = flat.mean(axis=0)
    logs = np.log2(np.maximum(h, LOG_FLOOR))
    value = -(h * logs).sum()
    dh = np.where(h > LOG_FLOOR, -(logs + 1.0 / np.log(2.0)), -logs)
    count = flat.shape[0]

    def backward(g):
        c.accumulate(np.broadcast_to(g * dh / count, c.shape))

    return h, ad._result(np.asarray(value, dtype=c.dtype), (c,), backward)


def total_loss(x, y, c, weights: LossWeights, quantization_on: bool,
               mfcc_cfg: MfccConfig = MFCC_DEFAULT):
    """Weighted objective as a scalar Tensor plus a LossReport of the raw terms.

    With quantization off only the MSE and perceptual terms contribute and
    ``c`` is ignored (it may be None).
    """
    mse = mse_loss(x, y)
    perc = perceptual_loss(x, y, mfcc_cfg)
    terms = [(weights.mse, mse), (weights.perceptual, perc)]
    q_val = ent_val = 0.0
    if quantization_on:
        q = quantization_penalty(c)
        _, ent = entropy_estimate(c)
        terms += [(weights.quantization, q), (weights.entropy, ent)]
        q_val, ent_val = q.item(), ent.item()
    total = ad.weighted_sum(terms)
    report = LossReport(mse.item(), perc.item(), q_val, ent_val, total.item())
    return total, report


def bitrate_estimate(bits_per_symbol: float) -> float:
    """Windows per second times symbols per window times bits per symbol."""
    return BPS_PER_BIT * float(bits_per_symbol)
