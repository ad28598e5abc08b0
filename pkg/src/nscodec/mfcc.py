"""Multi-resolution MFCCs and the perceptual distance built on them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.fft import dct

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class MfccConfig:
    filterbank_sizes: Tuple[int, ...] = (8, 16, 32, 128)
    fft_size: int = 512
    sample_rate: int = 16000
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-8


DEFAULT = MfccConfig()


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=None)
def _filterbank(num_filters: int, cfg: MfccConfig) -> np.ndarray:
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), num_filters + 2)
    edges = mel_to_hz(mels)
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    bin_hz = cfg.sample_rate / cfg.fft_size
    fb = np.zeros((num_filters, freqs.size))
    for i in range(num_filters):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        # narrow low-frequency triangles would miss every FFT bin
        lo = min(lo, center - bin_hz)
        hi = max(hi, center + bin_hz)
        rise = (freqs - lo) / (center - lo)
        fall = (hi - freqs) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(rise, fall))
    fb.setflags(write=False)
    return fb


def mel_filterbank(num_filters: int, cfg: MfccConfig = DEFAULT) -> np.ndarray:
    """(num_filters, fft_size // 2 + 1) triangular mel filters."""
    if num_filters < 1:
        raise ValueError("num_filters must be >= 1")
    return _filterbank(int(num_filters), cfg)


@lru_cache(maxsize=None)
def _dct_matrix(n: int) -> np.ndarray:
    m = dct(np.eye(n), type=2, norm="ortho", axis=0)
    m.setflags(write=False)
    return m


def power_spectrum(windows: np.ndarray, cfg: MfccConfig = DEFAULT):
    spec = np.fft.rfft(windows, n=cfg.fft_size, axis=-1)
    return spec, spec.real ** 2 + spec.imag ** 2


def _mfcc_from_power(power: np.ndarray, num_filters: int, cfg: MfccConfig):
    energies = power @ mel_filterbank(num_filters, cfg).T
    logs = np.log(np.maximum(energies, cfg.log_floor))
    return logs @ _dct_matrix(num_filters).T, energies


def mfcc(window, num_filters: int, cfg: MfccConfig = DEFAULT) -> np.ndarray:
    """MFCC vector(s) of one window or a stack of windows (last axis = time).

    All ``num_filters`` cepstral coefficients are kept.
    """
    x = np.asarray(window, dtype=np.float64)
    _, power = power_spectrum(x, cfg)
    coeffs, _ = _mfcc_from_power(power, num_filters, cfg)
    return coeffs


def perceptual_distance(x, y, cfg: MfccConfig = DEFAULT) -> float:
    """Mean over filterbanks of the mean-squared MFCC difference."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean([np.mean((mfcc(x, n, cfg) - mfcc(y, n, cfg)) ** 2) for n in cfg.filterbank_sizes]))


def _power_grad_to_signal(g_power, spec, n_samples: int, cfg: MfccConfig) -> np.ndarray:
    """Pull a gradient w.r.t. the half power spectrum back to the time samples."""
    # d|Y_k|^2/dy_t summed over the half spectrum, done with one inverse FFT
    z = g_power * spec
    z[..., 0] *= 2.0
    if cfg.fft_size % 2 == 0:
        z[..., -1] *= 2.0
    return cfg.fft_size * np.fft.irfft(z, n=cfg.fft_size, axis=-1)[..., :n_samples]


def perceptual_loss(x, y, cfg: MfccConfig = DEFAULT) -> Tensor:
    """Differentiable perceptual distance between ``x`` and ``y``.

    Inputs are (..., window_len); the result is averaged over every
    leading axis, so a batch gives the batch mean. Gradients flow into
    whichever arguments are tracked (normally only the reconstruction ``y``).
    """
    y = ad.as_tensor(y)
    x = ad.as_tensor(x)
    xd = np.asarray(x.data, dtype=y.dtype)
    yd = y.data
    if xd.shape != yd.shape:
        raise ValueError(f"perceptual_loss: {xd.shape} vs {yd.shape}")
    want_x = ad._tracks(x)
    n_sizes = len(cfg.filterbank_sizes)
    spec_x, px = power_spectrum(xd, cfg)
    spec_y, py = power_spectrum(yd, cfg)
    frames = int(np.prod(yd.shape[:-1], dtype=np.int64))
    total = 0.0
    g_py = np.zeros_like(py)
    g_px = np.zeros_like(px) if want_x else None
    for n in cfg.filterbank_sizes:
        cx, ex = _mfcc_from_power(px, n, cfg)
        cy, ey = _mfcc_from_power(py, n, cfg)
        diff = cy - cx
        total += np.sum(diff ** 2) / (frames * n)
        g_log = (2.0 * diff / (frames * n * n_sizes)) @ _dct_matrix(n)
        fb = mel_filterbank(n, cfg)
        g_py += np.where(ey > cfg.log_floor, g_log / np.maximum(ey, cfg.log_floor), 0.0) @ fb
        if want_x:
            g_px -= np.where(ex > cfg.log_floor, g_log / np.maximum(ex, cfg.log_floor), 0.0) @ fb
    value = total / n_sizes

    def backward(g):
        y.accumulate((g * _power_grad_to_signal(g_py, spec_y, yd.shape[-1], cfg)).astype(y.dtype))
        if want_x:
            x.accumulate((g * _power_grad_to_signal(g_px, spec_x, xd.shape[-1], cfg)).astype(x.dtype))

    return ad._result(np.asarray(value, dtype=y.dtype), (x, y), backward)
