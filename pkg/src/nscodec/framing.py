"""Fixed-size windowing with a Hann crossfade in the overlap region."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import EmptySignal, LengthMismatch


@dataclass(frozen=True)
class FrameConfig:
    window_len: int = 512
    overlap: int = 32

    def __post_init__(self):
        if not 0 < self.overlap < self.window_len:
            raise ValueError("need 0 < overlap < window_len")

    @property
    def hop(self) -> int:
        return self.window_len - self.overlap


@dataclass
class WindowSequence:
    windows: np.ndarray  # (num_windows, window_len)
    original_len: int
    cfg: FrameConfig = field(default_factory=FrameConfig)

    def __len__(self) -> int:
        return len(self.windows)


def crossfade_weights(overlap: int):
    """Half-sample-offset Hann ramps; ``fade_in + fade_out == 1``."""
    if overlap < 1:
        raise ValueError("overlap must be >= 1")
    n = np.arange(overlap, dtype=np.float64)
    fade_in = 0.5 * (1.0 - np.cos(np.pi * (n + 0.5) / overlap))
    return fade_in, 1.0 - fade_in


def num_windows(length: int, cfg: FrameConfig) -> int:
    return math.ceil(max(length - cfg.overlap, 1) / cfg.hop)


def extract_windows(signal, cfg: FrameConfig = FrameConfig()) -> WindowSequence:
    x = np.asarray(signal, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySignal("cannot frame an empty signal")
    count = num_windows(x.size, cfg)
    padded = np.zeros((count - 1) * cfg.hop + cfg.window_len)
    padded[:x.size] = x
    idx = np.arange(count)[:, None] * cfg.hop + np.arange(cfg.window_len)[None, :]
    return WindowSequence(padded[idx], x.size, cfg)


def overlap_add(windows, cfg: FrameConfig = FrameConfig(), original_len: int | None = None) -> np.ndarray:
    """Blend consecutive windows over ``cfg.overlap`` samples and trim."""
    if isinstance(windows, WindowSequence):
        original_len = windows.original_len if original_len is None else original_len
        windows = windows.windows
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] == 0:
        raise LengthMismatch("expected a non-empty (num_windows, window_len) array")
    if w.shape[1] != cfg.window_len:
        raise LengthMismatch(f"window length {w.shape[1]} != {cfg.window_len}")
    count = w.shape[0]
    total = (count - 1) * cfg.hop + cfg.window_len
    if original_len is None:
        original_len = total
    if original_len > total:
        raise LengthMismatch(f"{count} windows cannot cover {original_len} samples")
    fade_in, fade_out = crossfade_weights(cfg.overlap)
    w = w.copy()
    w[1:, :cfg.overlap] *= fade_in
    w[:-1, -cfg.overlap:] *= fade_out
    out = np.zeros(total)
    # body of each window (exclusive of the incoming overlap) does not collide
    out[:cfg.window_len] = w[0]
    for i in range(1, count):
        start = i * cfg.hop
        out[start:start + cfg.overlap] += w[i, :cfg.overlap]
        out[start + cfg.overlap:start + cfg.window_len] = w[i, cfg.overlap:]
    return out[:original_len]
