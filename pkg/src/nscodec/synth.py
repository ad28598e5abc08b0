"""Synthetic speech-like test corpora (harmonic tones plus band-limited noise)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from .audio_io import SAMPLE_RATE, Signal, write_wav


def synth_utterance(rng: np.random.Generator, seconds: float = 3.0, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Syllable-rate amplitude envelope over a gliding harmonic source and a little noise."""
    n = int(seconds * sr)
    t = np.arange(n) / sr
    f0 = rng.uniform(90, 220) * (1 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.3, 1.5) * t + rng.uniform(0, 6.28)))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    voiced = np.zeros(n)
    for k in range(1, 25):
        # crude formant emphasis around two resonances
        fk = k * f0.mean()
        if fk > 7000:
            break
        gain = 1.0 / k + 0.6 * np.exp(-((fk - rng.uniform(500, 900)) / 250) ** 2)
        gain += 0.3 * np.exp(-((fk - rng.uniform(1200, 2400)) / 400) ** 2)
        voiced += gain * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    sos = butter(4, [rng.uniform(1500, 2500), rng.uniform(4000, 6000)], btype="band", fs=sr, output="sos")
    noise = sosfilt(sos, rng.normal(size=n))
    rate = rng.uniform(2.5, 5.0)
    env = np.clip(np.sin(2 * np.pi * rate * t / 2 + rng.uniform(0, 6.28)), 0, None) ** 1.5
    x = env * voiced + 0.15 * (1 - env) * noise / (np.std(noise) + 1e-12)
    return 0.9 * x / np.max(np.abs(x))


def make_corpus(directory, count: int = 64, seconds: float = 3.0, seed: int = 0) -> list:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        p = d / f"utt_{i:03d}.wav"
        write_wav(p, Signal(synth_utterance(rng, seconds)))
        paths.append(p)
    return paths
