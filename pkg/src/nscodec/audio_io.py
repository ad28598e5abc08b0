"""WAV input/output, loudness preprocessing and corpus splitting."""

from __future__ import annotations

import os
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .errors import CorruptFile, EmptySignal, NotEnoughFiles, UnsupportedFormat

SAMPLE_RATE = 16000
PEAK_LEVEL = 0.999
_SCALE = 32768.0


@dataclass
class Signal:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class CorpusSplit:
    train: List[Path]
    validation: List[Path]
    test: List[Path]
    seed: int


def read_wav(path) -> Signal:
    """Read a 16-bit PCM mono 16 kHz WAV file into floats in [-1, 1)."""
    try:
        with wave.open(os.fspath(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            if wf.getcomptype() != "NONE":
                raise UnsupportedFormat(f"{path}: compressed WAV not supported")
            if channels != 1:
                raise UnsupportedFormat(f"{path}: expected mono, got {channels} channels")
            if width != 2:
                raise UnsupportedFormat(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
            if rate != SAMPLE_RATE:
                raise UnsupportedFormat(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
            nframes = wf.getnframes()
            raw = wf.readframes(nframes)
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        raise CorruptFile(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise CorruptFile(f"{path}: unexpected end of file") from exc
    if len(raw) != 2 * nframes:
        raise CorruptFile(f"{path}: header claims {nframes} frames, data holds {len(raw) // 2}")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Signal(pcm.astype(np.float64) / _SCALE, SAMPLE_RATE)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(x * _SCALE), -32768, 32767).astype("<i2")


def write_wav(path, signal: Signal | np.ndarray) -> None:
    """Write samples as 16-bit PCM mono. Values beyond full scale are clamped."""
    samples = signal.samples if isinstance(signal, Signal) else signal
    rate = signal.sample_rate if isinstance(signal, Signal) else SAMPLE_RATE
    pcm = to_pcm16(samples)
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def peak_normalize(signal: Signal) -> Signal:
    """Scale so the largest magnitude sample equals ``PEAK_LEVEL``.

    Silence is returned unchanged.
    """
    x = np.asarray(signal.samples, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("cannot normalize an empty signal")
    peak = float(np.max(np.abs(x)))
    if peak == 0.0 or peak == PEAK_LEVEL:
        return Signal(x.copy(), signal.sample_rate)
    y = x * (PEAK_LEVEL / peak)
    return Signal(y, signal.sample_rate)


def list_wavs(directory) -> List[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {d}")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() == ".wav")


def split_corpus(directory, counts: Sequence[int] | Tuple[int, int, int], seed: int = 42) -> CorpusSplit:
    """Draw disjoint train/validation/test file lists of the requested sizes."""
    n_train, n_val, n_test = (int(c) for c in counts)
    files = list_wavs(directory)
    need = n_train + n_val + n_test
    if len(files) < need:
        raise NotEnoughFiles(f"{directory}: need {need} WAV files, found {len(files)}")
    order = np.random.default_rng(seed).permutation(len(files))
    chosen = [files[i] for i in order[:need]]
    return CorpusSplit(
        train=chosen[:n_train],
        validation=chosen[n_train:n_train + n_val],
        test=chosen[n_train + n_val:],
        seed=seed,
    )


def load_normalized(path) -> Signal:
    return peak_normalize(read_wav(path))
