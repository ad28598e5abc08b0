"""End-to-end encode/decode of signals plus the evaluation and timing harnesses."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .audio_io import Signal, load_normalized
from .coder import (StreamMeta, pack_bitstream, payload_size, range_decode, range_encode,
                    unpack_bitstream)
from .errors import CodecError, ModelMismatch
from .framing import FrameConfig, extract_windows, overlap_add
from .mfcc import perceptual_distance
from .model import CodecModel
from .network import Network, NetworkSpec
from .objective import bitrate_estimate, entropy_bits
from .quantizer import QuantizerState

SNR_CAP_DB = 99.0


def encode_signal(model: CodecModel, signal: Signal) -> bytes:
    """Window, encode, harden and range-code a (peak-normalized) signal."""
    seq = extract_windows(signal.samples, model.frame)
    symbols = model.encode_windows(seq.windows)
    meta = StreamMeta(signal.sample_rate, model.frame.window_len, model.frame.overlap,
                      len(seq.windows), seq.original_len)
    return pack_bitstream(symbols, meta, model.table)


def decode_stream(model: CodecModel, data: bytes) -> Signal:
    symbols, meta, _ = unpack_bitstream(data)
    frame = FrameConfig(meta.window_len, meta.overlap)
    if frame != model.frame:
        raise ModelMismatch(f"stream framing {frame} differs from the model's {model.frame}")
    if meta.symbols_per_window != model.spec.code_len:
        raise ModelMismatch("stream symbol count per window does not match the model")
    windows = model.decode_symbols(symbols)
    return Signal(overlap_add(windows, frame, meta.original_len), meta.sample_rate)


def snr_db(reference: np.ndarray, estimate: np.ndarray) -> float:
    ref = np.asarray(reference, dtype=np.float64)
    noise = np.sum((ref - np.asarray(estimate, dtype=np.float64)) ** 2)
    power = np.sum(ref ** 2)
    if noise == 0.0:
        return SNR_CAP_DB
    if power == 0.0:
        return -SNR_CAP_DB
    return float(min(10.0 * math.log10(power / noise), SNR_CAP_DB))


def signal_perceptual(x: np.ndarray, y: np.ndarray, frame: FrameConfig = FrameConfig()) -> float:
    """Mean per-window perceptual distance between two equal-length signals."""
    wx = extract_windows(x, frame).windows
    wy = extract_windows(y, frame).windows
    return float(np.mean([perceptual_distance(a, b) for a, b in zip(wx, wy)]))


@dataclass
class FileReport:
    name: str
    snr_db: float = float("nan")
    perceptual: float = float("nan")
    measured_bps: float = float("nan")
    payload_bps: float = float("nan")
    estimated_bps: float = float("nan")
    duration: float = 0.0
    bytes: int = 0
    error: str = ""


@dataclass
class EvalReport:
    files: List[FileReport] = field(default_factory=list)

    @property
    def ok(self) -> List[FileReport]:
        return [f for f in self.files if not f.error]

    def mean(self, attr: str) -> float:
        vals = [getattr(f, attr) for f in self.ok]
        return float(np.mean(vals)) if vals else float("nan")

    def pooled_bps(self, payload_only: bool = False) -> float:
        """Total coded bits over total duration across successful files."""
        ok = self.ok
        seconds = sum(f.duration for f in ok)
        if not seconds:
            return float("nan")
        attr = "payload_bps" if payload_only else "measured_bps"
        return sum(getattr(f, attr) * f.duration for f in ok) / seconds

    def pooled_estimate(self) -> float:
        ok = self.ok
        seconds = sum(f.duration for f in ok)
        return sum(f.estimated_bps * f.duration for f in ok) / seconds if seconds else float("nan")


def evaluate_signal(model: CodecModel, signal: Signal, name: str = "", bypass: bool = False) -> FileReport:
    """Full deployment-path round trip with distortion and rate measurements.

    ``bypass`` skips the network and coder entirely and returns the input as
    its own reconstruction, which is useful for checking the metric plumbing.
    """
    rep = FileReport(name, duration=signal.duration)
    x = signal.samples
    if bypass:
        rep.snr_db = snr_db(x, x)
        rep.perceptual = signal_perceptual(x, x, model.frame)
        return rep
    data = encode_signal(model, signal)
    y = decode_stream(model, data).samples
    seq = extract_windows(x, model.frame)
    hist = model.soft_histogram(model.encode_codes(seq.windows))
    rep.bytes = len(data)
    rep.snr_db = snr_db(x, y)
    rep.perceptual = signal_perceptual(x, y, model.frame)
    rep.measured_bps = 8.0 * len(data) / signal.duration
    rep.payload_bps = 8.0 * payload_size(data) / signal.duration
    rep.estimated_bps = bitrate_estimate(entropy_bits(hist))
    return rep


def evaluate_files(model: CodecModel, paths: Sequence, bypass: bool = False) -> EvalReport:
    """Evaluate every file; failures are recorded per file and do not stop the run."""
    report = EvalReport()
    for p in paths:
        name = Path(p).name
        try:
            report.files.append(evaluate_signal(model, load_normalized(p), name, bypass))
        except (CodecError, OSError, ValueError) as exc:
            report.files.append(FileReport(name, error=f"{type(exc).__name__}: {exc}"))
    return report


REPORT_FIELDS = ["file", "snr_db", "perceptual", "measured_bps", "payload_bps", "estimated_bps",
                 "duration_s", "bytes", "error"]


def report_rows(report: EvalReport) -> List[dict]:
    rows = [{"file": f.name, "snr_db": f.snr_db, "perceptual": f.perceptual, "measured_bps": f.measured_bps,
             "payload_bps": f.payload_bps, "estimated_bps": f.estimated_bps, "duration_s": f.duration,
             "bytes": f.bytes, "error": f.error} for f in report.files]
    rows.append({"file": "MEAN", "snr_db": report.mean("snr_db"), "perceptual": report.mean("perceptual"),
                 "measured_bps": report.pooled_bps(), "payload_bps": report.pooled_bps(True),
                 "estimated_bps": report.pooled_estimate(),
                 "duration_s": sum(f.duration for f in report.ok),
                 "bytes": sum(f.bytes for f in report.ok), "error": ""})
    return rows


@dataclass
class BenchResult:
    encode_ms: np.ndarray
    decode_ms: np.ndarray

    @property
    def combined_ms(self) -> np.ndarray:
        return self.encode_ms + self.decode_ms

    def summary(self) -> dict:
        out = {}
        for key, arr in (("encode", self.encode_ms), ("decode", self.decode_ms), ("combined", self.combined_ms)):
            out[key] = {"mean_ms": float(arr.mean()), "p95_ms": float(np.percentile(arr, 95))}
        return out


def bench(model: CodecModel, iterations: int = 1000, warmup: int = 20, seed: int = 42) -> BenchResult:
    """Time one window at a time: encode is network + harden + range coding, decode the reverse."""
    rng = np.random.default_rng(seed)
    frame = model.frame
    window = (0.3 * rng.standard_normal(frame.window_len)).astype(np.float32)[None, :]
    enc = np.empty(iterations)
    dec = np.empty(iterations)
    for i in range(warmup + iterations):
        t0 = time.perf_counter()
        symbols = model.encode_windows(window)
        payload = range_encode(symbols.ravel(), model.table)
        t1 = time.perf_counter()
        decoded = range_decode(payload, symbols.size, model.table).reshape(symbols.shape)
        model.decode_symbols(decoded)
        t2 = time.perf_counter()
        if i >= warmup:
            enc[i - warmup] = (t1 - t0) * 1e3
            dec[i - warmup] = (t2 - t1) * 1e3
    return BenchResult(enc, dec)


def full_scale_model(seed: int = 42, channels: int = 32, residual_blocks: int = 2) -> CodecModel:
    """Untrained model with the full-size architecture, for timing."""
    net = Network(NetworkSpec(channels=channels, residual_blocks=residual_blocks), seed=seed)
    return CodecModel(net, QuantizerState(np.linspace(-1.0, 1.0, 32)))

