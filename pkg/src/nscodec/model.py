"""The deployable codec model and its ``.nscm`` checkpoint format.

Checkpoint layout (little-endian)::

    magic "NSCM" | version u8 | manifest length u32 | manifest (UTF-8 JSON)
    | network parameters float32 (manifest order) | bins float32 * N
    | log_sigma float32 | frequency counts u32 * N
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .coder import FrequencyTable, build_frequency_table
from .errors import BadMagic, ModelMismatch, Truncated, UnsupportedVersion
from .framing import FrameConfig
from .network import Network, NetworkSpec
from .quantizer import QuantizerState, hard_symbols, soft_quantize

MAGIC = b"NSCM"
VERSION = 1
_PREFIX = struct.Struct("<4sBI")
INFERENCE_CHUNK = 256


class CodecModel:
    """Encoder, quantizer, decoder and frequency table bundled for deployment."""

    def __init__(self, net: Network, quantizer: QuantizerState, table: Optional[FrequencyTable] = None,
                 info: Optional[Dict] = None, frame: FrameConfig = FrameConfig()):
        self.net = net
        self.quantizer = quantizer
        self.table = table if table is not None else build_frequency_table(np.full(quantizer.n, 1.0 / quantizer.n))
        self.info = dict(info or {})
        self.frame = frame

    @property
    def spec(self) -> NetworkSpec:
        return self.net.spec

    @property
    def target_bps(self) -> Optional[float]:
        return self.info.get("target_bps")

    def encode_codes(self, windows: np.ndarray) -> np.ndarray:
        """Real-valued encoder outputs, shape (num_windows, 256)."""
        w = np.asarray(windows, dtype=np.float32)
        out = []
        with ad.no_grad():
            for i in range(0, len(w), INFERENCE_CHUNK):
                chunk = w[i:i + INFERENCE_CHUNK]
                out.append(self.net.encoder(chunk[:, None, :]).data[:, 0, :])
        return np.concatenate(out) if out else np.zeros((0, self.spec.code_len), np.float32)

    def soft_histogram(self, codes: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            total = np.zeros(self.quantizer.n)
            for i in range(0, len(codes), INFERENCE_CHUNK):
                total += soft_quantize(codes[i:i + INFERENCE_CHUNK], self.quantizer).data.sum(axis=(0, 1))
        return total / max(codes.size, 1)

    def symbols_from_codes(self, codes: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return hard_symbols(codes, self.quantizer)

    def encode_windows(self, windows: np.ndarray) -> np.ndarray:
        return self.symbols_from_codes(self.encode_codes(windows))

    def decode_symbols(self, symbols: np.ndarray) -> np.ndarray:
        s = np.asarray(symbols)
        if s.size and (s.min() < 0 or s.max() >= self.quantizer.n):
            raise ModelMismatch(f"symbol outside the model's {self.quantizer.n} bins")
        values = self.quantizer.bins.data[s].astype(np.float32)
        return self.decode_codes(values)

    def decode_codes(self, codes: np.ndarray) -> np.ndarray:
        c = np.asarray(codes, dtype=np.float32)
        out = []
        with ad.no_grad():
            for i in range(0, len(c), INFERENCE_CHUNK):
                out.append(self.net.decoder(c[i:i + INFERENCE_CHUNK, None, :]).data[:, 0, :])
        return np.concatenate(out) if out else np.zeros((0, self.spec.window_len), np.float32)


def _manifest(model: CodecModel) -> Dict:
    return {
        "network": model.spec.to_dict(),
        "num_bins": model.quantizer.n,
        "frame": {"window_len": model.frame.window_len, "overlap": model.frame.overlap},
        "params": [list(p.shape) for p in model.net.parameters()],
        "info": model.info,
    }


def checkpoint_bytes(model: CodecModel) -> bytes:
    manifest = json.dumps(_manifest(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, VERSION, len(manifest)), manifest]
    parts += [np.ascontiguousarray(p.data, dtype="<f4").tobytes() for p in model.net.parameters()]
    parts.append(np.asarray(model.quantizer.bins.data, dtype="<f4").tobytes())
    parts.append(np.asarray(model.quantizer.log_sigma.data, dtype="<f4").reshape(1).tobytes())
    parts.append(model.table.to_bytes())
    return b"".join(parts)


def checkpoint_save(path, model: CodecModel) -> None:
    data = checkpoint_bytes(model)
    tmp = Path(f"{os.fspath(path)}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def checkpoint_from_bytes(data: bytes) -> CodecModel:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not an NSCM checkpoint")
    if len(data) < _PREFIX.size:
        raise Truncated("checkpoint header cut short")
    _, version, mlen = _PREFIX.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"checkpoint version {version} (supported: {VERSION})")
    pos = _PREFIX.size
    if len(data) < pos + mlen:
        raise Truncated("checkpoint manifest cut short")
    manifest = json.loads(data[pos:pos + mlen].decode("utf-8"))
    pos += mlen
    spec = NetworkSpec(**manifest["network"])
    frame = FrameConfig(**manifest["frame"])
    n = int(manifest["num_bins"])
    net = Network(spec, seed=0)
    params = net.parameters()
    shapes = [tuple(s) for s in manifest["params"]]
    if shapes != [p.shape for p in params]:
        raise ModelMismatch("parameter manifest does not match the network layout")
    need = sum(int(np.prod(s)) for s in shapes) * 4 + n * 4 + 4 + n * 4
    if len(data) - pos < need:
        raise Truncated(f"checkpoint holds {len(data) - pos} payload bytes, needs {need}")
    if len(data) - pos > need:
        raise ModelMismatch("trailing bytes after checkpoint payload")

    def take(count, dtype):
        nonlocal pos
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        pos += count * 4
        return arr

    for p, shape in zip(params, shapes):
        p.data = take(int(np.prod(shape)), "<f4").astype(np.float32).reshape(shape)
    bins = take(n, "<f4").astype(np.float32)
    log_sigma = take(1, "<f4").astype(np.float32)
    counts = take(n, "<u4")
    q = QuantizerState(bins)
    q.log_sigma.data = log_sigma.reshape(())
    return CodecModel(net, q, FrequencyTable(counts), manifest["info"], frame)


def checkpoint_load(path) -> CodecModel:
    return checkpoint_from_bytes(Path(path).read_bytes())


def snapshot(model: CodecModel) -> List[np.ndarray]:
    return [p.data.copy() for p in model.net.parameters() + model.quantizer.parameters()]


def restore(model: CodecModel, state: List[np.ndarray]) -> None:
    for p, d in zip(model.net.parameters() + model.quantizer.parameters(), state):
        p.data = d.copy()
