"""Residual 1-D conv blocks, the encoder/decoder pair and the Adam optimizer."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch

KERNEL = 9
BLOCK_KINDS = ("residual", "channel_change", "downsample", "upsample")


class Conv1dLayer:
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, kernel: int = KERNEL,
                 stride: int = 1, dtype=np.float32):
        bound = 1.0 / np.sqrt(in_ch * kernel)
        self.weight = ad.parameter(rng.uniform(-bound, bound, (out_ch, in_ch, kernel)).astype(dtype))
        self.bias = ad.parameter(np.zeros(out_ch, dtype=dtype))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.weight, self.bias, self.stride)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


class PreluLayer:
    def __init__(self, channels: int, init: float = 0.25, dtype=np.float32):
        self.slope = ad.parameter(np.full(channels, init, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.prelu(x, self.slope)

    def parameters(self) -> List[Tensor]:
        return [self.slope]


class Block:
    """One of the four residual block kinds.

    Every kind is ``skip(x) + branch(x)``; the branch ends in a PReLU so a
    block whose conv weights and biases are zero reduces to its skip path.
    ``residual`` uses the identity skip, the others a kernel-1 projection
    (strided for ``downsample``, followed by a subpixel shuffle for
    ``upsample``).
    """

    def __init__(self, kind: str, in_ch: int, out_ch: int, rng: np.random.Generator, dtype=np.float32):
        if kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {kind!r}")
        self.kind, self.in_ch, self.out_ch = kind, in_ch, out_ch
        self.proj = None
        if kind == "residual":
            if in_ch != out_ch:
                raise ValueError("residual blocks preserve the channel count")
            self.convs = [Conv1dLayer(in_ch, in_ch, rng, dtype=dtype), Conv1dLayer(in_ch, in_ch, rng, dtype=dtype)]
            self.acts = [PreluLayer(in_ch, dtype=dtype), PreluLayer(in_ch, dtype=dtype)]
        elif kind == "channel_change":
            self.convs = [Conv1dLayer(in_ch, out_ch, rng, dtype=dtype)]
            self.acts = [PreluLayer(out_ch, dtype=dtype)]
            self.proj = Conv1dLayer(in_ch, out_ch, rng, kernel=1, dtype=dtype)
        elif kind == "downsample":
            self.convs = [Conv1dLayer(in_ch, out_ch, rng, stride=2, dtype=dtype),
                          Conv1dLayer(out_ch, out_ch, rng, dtype=dtype)]
            self.acts = [PreluLayer(out_ch, dtype=dtype), PreluLayer(out_ch, dtype=dtype)]
            self.proj = Conv1dLayer(in_ch, out_ch, rng, kernel=1, stride=2, dtype=dtype)
        else:
            self.convs = [Conv1dLayer(in_ch, 2 * out_ch, rng, dtype=dtype)]
            self.acts = [PreluLayer(2 * out_ch, dtype=dtype)]
            self.proj = Conv1dLayer(in_ch, 2 * out_ch, rng, kernel=1, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[2] != self.in_ch:
            raise ShapeMismatch(f"{self.kind} block expects {self.in_ch} channels, got {x.shape[2]}")
        h = x
        for conv, act in zip(self.convs, self.acts):
            h = act(conv(h))
        if self.kind == "residual":
            return ad.add(x, h)
        skip = self.proj(x)
        if self.kind == "upsample":
            return ad.add(ad.subpixel(skip), ad.subpixel(h))
        return ad.add(skip, h)

    def parameters(self) -> List[Tensor]:
        ps = []
        for conv, act in zip(self.convs, self.acts):
            ps += conv.parameters() + act.parameters()
        if self.proj is not None:
            ps += self.proj.parameters()
        return ps


def build_block(kind: str, channels, rng=None, dtype=np.float32) -> Block:
    """``channels`` is an int for channel-preserving kinds or an ``(in, out)`` pair."""
    rng = np.random.default_rng(0) if rng is None else rng
    in_ch, out_ch = (channels, channels) if np.isscalar(channels) else channels
    return Block(kind, int(in_ch), int(out_ch), rng, dtype)


@dataclass(frozen=True)
class NetworkSpec:
    channels: int = 32
    residual_blocks: int = 2
    window_len: int = 512

    @property
    def code_len(self) -> int:
        return self.window_len // 2

    def encoder_layout(self) -> List[Tuple[str, int, int]]:
        C = self.channels
        return ([("channel_change", 1, C)] + [("residual", C, C)] * self.residual_blocks
                + [("downsample", C, C), ("channel_change", C, 1)])

    def decoder_layout(self) -> List[Tuple[str, int, int]]:
        C = self.channels
        return ([("channel_change", 1, C), ("upsample", C, C)] + [("residual", C, C)] * self.residual_blocks
                + [("channel_change", C, 1)])

    def to_dict(self) -> Dict:
        return asdict(self)


class Stack:
    """Block chain mapping (B, 1, in_len) to (B, 1, out_len).

    With a single channel the (B, 1, L) interface and the channels-last
    (B, L, 1) storage share memory, so the boundary reshapes are free.
    """

    def __init__(self, layout, rng, dtype, in_len: int, out_len: int):
        self.blocks = [Block(kind, i, o, rng, dtype) for kind, i, o in layout]
        self.in_len, self.out_len = in_len, out_len

    def __call__(self, x: Tensor) -> Tensor:
        x = ad.as_tensor(x)
        if x.data.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.in_len:
            raise ShapeMismatch(f"expected (B, 1, {self.in_len}), got {x.shape}")
        batch = x.shape[0]
        h = ad.reshape(x, (batch, self.in_len, 1))
        for block in self.blocks:
            h = block(h)
        return ad.reshape(h, (batch, 1, self.out_len))

    def parameters(self) -> List[Tensor]:
        return [p for b in self.blocks for p in b.parameters()]


class Network:
    """Encoder (B,1,512)->(B,1,256) and decoder (B,1,256)->(B,1,512)."""

    def __init__(self, spec: NetworkSpec = NetworkSpec(), seed: int = 42, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.spec = spec
        self.encoder = Stack(spec.encoder_layout(), rng, dtype, spec.window_len, spec.code_len)
        self.decoder = Stack(spec.decoder_layout(), rng, dtype, spec.code_len, spec.window_len)

    def parameters(self) -> List[Tensor]:
        return self.encoder.parameters() + self.decoder.parameters()

    def astype(self, dtype) -> "Network":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def encoder_forward(window_batch, net: Network) -> Tensor:
    return net.encoder(window_batch)


def decoder_forward(code_batch, net: Network) -> Tensor:
    return net.decoder(code_batch)


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: List[Tensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)
            p.data = p.data - update

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def adam_step(params: List[Tensor], grads: List[np.ndarray], state: Adam, lr: float) -> List[Tensor]:
    for p, g in zip(params, grads):
        p.grad = g
    state.step(lr)
    return params
