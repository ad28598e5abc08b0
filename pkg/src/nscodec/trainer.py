"""Two-stage training with entropy-weight rate control."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .audio_io import load_normalized
from .coder import build_frequency_table
from .errors import NanLoss
from .framing import FrameConfig, extract_windows
from .model import CodecModel, restore, snapshot
from .network import Adam, Network, NetworkSpec
from .objective import (LossWeights, bitrate_estimate, entropy_bits, mse_loss, total_loss)
from .mfcc import perceptual_loss
from .quantizer import QuantizerState, dequantize, kmeans_init, soft_quantize

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    stage1_epochs: int = 5
    stage2_epochs: int = 145
    batch_size: int = 128
    lr_initial: float = 0.025
    lr_final: float = 0.01
    tau_initial: float = 0.5
    tau_change: float = 0.025
    target_bps: float = 9000.0
    target_halfwidth: float = 450.0
    seed: int = 42
    channels: int = 32
    residual_blocks: int = 2
    num_bins: int = 32
    sigma_initial: float = 300.0
    split: Tuple[int, int, int] = (3000, 200, 500)
    mse_weight: float = 30.0
    perceptual_weight: float = 5.0
    quantization_weight: float = 10.0

    @property
    def total_epochs(self) -> int:
        return self.stage1_epochs + self.stage2_epochs

    def loss_weights(self, entropy_weight: float) -> LossWeights:
        return LossWeights(self.mse_weight, self.perceptual_weight, self.quantization_weight, entropy_weight)

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(channels=self.channels, residual_blocks=self.residual_blocks)

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


DESK_SCALE = dict(split=(48, 8, 8), stage1_epochs=10, stage2_epochs=20, channels=16, residual_blocks=1,
                  lr_initial=0.0025, lr_final=0.001, tau_change=1.0)


def desk_config(**overrides) -> TrainConfig:
    return replace(TrainConfig(**DESK_SCALE), **overrides)


@dataclass
class TrainState:
    epoch: int = 0
    entropy_weight: float = 0.0
    lr: float = 0.0
    best_score: float = -math.inf
    best_epoch: Optional[int] = None
    quantization_on: bool = False


LOG_FIELDS = ["epoch", "stage", "mse", "perceptual", "quantization_penalty", "entropy_bits", "total",
              "lambda_entropy", "lr", "estimated_bps", "val_mse", "val_perceptual", "val_score", "checkpointed"]


def cosine_lr(epoch: float, cfg: TrainConfig, total: Optional[int] = None) -> float:
    """One descending cosine arc from ``lr_initial`` (epoch 0) to ``lr_final`` (epoch ``total``)."""
    T = cfg.total_epochs if total is None else total
    frac = min(max(epoch / T, 0.0), 1.0) if T > 0 else 1.0
    return cfg.lr_final + 0.5 * (cfg.lr_initial - cfg.lr_final) * (1.0 + math.cos(math.pi * frac))


def entropy_controller(estimated_bps: float, target: float, entropy_weight: float, cfg: TrainConfig) -> float:
    if estimated_bps > target + cfg.target_halfwidth:
        entropy_weight += cfg.tau_change
    elif estimated_bps < target - cfg.target_halfwidth:
        entropy_weight -= cfg.tau_change
    return max(entropy_weight, 0.0)


def in_target(estimated_bps: float, cfg: TrainConfig) -> bool:
    return abs(estimated_bps - cfg.target_bps) <= cfg.target_halfwidth


def load_windows(paths: Sequence, frame: FrameConfig = FrameConfig()) -> np.ndarray:
    chunks = [extract_windows(load_normalized(p).samples, frame).windows for p in paths]
    if not chunks:
        return np.zeros((0, frame.window_len), np.float32)
    return np.concatenate(chunks).astype(np.float32)


@dataclass
class ValidationResult:
    mse: float
    perceptual: float
    score: float
    histogram: Optional[np.ndarray] = None
    entropy_bits: float = float("nan")
    estimated_bps: float = float("nan")


class Trainer:
    def __init__(self, cfg: TrainConfig, train_windows: np.ndarray, val_windows: np.ndarray,
                 log_path=None):
        self.cfg = cfg
        self.train = np.asarray(train_windows, dtype=np.float32)
        self.val = np.asarray(val_windows, dtype=np.float32)
        if len(self.train) == 0 or len(self.val) == 0:
            raise ValueError("training and validation sets must both contain windows")
        self.rng = np.random.default_rng(cfg.seed)
        net = Network(cfg.network_spec(), seed=cfg.seed)
        placeholder = np.linspace(-1.0, 1.0, cfg.num_bins)
        self.model = CodecModel(net, QuantizerState(placeholder, cfg.sigma_initial),
                                info={"target_bps": float(cfg.target_bps), "config": cfg.to_dict()})
        self.optimizer = Adam(net.parameters())
        self.state = TrainState()
        self.rows: List[Dict] = []
        self.log_path = Path(log_path) if log_path else None
        self.best: Optional[List[np.ndarray]] = None
        self.best_hist: Optional[np.ndarray] = None

    # -- forward paths -------------------------------------------------------

    def _forward(self, x: np.ndarray, quantize: bool):
        net, q = self.model.net, self.model.quantizer
        code = net.encoder(x[:, None, :])
        s = None
        if quantize:
            s = soft_quantize(ad.reshape(code, (len(x), -1)), q)
            code = ad.reshape(dequantize(s, q), code.shape)
        y = net.decoder(code)
        return ad.reshape(y, x.shape), s

    def train_epoch(self, stage: int) -> Dict[str, float]:
        cfg, quantize = self.cfg, self.state.quantization_on
        weights = cfg.loss_weights(self.state.entropy_weight)
        order = self.rng.permutation(len(self.train))
        sums = dict(mse=0.0, perceptual=0.0, quantization_penalty=0.0, entropy_bits=0.0, total=0.0)
        batches = 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            x = self.train[np.sort(order[start:start + cfg.batch_size])]
            y, s = self._forward(x, quantize)
            loss, report = total_loss(x, y, s, weights, quantize)
            if not np.isfinite(report.total):
                raise NanLoss(f"non-finite loss at epoch {self.state.epoch} minibatch {b}")
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step(self.state.lr)
            for k in sums:
                sums[k] += getattr(report, k)
            batches += 1
        return {k: v / batches for k, v in sums.items()}

    def validate(self) -> ValidationResult:
        cfg, model = self.cfg, self.model
        codes = model.encode_codes(self.val)
        if self.state.quantization_on:
            hist = model.soft_histogram(codes)
            bits = entropy_bits(hist)
            recon = model.decode_symbols(model.symbols_from_codes(codes))
        else:
            hist, bits = None, float("nan")
            recon = model.decode_codes(codes)
        with ad.no_grad():
            mse = mse_loss(self.val, recon).item()
            perc = perceptual_loss(self.val.astype(np.float64), recon.astype(np.float64)).item()
        score = -(cfg.mse_weight * mse + cfg.perceptual_weight * perc)
        bps = bitrate_estimate(bits) if hist is not None else float("nan")
        return ValidationResult(mse, perc, score, hist, bits, bps)

    # -- stages --------------------------------------------------------------

    def _record(self, stage: int, train: Dict[str, float], val: ValidationResult, checkpointed: bool,
                entropy_weight: float):
        row = {
            "epoch": self.state.epoch + 1,
            "stage": stage,
            "mse": train["mse"],
            "perceptual": train["perceptual"],
            "quantization_penalty": train["quantization_penalty"] if stage == 2 else "",
            "entropy_bits": train["entropy_bits"] if stage == 2 else "",
            "total": train["total"],
            "lambda_entropy": entropy_weight if stage == 2 else "",
            "lr": self.state.lr,
            "estimated_bps": val.estimated_bps if stage == 2 else "",
            "val_mse": val.mse,
            "val_perceptual": val.perceptual,
            "val_score": val.score,
            "checkpointed": int(checkpointed),
        }
        self.rows.append(row)
        log.info("epoch %d stage %d total %.4f val_mse %.5f bps %s lambda %s", row["epoch"], stage,
                 row["total"], val.mse, row["estimated_bps"], row["lambda_entropy"])
        if self.log_path is not None:
            write_log(self.log_path, self.rows)

    def run_stage1(self) -> CodecModel:
        for _ in range(self.cfg.stage1_epochs):
            self.state.lr = cosine_lr(self.state.epoch, self.cfg)
            train = self.train_epoch(1)
            val = self.validate()
            self._record(1, train, val, False, 0.0)
            self.state.epoch += 1
        return self.model

    def transition_to_stage2(self) -> CodecModel:
        codes = self.model.encode_codes(self.train)
        bins = kmeans_init(codes, self.cfg.num_bins, seed=self.cfg.seed)
        q = self.model.quantizer
        q.bins.data = bins.astype(q.bins.data.dtype)
        q.log_sigma.data = np.asarray(np.log(self.cfg.sigma_initial), dtype=q.log_sigma.data.dtype)
        # the quantizer joins the optimizer with fresh moments
        self.optimizer.params += q.parameters()
        self.optimizer.m += [np.zeros_like(p.data) for p in q.parameters()]
        self.optimizer.v += [np.zeros_like(p.data) for p in q.parameters()]
        self.state.entropy_weight = self.cfg.tau_initial
        self.state.quantization_on = True
        return self.model

    def run_stage2(self) -> CodecModel:
        cfg = self.cfg
        for _ in range(cfg.stage2_epochs):
            self.state.lr = cosine_lr(self.state.epoch, cfg)
            used_weight = self.state.entropy_weight
            train = self.train_epoch(2)
            val = self.validate()
            qualifies = in_target(val.estimated_bps, cfg) and val.score > self.state.best_score
            if qualifies:
                self.state.best_score = val.score
                self.state.best_epoch = self.state.epoch + 1
                self.best = snapshot(self.model)
                self.best_hist = val.histogram
            self._record(2, train, val, qualifies, used_weight)
            self.state.entropy_weight = entropy_controller(val.estimated_bps, cfg.target_bps, used_weight, cfg)
            self.state.epoch += 1
        return self.finalize()

    def finalize(self) -> CodecModel:
        model = self.model
        if self.best is not None:
            restore(model, self.best)
            hist = self.best_hist
        else:
            log.warning("no epoch reached the target region; keeping the final weights")
            hist = self.validate().histogram
        model.table = build_frequency_table(hist)
        model.info.update({
            "best_epoch": self.state.best_epoch,
            "best_score": None if self.best is None else float(self.state.best_score),
            "in_target": self.best is not None,
        })
        return model

    def fit(self) -> CodecModel:
        self.run_stage1()
        self.transition_to_stage2()
        return self.run_stage2()


def write_log(path, rows: List[Dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def read_log(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
