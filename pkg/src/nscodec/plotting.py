"""Figures for training logs and evaluation reports (rendered to files, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _col(rows: List[Dict], key: str) -> np.ndarray:
    return np.array([float(r[key]) if r.get(key) not in ("", None) else np.nan for r in rows])


def plot_training_log(rows: List[Dict], out_path, target_bps: Optional[float] = None,
                      halfwidth: float = 450.0) -> Path:
    """Three stacked panels: losses, validation distortion, and rate with lambda."""
    epoch = _col(rows, "epoch")
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)

    ax = axes[0]
    ax.plot(epoch, _col(rows, "total"), label="total")
    ax.plot(epoch, _col(rows, "perceptual"), label="perceptual")
    ax.plot(epoch, _col(rows, "quantization_penalty"), label="quantization")
    ax.plot(epoch, _col(rows, "entropy_bits"), label="entropy (bits)")
    ax.set_ylabel("training loss terms")
    ax.legend(fontsize=8)

    ax = axes[1]
    ax.semilogy(epoch, _col(rows, "val_mse"), label="validation MSE")
    ax.semilogy(epoch, _col(rows, "mse"), label="training MSE", alpha=0.6)
    ckpt = _col(rows, "checkpointed") > 0
    if ckpt.any():
        ax.semilogy(epoch[ckpt], _col(rows, "val_mse")[ckpt], "o", label="checkpointed")
    ax.set_ylabel("MSE")
    ax.legend(fontsize=8)

    ax = axes[2]
    bps = _col(rows, "estimated_bps")
    ax.plot(epoch, bps / 1000.0, color="C0", label="estimated kbps")
    if target_bps is not None:
        ax.axhspan((target_bps - halfwidth) / 1000, (target_bps + halfwidth) / 1000, color="C2", alpha=0.2,
                   label="target region")
    ax.set_ylabel("kbps")
    ax.set_xlabel("epoch")
    twin = ax.twinx()
    twin.step(epoch, _col(rows, "lambda_entropy"), where="post", color="C3", label="entropy weight")
    twin.set_ylabel("entropy weight", color="C3")
    ax.legend(fontsize=8, loc="upper right")

    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def plot_eval(rows: List[Dict], out_path, target_bps: Optional[float] = None) -> Path:
    """Per-file SNR and measured vs estimated rate."""
    files = [r for r in rows if r["file"] != "MEAN" and not r.get("error")]
    names = [r["file"] for r in files]
    idx = np.arange(len(files))
    fig, (a, b) = plt.subplots(2, 1, figsize=(max(6, 0.35 * len(files) + 2), 6))
    a.bar(idx, [float(r["snr_db"]) for r in files], color="C0")
    a.set_ylabel("SNR (dB)")
    a.set_xticks(idx, names, rotation=90, fontsize=7)

    measured = np.array([float(r["measured_bps"]) for r in files]) / 1000
    payload = np.array([float(r["payload_bps"]) for r in files]) / 1000
    estimate = np.array([float(r["estimated_bps"]) for r in files]) / 1000
    b.plot(idx, measured, "o-", label="measured (file)")
    b.plot(idx, payload, "s-", label="measured (payload)")
    b.plot(idx, estimate, "x--", label="entropy estimate")
    if target_bps is not None:
        b.axhline(target_bps / 1000, color="C2", alpha=0.6, label="target")
    b.set_ylabel("kbps")
    b.set_xticks(idx, names, rotation=90, fontsize=7)
    b.legend(fontsize=8)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out
