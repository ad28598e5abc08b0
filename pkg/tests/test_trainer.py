import math

import numpy as np
import pytest

from nscodec.errors import NanLoss, TooFewDistinctValues
from nscodec.model import checkpoint_bytes
from nscodec.trainer import (LOG_FIELDS, TrainConfig, Trainer, cosine_lr, desk_config, entropy_controller,
                             in_target, read_log, write_log)

TINY = dict(channels=4, residual_blocks=1, stage1_epochs=2, stage2_epochs=2, batch_size=16,
            lr_initial=0.0025, lr_final=0.001, seed=7)


def _windows(seed, count):
    rng = np.random.default_rng(seed)
    t = np.arange(512) / 16000
    f = rng.uniform(100, 1000, (count, 1))
    return (0.5 * np.sin(2 * np.pi * f * t) + 0.05 * rng.normal(size=(count, 512))).astype(np.float32)


@pytest.fixture(scope="module")
def data():
    return _windows(0, 48), _windows(1, 12)


class TestSchedule:
    def test_cosine_endpoints(self):
        cfg = TrainConfig()
        assert cosine_lr(0, cfg) == pytest.approx(0.025)
        assert cosine_lr(cfg.total_epochs, cfg) == pytest.approx(0.01)
        assert cosine_lr(cfg.total_epochs / 2, cfg) == pytest.approx(0.0175)

    def test_cosine_monotone_single_arc(self):
        cfg = TrainConfig()
        lrs = [cosine_lr(e, cfg) for e in range(cfg.total_epochs + 1)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_controller_examples(self):
        cfg = TrainConfig()
        assert entropy_controller(10000, 9000, 0.5, cfg) == pytest.approx(0.525)
        assert entropy_controller(8900, 9000, 0.5, cfg) == 0.5
        assert entropy_controller(5000, 9000, 0.01, cfg) == 0.0
        assert entropy_controller(8000, 9000, 0.5, cfg) == pytest.approx(0.475)

    def test_controller_region_edges(self):
        cfg = TrainConfig()
        assert entropy_controller(9450, 9000, 1.0, cfg) == 1.0
        assert entropy_controller(8550, 9000, 1.0, cfg) == 1.0
        assert in_target(9450, cfg) and not in_target(9451, cfg)

    def test_controller_on_affine_plant(self):
        cfg = TrainConfig()
        lam = cfg.tau_initial
        history = []
        for _ in range(60):
            bps = 9000 + 4000 * (0.6 - lam)
            history.append(bps)
            lam = entropy_controller(bps, 9000, lam, cfg)
            assert lam >= 0
        first = next(i for i, b in enumerate(history) if abs(b - 9000) <= 450)
        assert all(abs(b - 9000) <= 450 for b in history[first:])

    def test_desk_preset(self):
        cfg = desk_config()
        assert (cfg.channels, cfg.residual_blocks) == (16, 1)
        assert (cfg.stage1_epochs, cfg.stage2_epochs) == (10, 20)
        assert sum(cfg.split) == 64


class TestTrainer:
    def test_transition(self, data):
        tr = Trainer(TrainConfig(**TINY), *data)
        tr.run_stage1()
        assert not tr.state.quantization_on
        tr.transition_to_stage2()
        assert tr.state.entropy_weight == 0.5
        assert tr.state.quantization_on
        bins = tr.model.quantizer.bins.data
        assert bins.shape == (32,) and np.all(np.diff(bins) > 0)
        assert tr.model.quantizer.sigma == pytest.approx(300, rel=1e-5)

    def test_constant_encoder_output_is_reported(self, data):
        tr = Trainer(TrainConfig(**TINY), *data)
        for p in tr.model.net.encoder.parameters():
            p.data = np.zeros_like(p.data)
        with pytest.raises(TooFewDistinctValues):
            tr.transition_to_stage2()

    def test_log_rows_and_gating(self, data, tmp_path):
        log_path = tmp_path / "log.csv"
        cfg = TrainConfig(**TINY, target_bps=40000, target_halfwidth=40000)
        tr = Trainer(cfg, *data, log_path=log_path)
        model = tr.fit()
        rows = read_log(log_path)
        assert len(rows) == 4 and list(rows[0]) == LOG_FIELDS
        for r in rows[:2]:
            assert r["stage"] == "1"
            assert r["quantization_penalty"] == r["entropy_bits"] == r["lambda_entropy"] == ""
        for r in rows[2:]:
            assert r["stage"] == "2" and float(r["estimated_bps"]) >= 0
        lambdas = [float(r["lambda_entropy"]) for r in rows[2:]]
        assert lambdas[0] == 0.5
        assert all(abs(b - a) in (0.0, cfg.tau_change) for a, b in zip(lambdas, lambdas[1:]))
        # with a huge target region every stage-2 epoch qualifies when it improves
        scores = [float(r["val_score"]) for r in rows[2:]]
        assert model.info["best_score"] == pytest.approx(max(scores))
        flagged = [int(r["checkpointed"]) for r in rows[2:]]
        assert flagged[0] == 1 and model.info["in_target"]

    def test_out_of_target_keeps_final_weights(self, data):
        cfg = TrainConfig(**TINY, target_bps=1.0, target_halfwidth=0.5)
        model = Trainer(cfg, *data).fit()
        assert model.info["in_target"] is False and model.info["best_epoch"] is None
        assert model.table.n == 32

    def test_stage1_loss_decreases(self, data):
        cfg = TrainConfig(**{**TINY, "stage1_epochs": 5})
        tr = Trainer(cfg, *data)
        tr.run_stage1()
        totals = [r["total"] for r in tr.rows]
        drops = sum(b < a for a, b in zip(totals, totals[1:]))
        assert drops >= 3

    def test_determinism(self, data):
        a = Trainer(TrainConfig(**TINY), *data).fit()
        b = Trainer(TrainConfig(**TINY), *data).fit()
        assert checkpoint_bytes(a) == checkpoint_bytes(b)

    def test_nan_aborts(self, data):
        bad = data[0].copy()
        bad[3, 10] = np.nan
        tr = Trainer(TrainConfig(**TINY), bad, data[1])
        with pytest.raises(NanLoss, match="minibatch"):
            tr.train_epoch(1)

    def test_empty_sets_rejected(self, data):
        with pytest.raises(ValueError):
            Trainer(TrainConfig(**TINY), data[0][:0], data[1])


def test_log_round_trip(tmp_path):
    rows = [{k: "" for k in LOG_FIELDS} | {"epoch": 1, "stage": 1, "mse": 0.25, "val_score": -math.pi}]
    write_log(tmp_path / "l.csv", rows)
    back = read_log(tmp_path / "l.csv")
    assert float(back[0]["val_score"]) == -math.pi and back[0]["mse"] == "0.25"
