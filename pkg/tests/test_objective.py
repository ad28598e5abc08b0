import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nscodec import autodiff as ad
from nscodec.errors import LengthMismatch
from nscodec.objective import (BPS_PER_BIT, LossWeights, bitrate_estimate, entropy_estimate, mse_loss,
                               quantization_penalty, total_loss)

from conftest import directional_check


def test_mse_values():
    assert mse_loss(np.zeros(2), np.ones(2)).item() == 1.0
    x = np.arange(4.0)
    assert mse_loss(x, x).item() == 0.0
    with pytest.raises(LengthMismatch):
        mse_loss(np.zeros(3), np.zeros(4))


def test_mse_gradient(rng):
    x, y = rng.normal(size=(2, 3, 8))
    t = ad.parameter(y)
    mse_loss(x, t).backward()
    np.testing.assert_allclose(t.grad, 2 * (y - x) / y.size)
    for _ in range(10):
        x, y = rng.normal(size=(2, 4, 16))
        assert directional_check(lambda v: mse_loss(x, v[0]), [y], rng) < 1e-4


def test_penalty_one_hot_zero():
    c = np.eye(32)[np.random.default_rng(0).integers(0, 32, 256)]
    assert quantization_penalty(c).item() == 0.0


def test_penalty_uniform():
    c = np.full((256, 32), 1 / 32)
    assert quantization_penalty(c).item() == pytest.approx(np.sqrt(32) - 1, abs=1e-6)
    assert np.sqrt(32) - 1 == pytest.approx(4.6569, abs=1e-4)


def test_penalty_single_split_symbol():
    c = np.eye(32)[np.zeros(256, dtype=int)]
    c[0, :2] = 0.5
    assert quantization_penalty(c).item() == pytest.approx((np.sqrt(2) - 1) / 256)
    assert (np.sqrt(2) - 1) / 256 == pytest.approx(0.001618, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 31), st.floats(1e-6, 0.5), st.integers(0, 31))
def test_penalty_positive_off_one_hot(k, eps, j):
    c = np.eye(32)[[k] * 4]
    other = (k + 1 + j % 31) % 32
    c[0, k] -= eps
    c[0, other] += eps
    assert quantization_penalty(c).item() > 0


def test_penalty_gradient(rng):
    for _ in range(10):
        c = rng.dirichlet(np.ones(6), size=(3, 4))
        assert directional_check(lambda v: quantization_penalty(v[0]), [c], rng, eps=1e-6) < 1e-4


def test_entropy_values():
    n = 32
    assert entropy_estimate(np.eye(n)[[3] * 10])[1].item() == 0.0
    assert entropy_estimate(np.full((5, n), 1 / n))[1].item() == pytest.approx(5.0, abs=1e-9)
    h = np.zeros(n)
    h[:2] = 0.5
    assert entropy_estimate(h[None])[1].item() == pytest.approx(1.0)


def test_entropy_histogram_and_permutation(rng):
    c = rng.dirichlet(np.ones(8), size=(6, 10))
    h, e = entropy_estimate(c)
    np.testing.assert_allclose(h, c.reshape(-1, 8).mean(axis=0))
    assert h.sum() == pytest.approx(1.0)
    perm = rng.permutation(6)
    assert entropy_estimate(c[perm])[1].item() == pytest.approx(e.item(), rel=1e-12)
    assert 0 <= e.item() <= 3


def test_entropy_gradient(rng):
    for _ in range(10):
        c = rng.dirichlet(np.ones(6), size=(3, 4))
        assert directional_check(lambda v: entropy_estimate(v[0])[1], [c], rng, eps=1e-6) < 1e-4


def test_total_perfect_is_zero():
    x = np.random.default_rng(0).normal(size=(2, 512))
    c = np.eye(32)[np.zeros((2, 256), dtype=int)]
    loss, report = total_loss(x, x, c, LossWeights(), True)
    assert loss.item() == 0.0 and report.total == 0.0


def test_total_stage1_ignores_codes(rng):
    x, y = rng.normal(size=(2, 2, 512))
    a, _ = total_loss(x, y, rng.dirichlet(np.ones(32), size=(2, 256)), LossWeights(), False)
    b, _ = total_loss(x, y, None, LossWeights(), False)
    assert a.item() == b.item()


def test_total_weighted_sum(monkeypatch):
    import nscodec.objective as obj
    one = lambda *a, **k: ad.Tensor(np.asarray(1.0))
    for name in ("mse_loss", "perceptual_loss", "quantization_penalty"):
        monkeypatch.setattr(obj, name, one)
    monkeypatch.setattr(obj, "entropy_estimate", lambda c: (None, ad.Tensor(np.asarray(1.0))))
    w = LossWeights(entropy=0.5)
    _, report = obj.total_loss(None, None, None, w, True)
    assert report.total == pytest.approx(30 + 5 + 10 + 0.5)


def test_bitrate_estimate():
    assert bitrate_estimate(0.0) == 0.0
    assert bitrate_estimate(5.0) == pytest.approx(42666.67, abs=0.01)
    assert bitrate_estimate(1.0547) == pytest.approx(9000, abs=1.0)
    assert BPS_PER_BIT == pytest.approx(16000 / 480 * 256)
