import numpy as np
import pytest

from nscodec import autodiff as ad


def directional_check(build, arrays, rng, eps=1e-4, directions=3):
    """Compare <grad, v> with a central difference along random directions.

    ``build`` maps a list of Tensors to a Tensor; its output is projected on a
    fixed random vector so any op becomes a scalar loss. Returns the worst
    relative error.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    probe = rng.normal(size=build([ad.Tensor(a) for a in arrays]).shape)

    def loss(vals):
        return float((build([ad.Tensor(v) for v in vals]).data * probe).sum())

    params = [ad.parameter(a) for a in arrays]
    out = build(params)
    out.backward(probe)
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for _ in range(directions):
        dirs = [rng.normal(size=a.shape) for a in arrays]
        analytic = sum(float((g * d).sum()) for g, d in zip(grads, dirs))
        plus = loss([a + eps * d for a, d in zip(arrays, dirs)])
        minus = loss([a - eps * d for a, d in zip(arrays, dirs)])
        numeric = (plus - minus) / (2 * eps)
        scale = max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion.

    Usage: ``criterion(7, ok, "detail")``; the line is printed immediately
    and repeated in the terminal summary.
    """
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
