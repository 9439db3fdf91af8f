import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaffusion.metrics import MetricSet, aggregate, error_map, evaluate, write_metrics


def naive(pred, gt, lo=None, hi=None):
    err, ierr = [], []
    for p, g in zip(pred.ravel(), gt.ravel()):
        if g <= 0 or (lo is not None and not lo <= g <= hi):
            continue
        err.append(abs(p - g) * 1000)
        ierr.append(abs(1 / p - 1 / g) * 1000)
    n = len(err)
    return (sum(err) / n, math.sqrt(sum(e * e for e in err) / n),
            sum(ierr) / n, math.sqrt(sum(e * e for e in ierr) / n))


def test_hand_example():
    m = evaluate(np.array([2.0, 4.0]), np.array([1.0, 2.0]))
    assert m.mae == 1500 and m.imae == 375
    assert m.rmse == pytest.approx(1581.1388300841897, abs=1e-9)
    assert m.irmse == pytest.approx(395.2847075210474, abs=1e-9)
    assert m.count == 2


def test_perfect_prediction():
    gt = np.random.default_rng(0).uniform(0.5, 5, (8, 8))
    assert evaluate(gt, gt) == MetricSet(0.0, 0.0, 0.0, 0.0, 64)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_matches_naive_loop(seed):
    r = np.random.default_rng(seed)
    gt = np.where(r.random((7, 9)) < 0.8, r.uniform(0.1, 80, (7, 9)), 0)
    gt.flat[0] = 1.0
    pred = r.uniform(0.1, 80, (7, 9))
    m = evaluate(pred, gt)
    for got, want in zip((m.mae, m.rmse, m.imae, m.irmse), naive(pred, gt)):
        assert abs(got - want) <= 1e-9 * max(1, abs(want))


def test_range_cap():
    gt = np.array([1.0, 3.0, 6.0])
    pred = np.array([1.5, 3.0, 1.0])
    m = evaluate(pred, gt, depth_range=(0.1, 5.0))
    assert m.count == 2 and m.mae == 250
    assert (m.mae, m.rmse, m.imae, m.irmse) == pytest.approx(naive(pred, gt, 0.1, 5.0))


def test_scaling_and_permutation():
    r = np.random.default_rng(1)
    gt, pred = r.uniform(1, 5, 50), r.uniform(1, 5, 50)
    m, m2 = evaluate(pred, gt), evaluate(2 * pred, 2 * gt)
    assert m2.mae == pytest.approx(2 * m.mae) and m2.imae == pytest.approx(m.imae / 2)
    perm = r.permutation(50)
    mp = evaluate(pred[perm], gt[perm])
    assert mp.mae == pytest.approx(m.mae, abs=1e-9) and mp.irmse == pytest.approx(m.irmse, abs=1e-9)


def test_errors():
    with pytest.raises(ValueError, match="shape"):
        evaluate(np.ones(3), np.ones(4))
    with pytest.raises(ValueError, match="no valid"):
        evaluate(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError, match="positive"):
        evaluate(np.zeros(3), np.ones(3))


def test_aggregate_is_per_frame_mean():
    a, b = MetricSet(1, 2, 3, 4, 10), MetricSet(3, 4, 5, 6, 5)
    assert aggregate([a, b]) == MetricSet(2, 3, 4, 5, 15)
    with pytest.raises(ValueError):
        aggregate([])


def test_error_map(tmp_path):
    gt = np.array([[1.0, 2.0], [0.0, 4.0]])
    pred = np.array([[1.0, 3.0], [1.0, 4.0]])
    out = error_map(pred, gt, path=tmp_path / "e.png")
    assert out.shape == (2, 2, 3) and out.dtype == np.uint8
    assert (out[1, 0] == 0).all()
    assert (out[0, 0] == out[1, 1]).all() and not (out[0, 0] == out[0, 1]).all()
    assert (tmp_path / "e.png").is_file()


def test_write_metrics(tmp_path):
    agg = write_metrics({"a": MetricSet(1, 2, 3, 4, 1), "b": MetricSet(3, 2, 1, 0, 1)}, tmp_path)
    assert agg.mae == 2
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "frame,mae,rmse,imae,irmse,count" and lines[-1].startswith("mean,2.0")
