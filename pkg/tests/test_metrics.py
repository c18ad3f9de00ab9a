import math

import numpy as np
import pytest

from ibanet import metrics, nc3
from ibanet.errors import DimensionError, ParameterError


def test_perfect_predictions():
    y = np.array([0, 1, 2, 2, 1])
    report, confusion = metrics.evaluate_predictions(y, y, ["a", "b", "c"])
    assert report.accuracy == report.macro_precision == report.macro_recall == report.macro_f1 == 100.0
    np.testing.assert_array_equal(confusion.counts, np.diag([1, 2, 2]))


def test_constant_predictor_on_balanced_set():
    y = np.array([0] * 5 + [1] * 5)
    report, _ = metrics.evaluate_predictions(y, np.zeros(10, dtype=int), ["a", "b"])
    assert report.accuracy == 50.0
    assert report.macro_recall == 50.0
    assert report.macro_precision == 25.0
    assert report.per_class[1].precision == 0.0
    assert report.per_class[1].f1 == 0.0


def test_hand_confusion_matrix():
    y_true = np.array([0] * 10 + [1] * 10)
    y_pred = np.array([0] * 8 + [1] * 2 + [0] * 1 + [1] * 9)
    report, confusion = metrics.evaluate_predictions(y_true, y_pred, ["a", "b"])
    assert confusion.counts == [[8, 2], [1, 9]]
    assert report.accuracy == pytest.approx(85.0)
    assert [c.recall for c in report.per_class] == pytest.approx([80.0, 90.0])
    assert [c.precision for c in report.per_class] == pytest.approx([800 / 9, 900 / 11])
    f1 = [2 * p * r / (p + r) for p, r in [(800 / 9, 80.0), (900 / 11, 90.0)]]
    assert report.macro_f1 == pytest.approx(sum(f1) / 2)
    assert confusion.total == 20
    assert [c.support for c in report.per_class] == [10, 10]


def test_accuracy_is_recomputable_from_confusion(rng):
    y_true = rng.integers(0, 4, size=200)
    y_pred = rng.integers(0, 4, size=200)
    report, confusion = metrics.evaluate_predictions(y_true, y_pred, list("abcd"))
    counts = np.asarray(confusion.counts)
    assert counts.sum() == 200
    np.testing.assert_array_equal(counts.sum(axis=1), np.bincount(y_true, minlength=4))
    assert report.accuracy == 100.0 * np.trace(counts) / 200
    assert all(0 <= c.f1 <= 100 for c in report.per_class)


def test_evaluate_rejects_bad_input():
    with pytest.raises(DimensionError):
        metrics.evaluate_predictions(np.zeros(3), np.zeros(2), ["a"])
    with pytest.raises(ParameterError):
        metrics.evaluate_predictions(np.zeros(0), np.zeros(0), ["a"])


def test_mean_report_is_unweighted():
    a, _ = metrics.evaluate_predictions(np.array([0, 1]), np.array([0, 1]), ["a", "b"])
    b, _ = metrics.evaluate_predictions(np.array([0, 1, 1, 1]), np.array([1, 1, 1, 1]), ["a", "b"])
    mean = metrics.mean_report([a, b])
    assert mean.accuracy == pytest.approx((100.0 + 75.0) / 2)
    assert mean.per_class[0].recall == pytest.approx(50.0)
    assert mean.per_class[1].support == 4
    with pytest.raises(ParameterError):
        metrics.mean_report([])


def test_confusion_matrices_add():
    _, a = metrics.evaluate_predictions(np.array([0, 1]), np.array([0, 0]), ["a", "b"])
    _, b = metrics.evaluate_predictions(np.array([1]), np.array([1]), ["a", "b"])
    assert (a + b).counts == [[1, 0], [1, 1]]
    assert (a + b).to_frame().columns == ["true", "a", "b"]


def test_pairwise_angles():
    orthogonal = metrics.pairwise_angles(np.eye(3))
    assert orthogonal.min == pytest.approx(90.0)
    assert orthogonal.spread == pytest.approx(0.0)
    same = metrics.pairwise_angles(np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert same.degrees[0][1] == pytest.approx(0.0, abs=1e-5)
    with pytest.raises(ParameterError):
        metrics.pairwise_angles(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(DimensionError):
        metrics.pairwise_angles(np.ones(3))


def test_etf_prototype_angles_are_equal():
    report = metrics.pairwise_angles(nc3.generate_etf(5).vectors, list("abcde"))
    assert report.spread < 1e-6
    assert report.min == pytest.approx(math.degrees(math.acos(-0.25)), abs=1e-6)
    degrees = np.asarray(report.degrees)
    np.testing.assert_array_equal(degrees, degrees.T)
    assert np.all(np.diag(degrees) == 0)


def test_router_summary_means_per_class():
    rates = np.array([[0.2, 0.8], [0.4, 0.6], [1.0, 0.0]])
    summary = metrics.router_summary(rates, np.array([0, 0, 1]), ["a", "b", "c"], ["50Hz", "25Hz"])
    np.testing.assert_allclose(summary.means[0], [0.3, 0.7])
    np.testing.assert_allclose(summary.means[1], [1.0, 0.0])
    assert all(math.isnan(v) for v in summary.means[2])
    assert summary.to_frame().columns == ["class", "r_50Hz", "r_25Hz"]
