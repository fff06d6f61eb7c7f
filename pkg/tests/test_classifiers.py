"""Guidance classifiers and their gradients."""
import numpy as np
import pytest

from src.core.errors import DomainError, ShapeError
from src.services.classifiers import (
    LinearClassifier,
    LogisticClassifier,
    class_indicator,
    classifier_from_dict,
    finite_difference_check,
)


def test_linear_gradient_is_the_weight_matrix():
    weights = np.arange(6, dtype=float).reshape(2, 3)
    clf = LinearClassifier(weights, bias=0.5)
    x = np.random.default_rng(0).normal(size=(4, 2, 3))
    assert np.array_equal(clf.gradient(x), np.broadcast_to(weights, x.shape))
    assert clf.log_score(x[0]) == pytest.approx(float(np.sum(x[0] * weights)) + 0.5)


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    clf = LogisticClassifier(rng.normal(size=(3, 4)), bias=-0.2)
    for _ in range(5):
        assert finite_difference_check(clf, rng.normal(size=(3, 4)), rng=rng) < 1e-4


def test_logistic_score_is_a_log_probability():
    clf = LogisticClassifier(np.ones((2, 2)))
    x = np.random.default_rng(2).normal(scale=10.0, size=(50, 2, 2))
    assert np.all(clf.log_score(x) <= 0.0)


def test_class_indicator():
    clf = class_indicator(2, 4, position=0, tokens=(0, 1))
    expected = np.zeros((2, 4))
    expected[0, [0, 1]] = 1.0
    assert np.array_equal(clf.weights, expected)
    assert isinstance(class_indicator(2, 4, 1, [3], kind="logistic"), LogisticClassifier)


def test_classifier_documents():
    clf = classifier_from_dict({"kind": "logistic", "weights": [[1.0, 0.0], [0.0, 2.0]], "bias": 1.0})
    assert isinstance(clf, LogisticClassifier)
    assert classifier_from_dict(clf.to_dict()).to_dict() == clf.to_dict()
    assert isinstance(classifier_from_dict({"weights": [[1.0, 0.0]]}), LinearClassifier)
    with pytest.raises(DomainError):
        classifier_from_dict({"kind": "forest", "weights": [[1.0]]})


def test_classifier_shape_checks():
    with pytest.raises(ShapeError):
        LinearClassifier(np.ones(3))
    with pytest.raises(ShapeError):
        LinearClassifier(np.ones((2, 3))).gradient(np.ones((3, 2)))
