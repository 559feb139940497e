import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from shipprompt import classifier
from shipprompt.classifier import ClassProbabilities, class_probabilities, cross_entropy, predict

nonzero = arrays(np.float64, 6, elements=st.floats(-5, 5, allow_nan=False)).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


def test_identical_texts_give_uniform():
    p = class_probabilities(np.ones(4), np.tile(np.arange(1.0, 5.0), (5, 1)), 0.01)
    np.testing.assert_allclose(p.p, 0.2)
    assert class_probabilities(np.ones(4), np.ones((1, 4)), 0.01).p.tolist() == [1.0]


def test_two_class_closed_form():
    p = class_probabilities(np.array([1.0, 0.0]), np.array([[1.0, 0.0], [0.0, 1.0]]), 1.0, (3, 8))
    e = math.e
    np.testing.assert_allclose(p.p, [e / (e + 1), 1 / (e + 1)], rtol=1e-12)
    assert round(p.p[0], 4) == 0.7311 and round(p.p[1], 4) == 0.2689
    assert abs(cross_entropy(p, 8) - 1.3133) < 1e-4
    with pytest.raises(ValueError, match="not among"):
        cross_entropy(p, 5)


def test_cross_entropy_edges():
    p = class_probabilities(np.array([1.0, 0.0]), np.array([[1.0, 0.0], [-1.0, 0.0]]), 1e-4)
    assert cross_entropy(p, 0) == 0.0
    uniform = class_probabilities(np.ones(3), np.ones((7, 3)), 0.5)
    assert abs(cross_entropy(uniform, 2) - math.log(7)) < 1e-12


def test_invalid_inputs():
    with pytest.raises(ValueError, match="temperature"):
        class_probabilities(np.ones(2), np.ones((2, 2)), 0.0)
    with pytest.raises(ValueError, match="zero-norm"):
        class_probabilities(np.zeros(2), np.ones((2, 2)), 0.1)
    with pytest.raises(ValueError, match="zero-norm"):
        class_probabilities(np.ones(2), np.array([[1.0, 0.0], [0.0, 0.0]]), 0.1)


def _probs(p, ids):
    p = np.asarray(p, dtype=np.float64)
    return ClassProbabilities(p, tuple(ids), 1.0, np.log(p))


def test_predict_rules():
    assert predict(_probs([0.2, 0.5, 0.3], (4, 5, 6))) == 5
    assert predict(_probs([0.5, 0.5], (9, 2))) == 2
    assert predict(_probs([1.0], (7,))) == 7


@given(nonzero, st.lists(nonzero, min_size=1, max_size=5))
@settings(max_examples=80)
def test_distribution_and_invariances(image, texts):
    texts = np.stack(texts)
    base = class_probabilities(image, texts, 0.01)
    assert abs(base.p.sum() - 1) <= 1e-6 and np.all((base.p >= 0) & (base.p <= 1))
    cos = classifier.cosine_logits(image, texts, 1.0)
    assert np.all(np.abs(cos) <= 1 + 1e-9)
    top = np.sort(cos)[::-1]
    if len(top) == 1 or top[0] - top[1] > 1e-12:
        assert {predict(class_probabilities(image, texts, t)) for t in (0.01, 0.1, 1.0)} == {int(np.argmax(cos))}
    for s in (1e-3, 7.0, 1e4):
        np.testing.assert_allclose(class_probabilities(image * s, texts, 0.01).p, base.p, atol=1e-9)


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    image, texts = rng.normal(size=6), rng.normal(size=(4, 6))
    loss, dimage, dtext = classifier.loss_and_grads(image, texts, 0.1, 2)
    assert abs(loss - cross_entropy(class_probabilities(image, texts, 0.1), 2)) < 1e-12
    h = 1e-6

    def f(i, t):
        return cross_entropy(class_probabilities(i, t, 0.1), 2)

    for k in range(6):
        e = np.eye(6)[k] * h
        num = (f(image + e, texts) - f(image - e, texts)) / (2 * h)
        assert abs(num - dimage[k]) <= 1e-4 * max(abs(num), 1e-6)
    for idx in [(0, 0), (2, 3), (3, 5)]:
        tp, tm = texts.copy(), texts.copy()
        tp[idx] += h
        tm[idx] -= h
        num = (f(image, tp) - f(image, tm)) / (2 * h)
        assert abs(num - dtext[idx]) <= 1e-4 * max(abs(num), 1e-6)
