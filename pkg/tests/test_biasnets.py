import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from shipprompt.biasnets import (
    BottleneckParams,
    bottleneck_backward,
    bottleneck_forward,
    fuse_image_feature,
    hidden_dim,
    init_bottleneck,
    text_bias,
)

vec16 = arrays(np.float64, 16, elements=st.floats(-10, 10, allow_nan=False))


def test_hidden_width_divides_by_16_with_floor_of_one():
    assert init_bottleneck(32, 4, 0).W1.shape == (2, 32)
    assert init_bottleneck(8, 4, 0).W1.shape == (1, 8)
    assert hidden_dim(512) == 32
    with pytest.raises(ValueError):
        init_bottleneck(0, 4, 0)


def test_zero_last_outputs_zero():
    net = init_bottleneck(16, 32, 3)
    assert np.all(bottleneck_forward(net, np.random.default_rng(0).normal(size=16)) == 0)
    loaded = init_bottleneck(16, 32, 3, zero_last=False)
    assert np.any(loaded.W2 != 0)


def test_hand_computed_forward():
    net = BottleneckParams(np.array([[1.0, -1.0]]), np.zeros(1), np.array([[2.0]]), np.array([3.0]))
    assert bottleneck_forward(net, np.array([0.5, 1.0])).tolist() == [3.0]
    assert bottleneck_forward(net, np.array([2.0, 1.0])).tolist() == [5.0]


def test_text_bias_and_dimension_checks():
    net = init_bottleneck(16, 32, 1, zero_last=False)
    a, b = np.random.default_rng(0).normal(size=(2, 16))
    assert text_bias(net, a).shape == (32,)
    assert not np.allclose(text_bias(net, a), text_bias(net, b))
    assert np.all(text_bias(init_bottleneck(16, 32, 1), a) == 0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        text_bias(net, np.zeros(15))


def test_fusion_cases():
    rng = np.random.default_rng(2)
    clip, rs = rng.normal(size=16), rng.normal(size=16)
    assert fuse_image_feature(clip, init_bottleneck(16, 16, 0), rs).tobytes() == clip.tobytes()
    net = init_bottleneck(16, 16, 4, zero_last=False)
    np.testing.assert_array_equal(fuse_image_feature(np.zeros(16), net, rs), bottleneck_forward(net, rs))
    hidden = np.maximum(net.W1 @ rs + net.b1, 0)
    np.testing.assert_allclose(fuse_image_feature(clip, net, rs), clip + net.W2 @ hidden + net.b2, rtol=1e-14)


@given(vec16, vec16, vec16)
@settings(max_examples=50)
def test_fusion_is_additive_in_the_frozen_feature(a, b, r):
    net = init_bottleneck(16, 16, 9, zero_last=False)
    diff = fuse_image_feature(a, net, r) - fuse_image_feature(b, net, r)
    np.testing.assert_allclose(diff, a - b, atol=1e-9)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(5)
    net = init_bottleneck(32, 8, 1, zero_last=False)
    net = BottleneckParams(net.W1 * 20, net.b1 * 20, net.W2 * 20, net.b2)
    x, w = rng.normal(size=32), rng.normal(size=8)
    grads, dx = bottleneck_backward(net, x, w)
    h = 1e-6
    for name, arr in net.arrays().items():
        for idx in list(np.ndindex(arr.shape))[:6]:
            old = arr[idx]
            arr[idx] = old + h
            up = bottleneck_forward(net, x) @ w
            arr[idx] = old - h
            down = bottleneck_forward(net, x) @ w
            arr[idx] = old
            num = (up - down) / (2 * h)
            assert abs(num - grads[name][idx]) <= 1e-6 + 1e-4 * abs(num)
    num_dx = np.array([(bottleneck_forward(net, x + h * e) @ w - bottleneck_forward(net, x - h * e) @ w) / (2 * h)
                       for e in np.eye(32)])
    np.testing.assert_allclose(dx, num_dx, rtol=1e-5, atol=1e-8)
