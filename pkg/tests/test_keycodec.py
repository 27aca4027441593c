"""Tests for the key codec."""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from nflindex.errors import CodecError, DegenerateRange
from nflindex.keycodec import CodecParams, expand, expand_batch, fit_codec, merge, merge_batch, normalize, normalize_batch, reconstruct


def test_fit_codec_arithmetic():
    assert fit_codec([10.0, 20.0, 30.0], theta=2, dims=2) == CodecParams(mu=10.0, sigma=10.0, theta=2.0, dims=2)
    params = fit_codec([0.0, 100.0], theta=4, dims=2)
    assert params.mu == 0.0
    assert params.sigma == 25.0


@pytest.mark.parametrize('keys', [[5.0, 5.0], [7.0], []])
def test_fit_codec_degenerate(keys):
    with pytest.raises(DegenerateRange):
        fit_codec(keys, theta=2, dims=2)


def test_codec_params_validation():
    with pytest.raises(CodecError):
        CodecParams(mu=0.0, sigma=0.0, theta=2.0, dims=2)
    with pytest.raises(CodecError):
        CodecParams(mu=0.0, sigma=1.0, theta=1.0, dims=2)
    with pytest.raises(CodecError):
        CodecParams(mu=0.0, sigma=1.0, theta=2.0, dims=1)


def test_normalize():
    params = CodecParams(mu=10.0, sigma=10.0, theta=2.0, dims=2)
    assert normalize(20.0, params) == 1.0
    assert normalize(10.0, params) == 0.0
    assert normalize(30.0, params) == 2.0
    assert_array_equal(normalize_batch([10.0, 20.0, 30.0], params), [0.0, 1.0, 2.0])


def test_expand_examples():
    assert_array_equal(expand(3.25, CodecParams(mu=0.0, sigma=1.0, theta=2.0, dims=2)), [3.0, 0.25])
    assert_allclose(expand(3.141, CodecParams(mu=0.0, sigma=1.0, theta=10.0, dims=4)), [3.0, 1.0, 4.0, 0.1], atol=1e-9)
    for dims in (2, 3, 5):
        assert_array_equal(expand(0.0, CodecParams(mu=0.0, sigma=1.0, theta=2.0 ** 20, dims=dims)), np.zeros(dims))


def test_expand_digits_are_in_range():
    params = CodecParams(mu=0.0, sigma=1.0, theta=16.0, dims=5)
    features = expand_batch(np.random.default_rng(3).uniform(0.0, 16.0, size=1000), params)
    assert np.all(features[:, 1:-1] >= 0) and np.all(features[:, 1:-1] <= 15)
    assert_array_equal(features[:, 1:-1], np.floor(features[:, 1:-1]))
    assert np.all(features[:, -1] >= 0) and np.all(features[:, -1] < 1)


def test_merge_examples():
    assert merge([1.5, 0.25]) == 1.75
    assert merge([0.0, 0.0]) == 0.0
    assert merge([3.0, 0.25]) == 3.25


def test_roundtrip_two_dims_is_exact():
    params = CodecParams(mu=0.0, sigma=1.0, theta=2.0 ** 20, dims=2)
    x_norm = np.random.default_rng(0).uniform(0.0, 2.0 ** 20, size=10_000)
    assert_array_equal(merge_batch(expand_batch(x_norm, params)), x_norm)


def test_reconstruct_four_dims():
    params = CodecParams(mu=0.0, sigma=1.0, theta=2.0 ** 20, dims=4)
    x_norm = np.random.default_rng(1).uniform(0.0, 2.0 ** 20, size=10_000)
    features = expand_batch(x_norm, params)
    rebuilt = np.array([reconstruct(row, params) for row in features])
    assert_allclose(rebuilt, x_norm, rtol=1e-9)


def test_expand_is_order_embedding():
    params = CodecParams(mu=0.0, sigma=1.0, theta=2.0 ** 20, dims=3)
    x_norm = np.sort(np.random.default_rng(2).uniform(0.0, 100.0, size=500))
    features = expand_batch(x_norm, params)
    rows = [tuple(row) for row in features]
    assert rows == sorted(rows)


def test_batch_forms_match_scalar_forms():
    params = CodecParams(mu=0.0, sigma=1.0, theta=8.0, dims=3)
    x_norm = np.array([0.5, 1.75, 6.125])
    features = expand_batch(x_norm, params)
    for i, value in enumerate(x_norm):
        assert_array_equal(expand(value, params), features[i])
        assert merge(features[i]) == merge_batch(features)[i]
