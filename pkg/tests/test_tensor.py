from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.signal import correlate2d
import numpy as np
import pytest

from fpm_codesign import tensor as T
from fpm_codesign.channel import make_rng
from fpm_codesign.exceptions import ContractError, ShapeError
from fpm_codesign.testing import gradient_error, naive_dft2, numerical_gradient


def _param(shape, seed=0):
    return T.Tensor(np.random.default_rng(seed).normal(size=shape), requires_grad=True)


def check_gradients(build, *params, tol=1e-5):
    """Compare backpropagated gradients of ``sum(build() * R)`` to finite differences"""
    weights = np.random.default_rng(99).normal(size=build().shape)

    def loss():
        return (build() * weights).sum()

    loss().backward()
    for param in params:
        analytic = param.grad.copy()
        numeric = numerical_gradient(lambda: loss().item(), param)
        assert gradient_error(analytic, numeric) < tol


def test_arithmetic_gradients():
    a, b = _param((3, 4), 0), _param((4,), 1)
    check_gradients(lambda: a * b + a - b, a, b)
    check_gradients(lambda: T.square(a) / 2.0, a)
    check_gradients(lambda: T.softplus(a), a)
    check_gradients(lambda: -a.mean(axis=0), a)


def test_matmul_gradients():
    a, b, v = _param((2, 3, 4), 0), _param((4, 5), 1), _param((4,), 2)
    check_gradients(lambda: a @ b, a, b)
    check_gradients(lambda: a @ v, a, v)
    with pytest.raises(ShapeError):
        a @ _param((3, 5))


def test_shape_gradients():
    a, b = _param((2, 3, 4), 0), _param((2, 1, 4), 1)
    check_gradients(lambda: T.concat([a, b], axis=1), a, b)
    check_gradients(lambda: T.stack([a, a * 2.0], axis=0), a)
    check_gradients(lambda: T.transpose(a, (2, 0, 1)), a)
    check_gradients(lambda: a[:, 1:, ::2], a)
    check_gradients(lambda: T.roll(a, (1, -1), axis=(1, 2)), a)
    check_gradients(lambda: T.diff(a, axis=-1), a)
    check_gradients(lambda: a.reshape(6, 4), a)


def test_image_gradients():
    x, w, b = _param((2, 3, 5, 4), 0), _param((4, 3, 3, 3), 1), _param((4,), 2)
    check_gradients(lambda: T.conv2d(x, w, b), x, w, b)
    check_gradients(lambda: T.channel_max(x[:, :2], 2), x)
    check_gradients(lambda: T.block_mean(x[:, :, :4], 2), x)
    check_gradients(lambda: T.upsample_nearest(x, 3), x)


def test_batch_norm_gradients():
    x, gamma, beta = _param((4, 3, 2, 2), 0), _param((3,), 1), _param((3,), 2)
    state = T.BatchNormState.create(3)
    check_gradients(lambda: T.batch_norm(x, gamma, beta, state, training=True), x, gamma, beta)
    check_gradients(lambda: T.batch_norm(x, gamma, beta, state, training=False), x, gamma, beta)


def test_batch_norm_statistics():
    x = T.Tensor(np.random.default_rng(0).normal(3.0, 2.0, size=(64, 2, 4, 4)))
    state = T.BatchNormState.create(2, decay=0.5)
    out = T.batch_norm(x, np.ones(2), np.zeros(2), state, training=True)
    assert np.allclose(out.data.mean(axis=(0, 2, 3)), 0, atol=1e-10)
    assert np.allclose(out.data.var(axis=(0, 2, 3)), 1, atol=1e-3)
    assert np.allclose(state.running_mean, 0.5 * x.data.mean(axis=(0, 2, 3)))


def test_complex_gradients():
    z = _param((2, 4, 4, 2), 0)
    check_gradients(lambda: T.fft2(z), z)
    check_gradients(lambda: T.ifft2(z), z)
    check_gradients(lambda: T.complex_modulus_squared(T.fft2(z)), z)


def test_dropout():
    x = _param((1000,), 0)
    assert T.dropout(x, 0.2, None, training=False) is x

    out = T.dropout(x, 0.2, make_rng(0), training=True)
    kept = out.data != 0
    assert 0.7 < kept.mean() < 0.9
    assert np.allclose(out.data[kept], x.data[kept] / 0.8)
    check_gradients(lambda: T.dropout(x, 0.2, make_rng(0), training=True), x)

    with pytest.raises(ContractError):
        T.dropout(x, 1.0, make_rng(0), training=True)


def test_conv2d_values():
    rng = np.random.default_rng(3)
    image, kernel = rng.normal(size=(6, 5)), rng.normal(size=(3, 3))
    out = T.conv2d(image[None, None], kernel[None, None])
    assert np.allclose(out.data[0, 0], correlate2d(image, kernel, mode='same'))

    with pytest.raises(ShapeError):
        T.conv2d(image[None, None], np.ones((1, 1, 2, 2)))
    with pytest.raises(ShapeError):
        T.conv2d(image[None, None], np.ones((1, 2, 3, 3)))


def test_channel_max_ties():
    x = T.Tensor(np.ones((1, 2, 1, 1)), requires_grad=True)
    T.channel_max(x, 2).sum().backward()
    assert x.grad.ravel().tolist() == [1.0, 0.0]


def test_fft_matches_explicit_sums():
    values = np.random.default_rng(0).normal(size=(4, 6)) + 1j
    pairs = T.Tensor(np.stack([values.real, values.imag], axis=-1))
    spectrum = T.fft2(pairs).data
    assert np.allclose(spectrum[..., 0] + 1j * spectrum[..., 1], naive_dft2(values))
    assert np.allclose(T.ifft2(T.fft2(pairs)).data, pairs.data)

    with pytest.raises(ShapeError):
        T.fft2(np.ones((4, 4)))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 5, 2), elements=st.floats(-10, 10)))
def test_fft_preserves_energy(values):
    spectrum = T.fft2(values)
    assert np.sum(spectrum.data ** 2) == pytest.approx(np.sum(values ** 2), rel=1e-9, abs=1e-9)


def test_graph_order():
    x = _param((3,))
    y = x * x + x
    graph = T.Graph(y.sum())
    position = dict((id(n), i) for i, n in enumerate(graph.nodes))
    for node in graph.nodes:
        for parent in node._parents:
            assert position[id(parent)] < position[id(node)]
    assert graph.parameters == [x]


def test_backward():
    x, unused = _param((3,), 0), _param((2,), 1)
    loss = (x * x + x).sum()
    grads = T.backward(T.Graph(loss), loss, [x, unused])
    assert np.allclose(grads[0], 2 * x.data + 1)
    assert np.array_equal(grads[1], np.zeros(2))

    # Detached values do not pass gradients
    loss = (x.detach() * x).sum()
    loss.backward()
    assert np.allclose(x.grad, x.data)

    with pytest.raises(ContractError):
        T.backward(T.Graph(x * 2.0), x * 2.0)
    with pytest.raises(ContractError):
        x / x
    with pytest.raises(ShapeError):
        _param((3,)) + _param((4,))
