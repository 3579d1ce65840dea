import numpy as np
import pytest

from fpm_codesign import tensor as T
from fpm_codesign.channel import NoiseSpec, apply_noise, make_rng, noise_formula, noisy_intensity
from fpm_codesign.exceptions import ConstraintError, NonFiniteError
from fpm_codesign.testing import gradient_error, numerical_gradient


def test_noise_spec():
    NoiseSpec(1.0)
    NoiseSpec(float('inf'))
    for m in [0, -1, float('nan')]:
        with pytest.raises(ConstraintError):
            NoiseSpec(m)


def test_noiseless():
    image = np.array([[0.0, 1.5], [2.0, 3.0]])
    assert np.array_equal(apply_noise(image, NoiseSpec(float('inf'))), image)
    assert np.array_equal(noise_formula(image, float('inf'), np.ones((2, 2))), image)


def test_reproducible():
    image = np.full((8, 8), 4.0)
    first = apply_noise(image, NoiseSpec(2.0, seed=5))
    assert np.array_equal(first, apply_noise(image, NoiseSpec(2.0, seed=5)))
    assert not np.array_equal(first, apply_noise(image, NoiseSpec(2.0, seed=6)))

    # A caller-owned stream advances between calls
    rng = make_rng(0)
    assert not np.array_equal(apply_noise(image, NoiseSpec(2.0), rng),
                              apply_noise(image, NoiseSpec(2.0), rng))


def test_statistics():
    image = np.full(100000, 100.0)
    noisy = apply_noise(image, NoiseSpec(1.0, seed=1))
    assert np.all(noisy >= 0)
    assert abs(noisy.mean() - 100) < 0.5
    assert noisy.var() == pytest.approx(100, rel=0.05)

    # Noise shrinks as m grows
    quiet = apply_noise(image, NoiseSpec(100.0, seed=1))
    assert quiet.var() == pytest.approx(1, rel=0.05)


def test_clipped_at_zero():
    noisy = apply_noise(np.full(10000, 0.01), NoiseSpec(1.0))
    assert noisy.min() == 0
    assert noisy.max() > 0


def test_invalid_images():
    with pytest.raises(NonFiniteError):
        apply_noise(np.array([1.0, np.nan]), NoiseSpec(1.0))
    with pytest.raises(ConstraintError):
        apply_noise(np.array([1.0, -1.0]), NoiseSpec(1.0))
    with pytest.raises(NonFiniteError):
        noisy_intensity(T.Tensor([np.inf]), 1.0, np.zeros(1))


def test_noise_layer_matches_formula():
    image = np.array([0.5, 1.0, 2.0])
    g = np.array([0.3, -0.2, 0.1])
    out = noisy_intensity(T.Tensor(image), 4.0, g)
    assert np.allclose(out.data, noise_formula(image, 4.0, g))

    noiseless = T.Tensor(image)
    assert noisy_intensity(noiseless, float('inf'), g) is noiseless


def test_noise_layer_gradient():
    image = T.Tensor([0.5, 1.0, 2.0], requires_grad=True)
    g = np.array([0.3, -0.2, 0.1])
    weights = np.array([1.0, 2.0, -1.0])

    def loss():
        return (noisy_intensity(image, 4.0, g) * weights).sum()

    loss().backward()
    analytic = image.grad.copy()
    assert np.allclose(analytic, weights * (1 + g / (2 * np.sqrt(4.0 * image.data))))
    numeric = numerical_gradient(lambda: loss().item(), image)
    assert gradient_error(analytic, numeric) < 1e-6

    # Clipped pixels pass no gradient
    dark = T.Tensor([0.01], requires_grad=True)
    out = noisy_intensity(dark, 1.0, np.array([-5.0]))
    assert out.data[0] == 0
    out.sum().backward()
    assert dark.grad[0] == 0


@pytest.mark.parametrize('m', [0.25, 1.0, 4.0])
def test_moments_match_direct_sampling(m):
    draws = 10 ** 6
    noisy = apply_noise(np.ones(draws), NoiseSpec(m, seed=2))

    # Direct sampling of max((sqrt(I m) g + I m) / m, 0) with I = 1
    g = make_rng(17).standard_normal(draws)
    direct = np.maximum((np.sqrt(m) * g + m) / m, 0)
    assert noisy.mean() == pytest.approx(direct.mean(), rel=0.02)
    assert noisy.var() == pytest.approx(direct.var(), rel=0.02)


def test_vanishing_noise():
    image = np.linspace(1, 2, 1000)
    noisy = apply_noise(image, NoiseSpec(1e8, seed=3))
    assert np.allclose(noisy, image, rtol=1e-3, atol=0)


def test_variance_decreases_with_m():
    image = np.full(10 ** 5, 5.0)
    variances = [apply_noise(image, NoiseSpec(m, seed=4)).var() for m in [0.25, 1, 4, 16]]
    assert all(a > b for a, b in zip(variances, variances[1:]))
