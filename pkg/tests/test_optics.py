from hypothesis import given, settings, strategies as st
import numpy as np
import pytest
import yaml

from fpm_codesign import tensor as T
from fpm_codesign.exceptions import ConstraintError, GeometryError, OutOfBandError, ShapeError
from fpm_codesign.optics import (ComplexField, LedPattern, OpticalConfig, batch_jacobian,
                                 forward_pattern, forward_pattern_tensor, forward_single_led,
                                 led_bin_shifts, led_geometry, led_images, led_is_brightfield,
                                 led_spatial_frequency, load_preset, pattern_jacobian,
                                 pupil_mask, synthetic_na)
from fpm_codesign.testing import (gradient_error, naive_led_images, naive_pattern_image,
                                  numerical_gradient)


def _random_object(shape, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_presets(table1, table3):
    assert table1.highres_shape == (32, 32)
    assert table1.lowres_shape == (8, 8)
    assert table1.downsample == 4
    assert table1.n_active == 45
    assert len(led_geometry(table1)) == 45

    assert table3.lowres_shape == (1, 1)
    assert table3.n_active == 9


def test_synthetic_na():
    assert synthetic_na(load_preset('table1')) == pytest.approx(0.80, abs=0.005)
    assert synthetic_na(load_preset('table2')) == pytest.approx(0.28, abs=0.005)


def test_preset_mismatch_warns(caplog):
    load_preset('table3')
    assert 'quotes a synthetic NA' in caplog.text


def test_custom_preset(tmpdir, table3):
    path = tmpdir.join('scope.yaml')
    data = table3.to_dict()
    data.pop('name')
    data.pop('reported_synthetic_na')
    with open(path, 'w') as fp:
        yaml.safe_dump(data, fp)
    config = load_preset(str(path))
    assert config.name == 'scope'
    assert config.highres_shape == table3.highres_shape

    with pytest.raises(GeometryError):
        load_preset('table9')

    data['objective_na'] = 1.5
    with open(path, 'w') as fp:
        yaml.safe_dump(data, fp)
    with pytest.raises(GeometryError):
        load_preset(str(path))


def test_invalid_config(table3):
    data = table3.to_dict()
    with pytest.raises(GeometryError):
        OpticalConfig(**dict(data, objective_na=0))
    with pytest.raises(GeometryError):
        OpticalConfig(**dict(data, sensor_pixel=5e-6))  # Not a whole number of pixels
    with pytest.raises(GeometryError):
        OpticalConfig(**dict(data, active_led_mask=[[0, 0, 0]] * 3))
    with pytest.raises(GeometryError):
        OpticalConfig(**dict(data, active_led_mask=[[1, 1]] * 2))


def test_led_spatial_frequency():
    assert led_spatial_frequency((0, 0, 0.01), 5e-7) == (0.0, 0.0)

    ux, uy = led_spatial_frequency((0.01, 0, 0.01), 5e-7)
    assert ux == pytest.approx(-1 / (5e-7 * np.sqrt(2)))
    assert uy == 0

    with pytest.raises(GeometryError):
        led_spatial_frequency((0.01, 0, 0), 5e-7)
    with pytest.raises(GeometryError):
        led_spatial_frequency((0, 0, 0.01), 0)


def test_brightfield(table1):
    brightfield = led_is_brightfield(table1)
    assert brightfield.shape == (45,)
    assert brightfield[22]  # Center LED
    assert not brightfield.all()


def test_out_of_band(table3):
    config = OpticalConfig(**dict(table3.to_dict(), object_extent=6.5e-6, magnification=1.0))
    with pytest.raises(OutOfBandError):
        led_bin_shifts(config)


def test_led_pattern_grid(table1):
    grid = LedPattern(np.ones(45)).grid(table1)
    assert grid.shape == (7, 7)
    assert np.isnan(grid[0, 0]) and np.isnan(grid[6, 6])
    assert np.nansum(grid) == 45


def test_uniform_object(table3):
    obj = ComplexField.from_complex(np.ones((4, 4)))
    center = 4
    assert tuple(led_bin_shifts(table3)[center]) == (0, 0)
    assert forward_single_led(obj, center, table3) == pytest.approx(np.ones((1, 1)))


def test_matches_explicit_sums(table3):
    obj = _random_object((4, 4))
    assert np.allclose(led_images(obj, table3), naive_led_images(obj, table3))

    weights = np.linspace(0, 1, 9)
    image = forward_pattern(ComplexField.from_complex(obj), LedPattern(weights), table3)
    assert np.allclose(image, naive_pattern_image(obj, weights, table3))


def test_pattern_is_weighted_sum(table1):
    obj = ComplexField.from_complex(_random_object((32, 32)))
    weights = np.random.default_rng(1).uniform(size=45)
    image = forward_pattern(obj, LedPattern(weights), table1)
    assert image.shape == (8, 8)

    expected = sum(w * forward_single_led(obj, i, table1) for i, w in enumerate(weights))
    assert np.allclose(image, expected)

    jacobian = pattern_jacobian(obj, table1)
    assert jacobian.shape == (64, 45)
    assert np.allclose(batch_jacobian(obj.values[None], table1)[0], jacobian)


def test_pattern_validation(table3):
    obj = ComplexField.from_complex(np.ones((4, 4)))
    with pytest.raises(ShapeError):
        forward_pattern(obj, LedPattern(np.ones(5)), table3)
    with pytest.raises(ConstraintError):
        forward_pattern(obj, LedPattern(-np.ones(9)), table3)
    with pytest.raises(ShapeError):
        led_images(np.ones((8, 8)), table3)
    with pytest.raises(ShapeError):
        pupil_mask(table3, (8, 8))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 16), scale=st.floats(0.0, 1.0))
def test_images_are_nonnegative(seed, scale):
    config = load_preset('table3')
    weights = np.random.default_rng(seed).uniform(0, scale, size=9)
    image = forward_pattern(ComplexField.from_complex(_random_object((4, 4), seed)),
                            LedPattern(weights), config)
    assert np.all(image >= 0)


def test_tensor_forward_model(table3):
    objects = np.stack([_random_object((4, 4), s) for s in range(3)])
    pairs = T.Tensor(np.stack([objects.real, objects.imag], axis=-1), requires_grad=True)
    weights = T.Tensor(np.random.default_rng(2).uniform(size=9), requires_grad=True)

    images = forward_pattern_tensor(pairs, weights, table3)
    assert images.shape == (3, 1, 1)
    assert np.allclose(images.data[:, 0, 0], batch_jacobian(objects, table3)[:, 0] @ weights.data)

    def loss():
        return forward_pattern_tensor(pairs, weights, table3).sum()

    loss().backward()
    for param in (weights, pairs):
        analytic = param.grad.copy()
        numeric = numerical_gradient(lambda: loss().item(), param)
        assert gradient_error(analytic, numeric) < 1e-6


def test_led_frequency_example():
    ux, uy = led_spatial_frequency((12e-3, 8e-3, 25e-3), 630e-9)
    assert ux == pytest.approx(-6.600e5, rel=1e-3)
    assert uy == pytest.approx(-4.400e5, rel=1e-3)

    for x, y in [(12e-3, 8e-3), (-4e-3, 0.0), (3e-3, -7e-3)]:
        forward = led_spatial_frequency((x, y, 25e-3), 630e-9)
        mirrored = led_spatial_frequency((-x, -y, 25e-3), 630e-9)
        assert mirrored == (-forward[0], -forward[1])


def test_darkfield_led_on_uniform_object(table1):
    obj = ComplexField.from_complex(np.ones((32, 32)))
    edge = 25  # (12 mm, 0) from the center of the grid
    assert not led_is_brightfield(table1)[edge]
    assert np.allclose(forward_single_led(obj, edge, table1), 0, atol=1e-20)


def test_oracle_on_random_fields(table3):
    config = OpticalConfig(**dict(table3.to_dict(), highres_pixels=8, object_extent=1.3e-6))
    assert config.lowres_shape == (2, 2)
    rng = np.random.default_rng(8)
    for _ in range(200):
        obj = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        assert np.allclose(led_images(obj, config), naive_led_images(obj, config),
                           rtol=1e-5, atol=1e-10)


def test_pattern_linearity(table1):
    obj = ComplexField.from_complex(_random_object((32, 32), 4))
    rng = np.random.default_rng(5)
    first, second = rng.uniform(0, 0.5, size=45), rng.uniform(0, 0.5, size=45)
    combined = forward_pattern(obj, LedPattern(0.7 * first + 1.3 * second), table1)
    expected = (0.7 * forward_pattern(obj, LedPattern(first), table1)
                + 1.3 * forward_pattern(obj, LedPattern(second), table1))
    assert np.allclose(combined, expected, rtol=1e-10, atol=0)

    assert np.array_equal(forward_pattern(obj, LedPattern(np.zeros(45)), table1),
                          np.zeros((8, 8)))


def test_pupil_filtering(table1):
    pupil = pupil_mask(table1)
    assert pupil.cutoff == pytest.approx(4.762e5, rel=1e-3)
    assert pupil.mask[0, 0] == 1

    spectrum = np.fft.fft2(_random_object((32, 32), 6), norm='ortho')
    once = pupil.mask * spectrum
    assert np.array_equal(pupil.mask * once, once)

    # Filtering never adds energy
    field = np.fft.ifft2(once, norm='ortho')
    assert np.sum(np.abs(field) ** 2) <= np.sum(np.abs(spectrum) ** 2) * (1 + 1e-8)
    assert np.sum(np.abs(field) ** 2) == pytest.approx(np.sum(np.abs(once) ** 2), rel=1e-8)
