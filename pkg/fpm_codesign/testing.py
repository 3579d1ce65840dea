"""Sources and reference computations used for testing purposes"""

from typing import Callable, Sequence

import numpy as np

from fpm_codesign.base import BaseDatasetSource
from fpm_codesign.dataset import ComplexDataset
from fpm_codesign.optics import OpticalConfig, led_bin_shifts, pupil_mask
from fpm_codesign import tensor as T


class ConstantSource(BaseDatasetSource):
    """Uniform fields, used for debugging the plugin machinery

    Produces ``count`` copies (context key, default 4) of a field equal to one
    everywhere in the training split, and reads no files.
    """

    def load(self, path, config, context=None):
        count = (context or {}).get('count', 4)
        objects = np.ones((count,) + config.highres_shape, dtype=np.complex128)
        return ComplexDataset({'train': objects}, 'binary16', config.name, 'mnist',
                              {'source': 'constant'})

    def version(self):
        return '0.0.1'

    def implementors(self):
        return ['fpm_codesign developers']


def numerical_gradient(fn: Callable[[], float], param: T.Tensor, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a tensor

    Args:
        fn: Recomputes the function value from the current values of ``param``
        param (Tensor): Tensor whose values are perturbed in place
        eps (float): Step size
    Returns:
        (ndarray) Estimated gradient, shape of ``param``
    """
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn()
        flat[i] = original - eps
        minus = fn()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * eps)
    return grad


def gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest difference relative to the largest gradient magnitude"""
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def naive_dft2(values: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT by explicit summation"""
    h, w = values.shape
    rows = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    cols = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    output = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            output[u, v] = np.sum(values * rows[u][:, None] * cols[v][None, :])
    return output / np.sqrt(h * w)


def naive_idft2(values: np.ndarray) -> np.ndarray:
    """Unitary inverse 2D DFT by explicit summation"""
    return np.conj(naive_dft2(np.conj(values)))


def naive_led_images(obj: np.ndarray, config: OpticalConfig) -> np.ndarray:
    """Single-LED images computed with explicit DFT sums and loops

    Returns:
        (ndarray) Images of shape (LEDs, n, n)
    """
    spectrum = naive_dft2(obj)
    pupil = pupil_mask(config).mask
    k = config.downsample
    n = config.lowres_pixels
    size = obj.shape[0]
    images = []
    for dy, dx in led_bin_shifts(config):
        shifted = np.zeros_like(spectrum)
        for u in range(size):
            for v in range(size):
                shifted[u, v] = spectrum[(u - dy) % size, (v - dx) % size]
        field = naive_idft2(pupil * shifted)
        intensity = np.abs(field) ** 2
        image = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                image[i, j] = intensity[i * k:(i + 1) * k, j * k:(j + 1) * k].mean()
        images.append(image)
    return np.array(images)


def naive_pattern_image(obj: np.ndarray, weights: Sequence[float],
                        config: OpticalConfig) -> np.ndarray:
    """Multi-LED image as the weighted sum of :func:`naive_led_images`"""
    images = naive_led_images(obj, config)
    return np.tensordot(np.asarray(weights, dtype=np.float64), images, axes=1)
