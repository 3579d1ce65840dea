"""Gaussian approximation of sensor shot noise

A pixel of intensity ``I`` becomes ``max(I + sqrt(I / m) * g, 0)`` with ``g`` a standard
normal draw. Larger ``m`` means a higher signal-to-noise ratio; ``m = inf`` is noiseless.
"""
from dataclasses import dataclass
from typing import Optional, Union
import logging
import math

import numpy as np

from fpm_codesign import tensor as T
from fpm_codesign.exceptions import ConstraintError, NonFiniteError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise level and the seed of its random stream

    Args:
        m (float): Multiplicative factor fitting the noise of a setup, > 0
        seed (int): Seed of the default random stream
    """

    m: float
    seed: int = 0

    def __post_init__(self):
        _check_m(self.m)


def _check_m(m: float):
    if not m > 0:
        raise ConstraintError(f'Noise factor m must be positive, got {m}')


def make_rng(seed: Union[int, np.random.SeedSequence]) -> np.random.Generator:
    """Counter-based (Philox) generator for an explicit seed"""
    return np.random.Generator(np.random.Philox(seed))


def noise_formula(image: np.ndarray, m: float, g: np.ndarray) -> np.ndarray:
    """Evaluate the noise model for given normal draws ``g``"""
    if math.isinf(m):
        return np.array(image, dtype=np.float64)
    return np.maximum((np.sqrt(np.maximum(image, 0) * m) * g + image * m) / m, 0.0)


def apply_noise(image: np.ndarray, spec: NoiseSpec,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Add shot noise to a low-resolution intensity image

    Args:
        image (ndarray): Non-negative intensities
        spec (NoiseSpec): Noise level
        rng (Generator): Random stream owned by the caller, advanced by this call.
            A fresh stream seeded with ``spec.seed`` is used if not provided
    Returns:
        (ndarray) Noisy, non-negative intensities
    """
    image = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(image)):
        raise NonFiniteError('Image contains non-finite intensities')
    if np.any(image < 0):
        raise ConstraintError('Image intensities must be non-negative')
    if rng is None:
        rng = make_rng(spec.seed)
    return noise_formula(image, spec.m, rng.standard_normal(image.shape))


def noisy_intensity(image: T.Tensor, m: float, g: np.ndarray) -> T.Tensor:
    """Differentiable noise layer for given normal draws

    Away from the clip at zero the derivative with respect to the intensity is
    ``1 + g / (2 sqrt(m I))``. Clipped pixels pass no gradient, and pixels with
    ``I = 0`` pass the gradient unchanged.

    Args:
        image (Tensor): Non-negative intensities
        m (float): Noise factor, ``inf`` for a noiseless channel
        g (ndarray): Standard normal draws, same shape as ``image``
    Returns:
        (Tensor) Noisy intensities
    """
    _check_m(m)
    if not np.all(np.isfinite(image.data)):
        raise NonFiniteError('Image contains non-finite intensities')
    if math.isinf(m):
        return image

    intensity = image.data
    pre_clip = (np.sqrt(np.maximum(intensity, 0) * m) * g + intensity * m) / m
    with np.errstate(divide='ignore', invalid='ignore'):
        slope = np.where(intensity > 0, 1 + g / (2 * np.sqrt(m * intensity)), 1.0)
    slope = np.where(pre_clip < 0, 0.0, slope)
    return T.custom_op(np.maximum(pre_clip, 0.0), (image,), lambda grad: (grad * slope,),
                       'noisy_intensity')
