"""Mutual information between the objects and their noisy low-resolution images

Objects are equally likely. For each object, many noisy measurements are drawn and
histogrammed on bins shared by all objects; the mutual information then follows from
the per-object histograms and their average.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union
import hashlib
import logging
import math

import numpy as np

from fpm_codesign.channel import make_rng, noise_formula
from fpm_codesign.dataset import ComplexDataset
from fpm_codesign.exceptions import ConstraintError, ContractError, ShapeError
from fpm_codesign.optics import LedPattern, OpticalConfig, batch_jacobian

logger = logging.getLogger(__name__)

MAX_PIXELS = 4
BIN_BUDGET = 256
CHUNK_SIZE = 100000
RANGE_MARGIN = 1.25


@dataclass
class MiEstimate:
    """Estimated mutual information and the binning used to obtain it

    Args:
        bits (float): Mutual information (bits)
        samples_per_object (int): Noisy measurements drawn per object
        bin_width (float): Width of the bins along each pixel axis
        bin_count (int): Total number of bins
        objects (int): Number of objects
        under_resolved (bool): Whether every object put more than 1% of its mass in one bin
    """

    bits: float
    samples_per_object: int
    bin_width: float
    bin_count: int
    objects: int
    under_resolved: bool = False

    @staticmethod
    def csv_header() -> List[str]:
        return ['snapshot', 'bits', 'samples', 'bins', 'bin_width']

    def csv_row(self, snapshot: str) -> List[str]:
        return [snapshot, repr(float(self.bits)), str(self.samples_per_object),
                str(self.bin_count), repr(float(self.bin_width))]


def bins_per_pixel(pixels: int) -> int:
    """Bins along each axis so that the joint histogram stays near the bin budget"""
    if pixels == 1:
        return BIN_BUDGET
    return max(2, int(round(BIN_BUDGET ** (1.0 / pixels))))


def _object_rng(seed: int, measurement: np.ndarray) -> np.random.Generator:
    """Noise stream tied to the seed and the object's clean measurement"""
    digest = hashlib.sha256(np.ascontiguousarray(measurement, dtype='<f8').tobytes()).digest()
    return make_rng(np.random.SeedSequence([seed, int.from_bytes(digest[:8], 'little')]))


def _draws(clean: np.ndarray, m: float, samples: int, seed: int, chunk_size: int):
    """Yield chunks of noisy measurements of one object"""
    rng = _object_rng(seed, clean)
    for start in range(0, samples, chunk_size):
        n = min(chunk_size, samples - start)
        g = rng.standard_normal((n, len(clean)))
        yield noise_formula(np.broadcast_to(clean, (n, len(clean))), m, g)


def estimate_mi_from_measurements(clean: np.ndarray, m: float, samples: int, seed: int = 0,
                                  bins: Optional[int] = None,
                                  chunk_size: int = CHUNK_SIZE) -> MiEstimate:
    """Estimate the mutual information for given noiseless measurements

    Args:
        clean (ndarray): Noiseless measurement of each object, shape (objects, pixels)
        m (float): Noise factor, ``inf`` for noiseless measurements
        samples (int): Noisy measurements drawn per object
        seed (int): Seed of the noise streams
        bins (int): Bins along each pixel axis. Defaults to :func:`bins_per_pixel`
        chunk_size (int): Measurements drawn at a time
    Returns:
        (MiEstimate) Estimate and binning metadata
    """
    clean = np.asarray(clean, dtype=np.float64)
    if clean.ndim == 1:
        clean = clean[:, None]
    if clean.ndim != 2 or len(clean) == 0:
        raise ShapeError(f'Measurements must have shape (objects, pixels), got {clean.shape}')
    n_objects, pixels = clean.shape
    if pixels > MAX_PIXELS:
        raise ContractError(f'Histogram estimates need measurements of at most {MAX_PIXELS}'
                            f' pixels, got {pixels}')
    if samples <= 0:
        raise ContractError(f'Samples per object must be positive, got {samples}')
    if not m > 0:
        raise ConstraintError(f'Noise factor m must be positive, got {m}')
    if not np.all(np.isfinite(clean)) or np.any(clean < 0):
        raise ConstraintError('Measurements must be finite and non-negative')
    if bins is None:
        bins = bins_per_pixel(pixels)

    # Objects are processed in an order that does not depend on their order in the input
    order = sorted(range(n_objects),
                   key=lambda i: hashlib.sha256(clean[i].astype('<f8').tobytes()).digest())
    noiseless = math.isinf(m)

    # First pass: common range of the bins
    y_max = 0.0
    for i in order:
        if noiseless:
            y_max = max(y_max, float(clean[i].max()))
            continue
        for y in _draws(clean[i], m, samples, seed, chunk_size):
            y_max = max(y_max, float(y.max()))
    upper = RANGE_MARGIN * y_max if y_max > 0 else 1.0
    edges = [np.linspace(0.0, upper, bins + 1)] * pixels

    # Second pass: per-object histograms over the shared bins
    counts = np.zeros((n_objects,) + (bins,) * pixels)
    for slot, i in enumerate(order):
        if noiseless:
            hist, _ = np.histogramdd(clean[i][None, :], bins=edges)
            counts[slot] = hist * samples
            continue
        for y in _draws(clean[i], m, samples, seed, chunk_size):
            hist, _ = np.histogramdd(y, bins=edges)
            counts[slot] += hist

    conditional = counts.reshape(n_objects, -1) / samples
    marginal = conditional.mean(axis=0)
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = np.where(conditional > 0,
                         conditional * np.log2(conditional / marginal[None, :]), 0.0)
    bits = float(terms.sum() / n_objects)

    under_resolved = bool(np.all(conditional.max(axis=1) > 0.01))
    if under_resolved:
        logger.warning(f'Every object puts more than 1% of its measurements in a single bin'
                       f' (bin width {upper / bins:.4g}). The estimate may be biased by'
                       f' the binning')
    return MiEstimate(bits, int(samples), upper / bins, bins ** pixels, n_objects,
                      under_resolved)


def estimate_mi(dataset: Union[ComplexDataset, np.ndarray],
                pattern: Union[LedPattern, Sequence[float]], config: OpticalConfig,
                m: float, samples: int, seed: int = 0, split: str = 'train') -> MiEstimate:
    """Estimate the mutual information between objects and their noisy images

    Args:
        dataset: Dataset, or complex objects of shape (objects, N, N)
        pattern: LED intensities
        config (OpticalConfig): Microscope
        m (float): Noise factor, ``inf`` for noiseless images
        samples (int): Noisy images drawn per object
        seed (int): Seed of the noise streams
        split (str): Split of ``dataset`` holding the objects
    Returns:
        (MiEstimate) Estimate and binning metadata
    """
    objects = dataset.split(split) if isinstance(dataset, ComplexDataset) else dataset
    objects = np.asarray(objects, dtype=np.complex128)
    if not np.all(np.isfinite(objects)):
        raise ConstraintError('Objects contain non-finite values')
    weights = pattern.weights if isinstance(pattern, LedPattern) else np.asarray(pattern, float)
    if weights.shape != (config.n_active,):
        raise ShapeError(f'Pattern has {weights.shape} weights for {config.n_active} active LEDs')
    if np.any(weights < 0):
        raise ConstraintError('LED intensities must be non-negative')
    if config.lowres_pixels ** 2 > MAX_PIXELS:
        raise ContractError(f'{config.name} records {config.lowres_pixels ** 2} pixels; histogram'
                            f' estimates support at most {MAX_PIXELS}')

    clean = np.maximum(batch_jacobian(objects, config) @ weights, 0.0)
    return estimate_mi_from_measurements(clean, m, samples, seed)
