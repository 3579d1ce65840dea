"""Complex-object datasets: encoders, band limiting, archives and ingestion

Intensity images are turned into phase objects (unit-modulus complex fields) and then
low-pass filtered to the synthetic NA of the microscope, so that every stored object is
within the band a reconstruction could recover.
"""
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union
from pathlib import Path
import logging
import json
import os

import numpy as np
import jsonschema
import yaml

from fpm_codesign.archive import read_container, write_container
from fpm_codesign.channel import make_rng
from fpm_codesign.exceptions import ArchiveError, ConstraintError, IngestionError, ShapeError
from fpm_codesign.optics import (ComplexField, OpticalConfig, frequency_grid, load_preset,
                                 synthetic_na)

logger = logging.getLogger(__name__)

_PACKAGE_DIR = os.path.dirname(__file__)

SPLITS = ('train', 'validation', 'test')
DATASET_MAGIC = b'FPMD'
DATASET_FORMAT = 1

# Names accepted by ``ingest`` and the dataset sources that handle them
INGEST_FORMATS = {'idx': 'mnist', 'png_dir': 'image-dir'}


@dataclass
class ComplexDataset:
    """Band-limited complex objects, grouped into splits

    Args:
        splits (dict): Complex arrays of shape (n, H, W) keyed by split name
        provenance (str): Source of the objects (``mnist``, ``binary16`` or ``image_dir``)
        preset (str): Name of the optical preset used for the band limit
        encoder (str): Name of the encoder mapping pixels to complex values
        metadata (dict): Other JSON-serializable details (source files, ...)
    """

    splits: Dict[str, np.ndarray]
    provenance: str
    preset: str
    encoder: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ordered = OrderedDict()
        for name in SPLITS:
            ordered[name] = np.asarray(self.splits.get(name, np.zeros((0, 0, 0))),
                                       dtype=np.complex128)
        unknown = set(self.splits).difference(SPLITS)
        if unknown:
            raise ShapeError(f'Unknown splits: {sorted(unknown)}')

        shapes = set(a.shape[1:] for a in ordered.values() if len(a) > 0)
        if len(shapes) == 0:
            raise IngestionError('Dataset contains no objects')
        if len(shapes) > 1:
            raise ShapeError(f'Objects do not share one shape: {sorted(shapes)}')
        shape = shapes.pop()
        for name, a in ordered.items():
            if len(a) == 0:
                ordered[name] = np.zeros((0,) + shape, dtype=np.complex128)
        self.splits = ordered

    @property
    def shape(self):
        """Shape of each object"""
        return self.splits['train'].shape[1:]

    @property
    def split_sizes(self) -> Dict[str, int]:
        return OrderedDict((k, len(v)) for k, v in self.splits.items())

    def __len__(self):
        return sum(self.split_sizes.values())

    def objects(self, split: str = 'train') -> List[ComplexField]:
        """Objects of one split as :class:`ComplexField` instances"""
        return [ComplexField.from_complex(o) for o in self.split(split)]

    def split(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise ShapeError(f'Unknown split "{name}". Choose from {", ".join(SPLITS)}')
        return self.splits[name]


def encode_mnist(pixels: Union[float, np.ndarray]) -> np.ndarray:
    """Encode normalized intensities as phase: ``exp(-i pi/2 p)``

    Args:
        pixels: Values in [0, 1]
    Returns:
        Unit-modulus complex values with phase in [-pi/2, 0]
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if np.any(~np.isfinite(pixels)) or np.any(pixels < 0) or np.any(pixels > 1):
        raise ConstraintError('Normalized pixel values must lie in [0, 1]')
    return np.exp(-0.5j * np.pi * pixels)


def encode_ucsb(pixels: Union[float, np.ndarray]) -> np.ndarray:
    """Encode summed 3-channel 8-bit intensities as phase: ``exp(i pi (765 - p) / 765)``

    Args:
        pixels: Values in [0, 765]
    Returns:
        Unit-modulus complex values with phase in [0, pi]
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if np.any(~np.isfinite(pixels)) or np.any(pixels < 0) or np.any(pixels > 765):
        raise ConstraintError('Summed pixel values must lie in [0, 765]')
    return np.exp(1j * np.pi * (765 - pixels) / 765)


ENCODERS = {'mnist': encode_mnist, 'ucsb': encode_ucsb}


def synthetic_na_mask(config: OpticalConfig) -> np.ndarray:
    """Frequencies passed by a circular filter of radius synthetic NA / wavelength"""
    ux, uy = frequency_grid(config, config.highres_shape)
    cutoff = synthetic_na(config) / config.wavelength
    return ux ** 2 + uy ** 2 <= cutoff ** 2


def lowpass_by_synthetic_na(obj: Union[ComplexField, np.ndarray],
                            config: OpticalConfig) -> Union[ComplexField, np.ndarray]:
    """Remove spatial frequencies beyond the synthetic NA

    Args:
        obj: A :class:`ComplexField` or complex array of shape (..., N, N)
        config (OpticalConfig): Microscope defining the band limit
    Returns:
        Filtered object, of the same type as ``obj``
    """
    values = obj.values if isinstance(obj, ComplexField) else np.asarray(obj, np.complex128)
    if values.shape[-2:] != config.highres_shape:
        raise ShapeError(f'Object grid {values.shape[-2:]} does not match the configured'
                         f' {config.highres_shape}')
    spectrum = np.fft.fft2(values, norm='ortho') * synthetic_na_mask(config)
    filtered = np.fft.ifft2(spectrum, norm='ortho')
    if isinstance(obj, ComplexField):
        return ComplexField.from_complex(filtered, obj.pixel_pitch)
    return filtered


def pad_to_shape(images: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Zero-pad a stack of images (n, h, w) symmetrically to (n, H, W)"""
    h, w = images.shape[-2:]
    dh, dw = shape[0] - h, shape[1] - w
    if dh < 0 or dw < 0:
        raise ShapeError(f'Images of {h} x {w} do not fit in {shape[0]} x {shape[1]}')
    return np.pad(images, [(0, 0), (dh // 2, dh - dh // 2), (dw // 2, dw - dw // 2)])


def build_dataset(pixels: Dict[str, np.ndarray], encoder: str, config: OpticalConfig,
                  provenance: str, metadata: Optional[dict] = None,
                  chunk_size: int = 4096) -> ComplexDataset:
    """Encode and band-limit stacks of intensity images

    Args:
        pixels (dict): Intensity stacks (n, H, W) keyed by split
        encoder (str): Key of :data:`ENCODERS`
        config (OpticalConfig): Microscope defining the band limit
        provenance (str): Provenance tag of the dataset
        metadata (dict): Details recorded with the dataset
        chunk_size (int): Images encoded at a time
    Returns:
        (ComplexDataset) Encoded dataset
    """
    encode = ENCODERS[encoder]
    splits = OrderedDict()
    for name, stack in pixels.items():
        stack = np.asarray(stack, dtype=np.float64)
        if stack.ndim != 3:
            raise ShapeError(f'Split "{name}" must be a stack of 2D images, got {stack.shape}')
        output = np.empty(stack.shape, dtype=np.complex128)
        for start in range(0, len(stack), chunk_size):
            chunk = stack[start:start + chunk_size]
            output[start:start + chunk_size] = lowpass_by_synthetic_na(encode(chunk), config)
        splits[name] = output
        logger.debug(f'Encoded {len(output)} {name} images with the {encoder} encoder')
    return ComplexDataset(splits, provenance, config.name, encoder, dict(metadata or {}))


def _pattern_file() -> str:
    return os.path.join(_PACKAGE_DIR, 'patterns', 'binary16.yaml')


def _all_distinct(objects: np.ndarray, tol: float = 1e-9) -> bool:
    flat = objects.reshape(len(objects), -1)
    for i in range(len(flat)):
        if np.any(np.max(np.abs(flat[i + 1:] - flat[i]), axis=1) <= tol):
            return False
    return True


def make_binary16(config: Optional[OpticalConfig] = None, seed: int = 0,
                  max_attempts: int = 100) -> ComplexDataset:
    """Toy dataset of 16 distinct 4 x 4 binary patterns

    The shipped patterns are tried first. If two of them coincide after band
    limiting, random sets drawn from seeds ``seed``, ``seed + 1``, ... are tried
    until all 16 filtered objects differ.

    Args:
        config (OpticalConfig): Microscope defining the band limit. Defaults to ``table3``
        seed (int): First seed used when the shipped set must be replaced
        max_attempts (int): Number of seeded replacements to try
    Returns:
        (ComplexDataset) 16 objects in the training split
    """
    if config is None:
        config = load_preset('table3')
    if config.highres_shape != (4, 4):
        raise ShapeError(f'Binary patterns are 4 x 4, but {config.name} uses'
                         f' {config.highres_shape} objects')

    with open(_pattern_file()) as fp:
        patterns = np.array(yaml.safe_load(fp)['patterns'], dtype=np.float64).reshape(16, 4, 4)
    source = 'shipped'

    for attempt in range(max_attempts + 1):
        objects = lowpass_by_synthetic_na(encode_mnist(patterns), config)
        if _all_distinct(objects):
            return ComplexDataset({'train': objects}, 'binary16', config.name, 'mnist',
                                  {'patterns': patterns.astype(int).reshape(16, -1).tolist(),
                                   'pattern_source': source})

        next_seed = seed + attempt
        logger.warning(f'Binary patterns ({source}) collide after filtering with {config.name}.'
                       f' Regenerating with seed {next_seed}')
        rng = make_rng(next_seed)
        codes = rng.choice(2 ** 16, size=16, replace=False)
        patterns = ((codes[:, None] >> np.arange(16)) & 1).astype(np.float64).reshape(16, 4, 4)
        source = f'seed {next_seed}'
    raise IngestionError(f'No set of 16 distinct patterns found after {max_attempts} attempts')


def dataset_schema() -> dict:
    """JSON schema of dataset archive headers"""
    with open(os.path.join(_PACKAGE_DIR, 'schemas', 'dataset.json')) as fp:
        return json.load(fp)


def save_dataset(path: Union[str, Path], dataset: ComplexDataset):
    """Write a dataset archive

    Each split is stored as one (n, H, W, 2) array of interleaved real and imaginary parts.
    """
    header = {
        'format': DATASET_FORMAT,
        'preset': dataset.preset,
        'provenance': dataset.provenance,
        'encoder': dataset.encoder,
        'shape': list(dataset.shape),
        'splits': dict(dataset.split_sizes),
        'metadata': dataset.metadata,
    }
    arrays = OrderedDict((name, np.stack([a.real, a.imag], axis=-1))
                         for name, a in dataset.splits.items())
    write_container(path, DATASET_MAGIC, header, arrays)


def load_dataset(path: Union[str, Path]) -> ComplexDataset:
    """Read a dataset archive written by :func:`save_dataset`"""
    header, arrays = read_container(path, DATASET_MAGIC)
    try:
        jsonschema.validate(header, dataset_schema())
    except jsonschema.ValidationError as e:
        raise ArchiveError(f'{path} has an invalid dataset header: {e.message}')
    if header['format'] != DATASET_FORMAT:
        raise ArchiveError(f'{path} has dataset format {header["format"]},'
                           f' expected {DATASET_FORMAT}')

    splits = OrderedDict()
    for name in SPLITS:
        pairs = arrays.get(name)
        if pairs is None or len(pairs) != header['splits'][name]:
            raise ArchiveError(f'{path} is missing objects of the {name} split')
        splits[name] = pairs[..., 0] + 1j * pairs[..., 1]
    return ComplexDataset(splits, header['provenance'], header['preset'], header['encoder'],
                          header['metadata'])


def ingest(path: Union[str, Path], format: str, config: OpticalConfig,
           context: Optional[dict] = None) -> ComplexDataset:
    """Build a dataset from files on disk

    Args:
        path: File or directory to read
        format (str): ``idx`` (MNIST IDX files) or ``png_dir`` (directory of images)
        config (OpticalConfig): Microscope defining the object grid and band limit
        context (dict): Options passed to the source (e.g., ``subset``)
    Returns:
        (ComplexDataset) Encoded dataset
    """
    from fpm_codesign.utils.interface import execute_source
    if format not in INGEST_FORMATS:
        raise IngestionError(f'Unknown input format "{format}".'
                             f' Choose from {", ".join(INGEST_FORMATS)}', path=str(path))
    return execute_source(INGEST_FORMATS[format], path, config, context)
