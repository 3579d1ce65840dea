"""Reader for the MNIST handwritten-digit files (IDX format)"""
from typing import Dict, Optional
import logging
import struct
import gzip
import os

import numpy as np

from fpm_codesign.base import BaseFileSource
from fpm_codesign.exceptions import IngestionError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

# IDX type codes and the matching big-endian numpy types
_IDX_TYPES = {
    0x08: '>u1',
    0x09: '>i1',
    0x0B: '>i2',
    0x0C: '>i4',
    0x0D: '>f4',
    0x0E: '>f8',
}

_TRAIN_NAMES = ('train-images-idx3-ubyte', 'train-images.idx3-ubyte')
_TEST_NAMES = ('t10k-images-idx3-ubyte', 't10k-images.idx3-ubyte')


def read_idx(path: str, expected_magic: Optional[int] = None) -> np.ndarray:
    """Read an IDX file, optionally gzip-compressed

    Args:
        path (str): Path to the file
        expected_magic (int): Required magic number (e.g., 2051 for images)
    Returns:
        (ndarray) Contents, with the dimensions given in the header
    """
    with open(path, 'rb') as fp:
        raw = fp.read()
    if raw[:2] == b'\x1f\x8b':
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise IngestionError(f'Corrupt gzip stream: {e}', path=path)

    if len(raw) < 4:
        raise IngestionError('File ends inside the IDX magic number', path=path, offset=len(raw))
    if raw[0] != 0 or raw[1] != 0:
        raise IngestionError('Not an IDX file: magic number must start with two zero bytes',
                             path=path, offset=0)
    type_code, ndim = raw[2], raw[3]
    if type_code not in _IDX_TYPES:
        raise IngestionError(f'Unknown IDX data type 0x{type_code:02x}', path=path, offset=2)
    magic = struct.unpack('>I', raw[:4])[0]
    if expected_magic is not None and magic != expected_magic:
        raise IngestionError(f'Magic number {magic}, expected {expected_magic}',
                             path=path, offset=0)

    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IngestionError(f'File ends inside the {ndim} dimension sizes', path=path,
                             offset=len(raw))
    shape = struct.unpack(f'>{ndim}I', raw[4:header_end])

    dtype = np.dtype(_IDX_TYPES[type_code])
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(raw) - header_end != expected:
        raise IngestionError(f'Expected {expected} bytes of data for shape {shape},'
                             f' found {len(raw) - header_end}', path=path,
                             offset=header_end + min(expected, len(raw) - header_end))
    return np.frombuffer(raw, dtype=dtype, offset=header_end).reshape(shape)


def _find(directory: str, names) -> Optional[str]:
    for name in names:
        for suffix in ('', '.gz'):
            candidate = os.path.join(directory, name + suffix)
            if os.path.isfile(candidate):
                return candidate
    return None


def _read_images_file(path: str) -> np.ndarray:
    images = read_idx(path, IMAGES_MAGIC)
    if images.ndim != 3:
        raise IngestionError(f'Image file has {images.ndim} dimensions, expected 3',
                             path=path, offset=3)

    # Labels are not used, but a label file next to the images must agree with them
    label_path = path.replace('images-idx3', 'labels-idx1').replace('images.idx3', 'labels.idx1')
    if label_path != path and os.path.isfile(label_path):
        labels = read_idx(label_path, LABELS_MAGIC)
        if len(labels) != len(images):
            raise IngestionError(f'{len(labels)} labels for {len(images)} images',
                                 path=label_path, offset=4)
    return images.astype(np.float64) / 255


class MnistSource(BaseFileSource):
    """Phase objects from MNIST digits, zero-padded to the object grid

    The path is a directory holding the training and ``t10k`` image files, or a single
    training image file. The first images of the training file form the validation
    split (5000 for the full set).
    """

    encoder = 'mnist'
    provenance = 'mnist'

    def _read_images(self, path: str, context: dict = None) -> Dict[str, np.ndarray]:
        if os.path.isdir(path):
            train_path = _find(path, _TRAIN_NAMES)
            test_path = _find(path, _TEST_NAMES)
            if train_path is None and test_path is None:
                raise IngestionError('No MNIST image files found', path=path)
        else:
            train_path, test_path = path, None

        output = {}
        if train_path is not None:
            train = _read_images_file(train_path)
            n_val = min(5000, len(train) // 12)
            output['validation'] = train[:n_val]
            output['train'] = train[n_val:]
        if test_path is not None:
            output['test'] = _read_images_file(test_path)
        return output

    def citations(self):
        return ['@article{lecun1998gradient, title={Gradient-based learning applied to document'
                ' recognition}, author={LeCun, Yann and Bottou, Leon and Bengio, Yoshua and'
                ' Haffner, Patrick}, journal={Proceedings of the IEEE}, volume={86},'
                ' number={11}, pages={2278--2324}, year={1998}}']

    def implementors(self):
        return ['fpm_codesign developers']

    def version(self):
        return '0.1.0'
