"""Versioned binary container shared by checkpoints and dataset archives

Layout (all integers little-endian)::

    magic    4 bytes   identifies the payload kind (e.g., ``FPMC`` or ``FPMD``)
    version  uint16    container version
    length   uint32    byte length of the header
    header   JSON      UTF-8, keys sorted; lists the arrays as ``[name, shape]``
    arrays   float64   raw little-endian values, in the order listed in the header
"""
from typing import Dict, Tuple, Union
from collections import OrderedDict
from pathlib import Path
import struct
import json

import numpy as np

from fpm_codesign.exceptions import ArchiveError

CONTAINER_VERSION = 1
_PREFIX = struct.Struct('<4sHI')


def write_container(path: Union[str, Path], magic: bytes, header: dict,
                    arrays: Dict[str, np.ndarray]) -> None:
    """Write a header and a set of arrays to disk

    Args:
        path: Output path
        magic (bytes): 4-byte identifier of the payload kind
        header (dict): JSON-serializable metadata. The key ``arrays`` is reserved
        arrays (dict): Arrays to store, written in iteration order
    """
    if len(magic) != 4:
        raise ArchiveError('Container magic must be exactly 4 bytes')
    if 'arrays' in header:
        raise ArchiveError('"arrays" is a reserved header key')

    full_header = dict(header)
    full_header['arrays'] = [[name, list(np.shape(a))] for name, a in arrays.items()]
    header_bytes = json.dumps(full_header, sort_keys=True).encode('utf-8')

    with open(path, 'wb') as fp:
        fp.write(_PREFIX.pack(magic, CONTAINER_VERSION, len(header_bytes)))
        fp.write(header_bytes)
        for a in arrays.values():
            fp.write(np.ascontiguousarray(a, dtype='<f8').tobytes())


def read_container(path: Union[str, Path], magic: bytes) -> Tuple[dict, Dict[str, np.ndarray]]:
    """Read a container written by :func:`write_container`

    Args:
        path: Path to the container
        magic (bytes): Expected 4-byte identifier
    Returns:
        (dict, OrderedDict): Header without the array listing, and arrays by name
    """
    with open(path, 'rb') as fp:
        raw = fp.read()

    if len(raw) < _PREFIX.size:
        raise ArchiveError(f'{path} is too short to be a container')
    found_magic, version, length = _PREFIX.unpack_from(raw, 0)
    if found_magic != magic:
        raise ArchiveError(f'{path} has magic {found_magic!r}, expected {magic!r}')
    if version != CONTAINER_VERSION:
        raise ArchiveError(f'{path} has container version {version},'
                           f' only {CONTAINER_VERSION} is supported')

    start = _PREFIX.size
    try:
        header = json.loads(raw[start:start + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArchiveError(f'{path} has an unreadable header: {e}')

    offset = start + length
    arrays = OrderedDict()
    for name, shape in header.pop('arrays'):
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise ArchiveError(f'{path} is truncated inside array "{name}" (offset {offset})')
        arrays[name] = np.frombuffer(raw, dtype='<f8', count=count,
                                     offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise ArchiveError(f'{path} has {len(raw) - offset} trailing bytes')
    return header, arrays
