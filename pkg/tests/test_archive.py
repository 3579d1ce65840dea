import struct

import numpy as np
import pytest

from fpm_codesign.archive import read_container, write_container
from fpm_codesign.exceptions import ArchiveError


@pytest.fixture
def path(tmpdir):
    return str(tmpdir.join('test.bin'))


def test_write_read(path):
    arrays = {'b': np.arange(6.0).reshape(2, 3), 'a': np.array([1.5]), 'empty': np.zeros((0, 4))}
    write_container(path, b'TEST', {'name': 'demo', 'count': 3}, arrays)

    header, loaded = read_container(path, b'TEST')
    assert header == {'name': 'demo', 'count': 3}
    assert list(loaded) == ['b', 'a', 'empty']
    for key, values in arrays.items():
        assert np.array_equal(loaded[key], values)
        assert loaded[key].dtype == np.float64


def test_invalid_arguments(path):
    with pytest.raises(ArchiveError):
        write_container(path, b'TOOLONG', {}, {})
    with pytest.raises(ArchiveError):
        write_container(path, b'TEST', {'arrays': []}, {})


def test_corrupt_files(path):
    write_container(path, b'TEST', {}, {'x': np.ones(4)})
    with pytest.raises(ArchiveError):
        read_container(path, b'OTHR')

    with open(path, 'rb') as fp:
        raw = fp.read()
    with open(path, 'wb') as fp:
        fp.write(raw[:-8])
    with pytest.raises(ArchiveError):
        read_container(path, b'TEST')

    with open(path, 'wb') as fp:
        fp.write(raw + b'\x00')
    with pytest.raises(ArchiveError):
        read_container(path, b'TEST')

    with open(path, 'wb') as fp:
        fp.write(struct.pack('<4sHI', b'TEST', 2, 0))
    with pytest.raises(ArchiveError):
        read_container(path, b'TEST')

    with open(path, 'wb') as fp:
        fp.write(b'TE')
    with pytest.raises(ArchiveError):
        read_container(path, b'TEST')
