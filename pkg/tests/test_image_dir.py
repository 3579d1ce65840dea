import os

import numpy as np
import pytest
from PIL import Image

from fpm_codesign.exceptions import IngestionError
from fpm_codesign.image_dir import ImageDirectorySource, split_counts


def write_images(directory, count, size=(8, 8)):
    rng = np.random.default_rng(0)
    for i in range(count):
        pixels = rng.integers(0, 256, size=size + (3,), dtype=np.uint8)
        Image.fromarray(pixels).save(os.path.join(directory, f'cell{i:02d}.png'))


def test_split_counts():
    assert split_counts(58) == {'train': 34, 'validation': 12, 'test': 12}
    assert split_counts(6) == {'train': 4, 'validation': 1, 'test': 1}
    assert split_counts(1) == {'train': 1, 'validation': 0, 'test': 0}


def test_load(tmpdir, table1):
    write_images(str(tmpdir), 6)
    with open(os.path.join(tmpdir, 'notes.txt'), 'w') as fp:
        fp.write('ignored')

    dataset = ImageDirectorySource().load(str(tmpdir), table1)
    assert dict(dataset.split_sizes) == {'train': 4, 'validation': 1, 'test': 1}
    assert dataset.shape == (32, 32)
    assert dataset.encoder == 'ucsb'
    assert dataset.provenance == 'image_dir'


def test_invalid_directories(tmpdir, table1):
    source = ImageDirectorySource()
    with pytest.raises(IngestionError):
        source.load(str(tmpdir), table1)

    write_images(str(tmpdir), 2)
    small_path = os.path.join(tmpdir, 'zz_small.png')
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(small_path)
    with pytest.raises(IngestionError):
        source.load(str(tmpdir), table1)

    os.unlink(small_path)
    with open(os.path.join(tmpdir, 'zz_broken.png'), 'w') as fp:
        fp.write('not an image')
    with pytest.raises(IngestionError) as exc:
        source.load(str(tmpdir), table1)
    assert exc.value.path.endswith('zz_broken.png')

    with pytest.raises(IngestionError):
        source.load(os.path.join(tmpdir, 'cell00.png'), table1)
