from typing import Dict
import logging
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from fpm_codesign.base import BaseFileSource
from fpm_codesign.exceptions import IngestionError

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = ('.png', '.tif', '.tiff', '.bmp', '.jpg', '.jpeg')

# Train/validation/test proportions
SPLIT_RATIO = (34, 12, 12)


def split_counts(n: int) -> Dict[str, int]:
    """Number of images in each split for ``n`` sorted images"""
    total = sum(SPLIT_RATIO)
    n_train = int(round(n * SPLIT_RATIO[0] / total))
    n_val = min(int(round(n * SPLIT_RATIO[1] / total)), n - n_train)
    return {'train': n_train, 'validation': n_val, 'test': n - n_train - n_val}


class ImageDirectorySource(BaseFileSource):
    """Phase objects from a directory of 8-bit color images

    The three color channels of each image are summed to a value in [0, 765].
    Files are taken in sorted order and split 34:12:12 into train, validation and test.
    """

    encoder = 'ucsb'
    provenance = 'image_dir'

    def _read_images(self, path, context=None):
        if not os.path.isdir(path):
            raise IngestionError('Image input must be a directory', path=path)
        files = sorted(f for f in os.listdir(path) if f.lower().endswith(IMAGE_EXTENSIONS))
        if len(files) == 0:
            raise IngestionError('Directory contains no images', path=path)

        images = []
        for name in files:
            file_path = os.path.join(path, name)
            try:
                with Image.open(file_path) as im:
                    rgb = np.asarray(im.convert('RGB'), dtype=np.float64)
            except (UnidentifiedImageError, OSError) as e:
                raise IngestionError(f'Unreadable image: {e}', path=file_path)
            if images and rgb.shape != images[0].shape:
                raise IngestionError(f'Image is {rgb.shape[1]} x {rgb.shape[0]}, but the first'
                                     f' image is {images[0].shape[1]} x {images[0].shape[0]}',
                                     path=file_path)
            images.append(rgb)

        summed = np.stack(images).sum(axis=-1)
        counts = split_counts(len(summed))
        n_train, n_val = counts['train'], counts['validation']
        return {
            'train': summed[:n_train],
            'validation': summed[n_train:n_train + n_val],
            'test': summed[n_train + n_val:],
        }

    def implementors(self):
        return ['fpm_codesign developers']

    def version(self):
        return '0.1.0'
