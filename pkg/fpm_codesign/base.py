from typing import Dict, List, Union
from abc import ABC, abstractmethod
from pathlib import Path
import logging
import os

import numpy as np

from fpm_codesign.dataset import ComplexDataset, build_dataset, dataset_schema, pad_to_shape
from fpm_codesign.exceptions import IngestionError
from fpm_codesign.optics import OpticalConfig

logger = logging.getLogger(__name__)


class BaseDatasetSource(ABC):
    """Abstract base class for a source of complex-object datasets

    Each new source must implement the :meth:`load`, :meth:`version`,
    and :meth:`implementors` functions and be registered under the
    ``fpm_codesign.dataset`` entry point namespace.
    :meth:`citations` can be used if there are papers that should be cited if the
    dataset is used as part of a scientific publication.
    """

    @abstractmethod
    def load(self, path: Union[str, Path, None], config: OpticalConfig,
             context: dict = None) -> ComplexDataset:
        """Build a dataset

        Args:
            path (str): File or directory to read. Sources that generate their
                objects ignore it
            config (OpticalConfig): Microscope that defines the object grid and band limit
            context (dict): Source-specific options
        Returns:
            (ComplexDataset) Encoded, band-limited objects
        """

    def citations(self) -> List[str]:
        """Citation(s) and reference(s) for this dataset

        Returns:
            ([str]): each element should be a string citation in BibTeX format
        """
        return []

    @abstractmethod
    def implementors(self) -> List[str]:
        """List of implementors of the source

        Returns:
            ([str]): List of implementors in the form "FirstName LastName <email@provider>"
        """

    @abstractmethod
    def version(self) -> str:
        """Return the version of the source

        Returns:
            (str): Version of the source
        """

    @property
    def schema(self) -> dict:
        """Schema for the header of archives written from this source"""
        return dataset_schema()


class BaseFileSource(BaseDatasetSource):
    """Base class for sources that turn intensity images on disk into phase objects

    Instead of implementing :meth:`load`, implement :meth:`_read_images`, which
    returns the raw intensities of each split. Images smaller than the object grid
    are zero-padded to it."""

    encoder: str = None
    """Key of :data:`fpm_codesign.dataset.ENCODERS` used for the pixels"""

    provenance: str = None
    """Provenance tag recorded in the dataset"""

    @abstractmethod
    def _read_images(self, path: str, context: dict = None) -> Dict[str, np.ndarray]:
        """Read intensity images, grouped by split

        Args:
            path (str): File or directory to read
            context (dict): Source-specific options
        Returns:
            (dict) Stacks of shape (n, h, w) keyed by split name
        """

    def load(self, path, config, context=None):
        if path is None or not os.path.exists(path):
            raise IngestionError('Input path does not exist', path=str(path))
        context = dict(context or {})
        pixels = self._read_images(str(path), context)

        subset = context.get('subset')
        if subset is not None:
            pixels = dict((k, v[:subset]) for k, v in pixels.items())
        if sum(len(v) for v in pixels.values()) == 0:
            raise IngestionError('No images found', path=str(path))

        pixels = dict((k, pad_to_shape(v, config.highres_shape)) for k, v in pixels.items())
        metadata = {'source': os.path.abspath(path), 'source_version': self.version()}
        if subset is not None:
            metadata['subset'] = int(subset)
        logger.info(f'Read {", ".join(f"{len(v)} {k}" for k, v in pixels.items())} images'
                    f' from {path}')
        return build_dataset(pixels, self.encoder, config, self.provenance, metadata)
