"""Utilities for working with dataset sources registered as plugins"""

from stevedore.exception import NoMatches
from stevedore.extension import ExtensionManager
from stevedore.driver import DriverManager
from typing import Optional, Union
from pathlib import Path
import logging

from fpm_codesign.base import BaseDatasetSource
from fpm_codesign.dataset import ComplexDataset
from fpm_codesign.exceptions import IngestionError
from fpm_codesign.optics import OpticalConfig

logger = logging.getLogger(__name__)

NAMESPACE = 'fpm_codesign.dataset'


def _output_plugin_info(mgr: ExtensionManager) -> dict:
    """Gets information about all plugins attached to a particular manager

    Args:
        mgr (ExtensionManager): Plugin manager
    Returns:
        (dict): Dictionary where keys are plugin ids and values are descriptions
    """

    output = {}
    for name, ext in mgr.items():
        plugin = ext.plugin()
        output[name] = {
            'description': plugin.__doc__.split("\n")[0],
            'version': plugin.version(),
            'class': ext.entry_point_target
        }
    return output


def get_available_sources() -> dict:
    """Get information about the available dataset sources

    Returns:
        (dict): Descriptions of available sources, keyed by name
    """
    return _output_plugin_info(ExtensionManager(namespace=NAMESPACE))


def get_source(name: str) -> BaseDatasetSource:
    """Load a dataset source

    Args:
        name (str): Name of the source
    Returns:
        (BaseDatasetSource) Requested source
    """
    try:
        return DriverManager(
            namespace=NAMESPACE,
            name=name,
            invoke_on_load=True
        ).driver
    except NoMatches:
        raise IngestionError(f'No dataset source named "{name}". Available:'
                             f' {", ".join(sorted(get_available_sources()))}')


def execute_source(name: str, path: Union[str, Path, None], config: OpticalConfig,
                   context: Optional[dict] = None) -> ComplexDataset:
    """Build a dataset with a certain source

    Args:
        name (str): Name of the source
        path (str): File or directory passed to the source
        config (OpticalConfig): Microscope defining the object grid and band limit
        context (dict): Source-specific options
    Returns:
        (ComplexDataset) Dataset generated by the source
    """
    source = get_source(name)
    logger.debug(f'Running dataset source {name} (version {source.version()}) on {path}')
    return source.load(path, config, context)
