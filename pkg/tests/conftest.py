import pytest

from fpm_codesign.dataset import make_binary16
from fpm_codesign.network import ConvNetSpec, DiscriminatorSpec
from fpm_codesign.optics import load_preset


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='Run the long acceptance tests')
    parser.addoption('--mnist-dir', default=None,
                     help='Directory holding the MNIST IDX files, for the MNIST training test')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long acceptance runs, enabled with --runslow')


def pytest_collection_modifyitems(config, items):
    """Skip tests marked as slow unless ``--runslow`` is given"""
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def mnist_dir(request):
    path = request.config.getoption('--mnist-dir')
    if path is None:
        pytest.skip('needs --mnist-dir')
    return path


@pytest.fixture
def table1():
    return load_preset('table1')


@pytest.fixture
def table3():
    return load_preset('table3')


@pytest.fixture
def binary16(table3):
    return make_binary16(table3)


@pytest.fixture
def tiny_net():
    return ConvNetSpec(layer_channels=(2, 2), dropout_layers=(), residual_links=(), upsample=4)


@pytest.fixture
def tiny_disc():
    return DiscriminatorSpec(conv_channels=(2,))
