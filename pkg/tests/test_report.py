import os

import numpy as np
import pytest
import yaml
from PIL import Image

from fpm_codesign.dataset import save_dataset
from fpm_codesign.exceptions import ContractError
from fpm_codesign.report import PANELS, led_heatmap, render_report, save_grayscale, to_uint8
from fpm_codesign.trainer import CaseSpec, TrainSchedule, train


def test_to_uint8():
    values = to_uint8(np.array([-1.0, 0.0, 0.5, 1.0, 2.0, np.nan]), 0.0, 1.0)
    assert values.dtype == np.uint8
    assert values.tolist() == [0, 0, 128, 255, 255, 0]
    assert to_uint8(np.ones(3), 1.0, 1.0).tolist() == [0, 0, 0]


def test_save_grayscale(tmpdir):
    path = str(tmpdir.join('panel.png'))
    save_grayscale(path, np.arange(16.0).reshape(4, 4), 0, 15)
    with Image.open(path) as image:
        assert image.mode == 'L'
        assert image.size == (128, 128)
        assert image.getpixel((0, 0)) == 0
        assert image.getpixel((127, 127)) == 255


@pytest.fixture
def run_dir(tmpdir, binary16, table3, tiny_net, tiny_disc):
    run = tmpdir.mkdir('run')
    dataset_path = str(tmpdir.join('binary16.fpmd'))
    save_dataset(dataset_path, binary16)
    with open(run.join('manifest.yaml'), 'w') as fp:
        yaml.safe_dump({'command': 'train', 'dataset': dataset_path}, fp)
    train(CaseSpec.from_id(4), binary16, table3, 1.0,
          TrainSchedule(iterations=2, batch_size=2, snapshot_interval=1), 0, str(run),
          net_spec=tiny_net, disc_spec=tiny_disc)
    return str(run)


def test_render_report(run_dir, caplog):
    written = render_report(run_dir, examples=2)
    assert len(written) == 2 * len(PANELS)
    assert 'split is empty' in caplog.text
    for name in PANELS:
        assert os.path.isfile(os.path.join(run_dir, 'reports', f'train001_{name}.png'))
    with Image.open(os.path.join(run_dir, 'reports', 'train000_led_end.png')) as image:
        assert image.size == (144, 144)  # 3 x 3 LEDs of 16 pixels, enlarged 3 times


def test_incomplete_run(tmpdir, run_dir):
    with pytest.raises(ContractError):
        render_report(str(tmpdir.join('missing')))

    os.unlink(os.path.join(run_dir, 'led_pattern.csv'))
    with pytest.raises(ContractError):
        render_report(run_dir)


def test_led_heatmap():
    weights = np.array([[0.5, np.nan], [1.0, 0.25]])
    brightfield = np.array([[True, False], [False, False]])
    heat = led_heatmap(weights, brightfield, cell=4)
    assert heat.shape == (8, 8)
    assert np.all(heat[1:3, 1:3] == 0.5)
    assert heat[0, 0] == 0 and heat[0, 2] == 1  # Dashed outline
    assert np.all(np.isnan(heat[:4, 4:]))
    assert np.all(heat[4:, :4] == 1.0)
    assert np.all(heat[4:, 4:] == 0.25)

    with pytest.raises(ContractError):
        led_heatmap(weights, brightfield[:1])
