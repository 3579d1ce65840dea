import argparse
import csv
import os

import pytest
import yaml

from fpm_codesign.cli import main, noise_factor
from fpm_codesign.dataset import load_dataset


def _read_csv(path):
    with open(path) as fp:
        return list(csv.reader(fp))


def test_noise_factor():
    assert noise_factor('2.5') == 2.5
    assert noise_factor('inf') == float('inf')
    for text in ['0', '-1', 'loud']:
        with pytest.raises(argparse.ArgumentTypeError):
            noise_factor(text)


@pytest.fixture
def dataset_path(tmpdir):
    path = str(tmpdir.join('data', 'binary16.fpmd'))
    assert main(['synth-data', '--dataset', 'binary16', '--out', path]) == 0
    return path


def test_synth_data(dataset_path):
    dataset = load_dataset(dataset_path)
    assert dataset.preset == 'table3'
    assert dict(dataset.split_sizes) == {'train': 16, 'validation': 0, 'test': 0}

    with open(f'{dataset_path}.manifest.yaml') as fp:
        manifest = yaml.safe_load(fp)
    assert manifest['command'] == 'synth-data'
    assert manifest['seed'] == 0
    assert manifest['optics']['brightfield_leds'] + manifest['optics']['darkfield_leds'] == 9


def test_pipeline(tmpdir, dataset_path):
    run = str(tmpdir.join('run'))
    assert main(['train', '--dataset', dataset_path, '--case', '2', '--m', '1', '--iters', '2',
                 '--batch-size', '2', '--seed', '0', '--out', run, '--snapshot-interval', '1',
                 '--no-dropout']) == 0
    with open(os.path.join(run, 'manifest.yaml')) as fp:
        manifest = yaml.safe_load(fp)
    assert manifest['case_id'] == 2
    assert manifest['m'] == [1.0]
    assert manifest['dataset'] == os.path.abspath(dataset_path)
    assert manifest['options']['network']['dropout_layers'] == []
    assert len(_read_csv(os.path.join(run, 'losses.csv'))) == 3

    checkpoint = os.path.join(run, 'checkpoints', 'final.fpmc')
    eval_out = str(tmpdir.join('eval.csv'))
    assert main(['eval', '--checkpoint', checkpoint, '--dataset', dataset_path,
                 '--dataset-split', 'train', '--m-sweep', '1', '10', 'inf',
                 '--out', eval_out]) == 0
    rows = _read_csv(eval_out)
    assert rows[0] == ['m', 'split', 'mean_M', 'mean_G', 'count']
    assert [r[0] for r in rows[1:]] == ['1.0', '10.0', 'inf']
    assert all(r[4] == '16' for r in rows[1:])

    mi_out = str(tmpdir.join('mi.csv'))
    assert main(['mi', '--pattern-file', os.path.join(run, 'led_pattern.csv'),
                 '--dataset', dataset_path, '--m', 'inf', '--samples', '10',
                 '--out', mi_out]) == 0
    assert [r[0] for r in _read_csv(mi_out)[1:]] == ['0', '1', '2']

    assert main(['mi', '--checkpoint', checkpoint, '--dataset', dataset_path, '--m', '5',
                 '--samples', '100', '--out', mi_out]) == 0
    assert [r[0] for r in _read_csv(mi_out)[1:]] == ['checkpoint']

    assert main(['report', '--run-dir', run, '--examples', '1']) == 0
    assert len(os.listdir(os.path.join(run, 'reports'))) == 8


def test_exit_codes(tmpdir, dataset_path):
    # Invalid input
    assert main(['synth-data', '--dataset', 'mnist', '--out', str(tmpdir.join('x'))]) == 2
    assert main(['eval', '--checkpoint', dataset_path, '--dataset', dataset_path]) == 2
    assert main(['mi', '--pattern-file', dataset_path, '--dataset', dataset_path]) == 2

    # Missing files
    missing = str(tmpdir.join('missing.fpmd'))
    assert main(['train', '--dataset', missing, '--case', '1', '--seed', '0',
                 '--out', str(tmpdir.join('run'))]) == 2
    assert not os.path.exists(tmpdir.join('run'))
    assert main(['eval', '--checkpoint', missing, '--dataset', dataset_path]) == 2
    assert main(['mi', '--pattern-file', missing, '--dataset', dataset_path]) == 2
    assert main(['synth-data', '--dataset', 'image-dir', '--input', missing,
                 '--out', str(tmpdir.join('y'))]) == 2
    assert main(['report', '--run-dir', missing]) == 2

    with pytest.raises(SystemExit) as exc:
        main(['train', '--dataset', dataset_path, '--case', '5', '--seed', '0', '--out', 'x'])
    assert exc.value.code == 2
