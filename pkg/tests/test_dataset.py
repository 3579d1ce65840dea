import numpy as np
import pytest

from fpm_codesign.dataset import (ComplexDataset, build_dataset, encode_mnist, encode_ucsb,
                                  ingest, load_dataset, lowpass_by_synthetic_na, make_binary16,
                                  pad_to_shape, save_dataset, synthetic_na_mask)
from fpm_codesign.exceptions import (ArchiveError, ConstraintError, IngestionError,
                                     ShapeError)
from fpm_codesign.optics import ComplexField


def test_encoders():
    assert encode_mnist(0.0) == pytest.approx(1)
    assert encode_mnist(1.0) == pytest.approx(-1j)
    assert encode_mnist(0.5) == pytest.approx(np.exp(-0.25j * np.pi))
    assert encode_ucsb(765) == pytest.approx(1)
    assert encode_ucsb(0) == pytest.approx(-1)
    assert np.allclose(np.abs(encode_ucsb(np.arange(766))), 1)

    for bad in [1.5, -0.1, np.nan]:
        with pytest.raises(ConstraintError):
            encode_mnist(bad)
    with pytest.raises(ConstraintError):
        encode_ucsb(766)


def test_lowpass(table1):
    mask = synthetic_na_mask(table1)
    assert mask[0, 0]
    assert not mask.all()

    rng = np.random.default_rng(0)
    obj = encode_mnist(rng.uniform(size=(32, 32)))
    filtered = lowpass_by_synthetic_na(obj, table1)
    assert np.allclose(lowpass_by_synthetic_na(filtered, table1), filtered)
    assert filtered.mean() == pytest.approx(obj.mean())

    field = lowpass_by_synthetic_na(ComplexField.from_complex(obj, 1e-7), table1)
    assert isinstance(field, ComplexField)
    assert field.pixel_pitch == 1e-7
    assert np.allclose(field.values, filtered)

    with pytest.raises(ShapeError):
        lowpass_by_synthetic_na(np.ones((28, 28)), table1)


def test_pad_to_shape():
    padded = pad_to_shape(np.ones((2, 28, 28)), (32, 32))
    assert padded.shape == (2, 32, 32)
    assert padded[:, 2:30, 2:30].all()
    assert padded.sum() == 2 * 28 * 28
    with pytest.raises(ShapeError):
        pad_to_shape(np.ones((1, 40, 40)), (32, 32))


def test_dataset_validation():
    objects = np.ones((3, 4, 4), dtype=complex)
    dataset = ComplexDataset({'train': objects, 'test': objects[:1]}, 'mnist', 'table3', 'mnist')
    assert dict(dataset.split_sizes) == {'train': 3, 'validation': 0, 'test': 1}
    assert len(dataset) == 4
    assert dataset.shape == (4, 4)
    assert dataset.split('validation').shape == (0, 4, 4)
    assert len(dataset.objects('test')) == 1

    with pytest.raises(ShapeError):
        dataset.split('holdout')
    with pytest.raises(IngestionError):
        ComplexDataset({}, 'mnist', 'table3', 'mnist')
    with pytest.raises(ShapeError):
        ComplexDataset({'train': objects, 'test': np.ones((1, 5, 5))}, 'mnist', 'table3', 'mnist')
    with pytest.raises(ShapeError):
        ComplexDataset({'holdout': objects}, 'mnist', 'table3', 'mnist')


def test_build_dataset(table1):
    rng = np.random.default_rng(0)
    pixels = {'train': pad_to_shape(rng.uniform(size=(5, 28, 28)), (32, 32)),
              'test': pad_to_shape(rng.uniform(size=(2, 28, 28)), (32, 32))}
    dataset = build_dataset(pixels, 'mnist', table1, 'mnist', {'note': 'demo'}, chunk_size=2)
    assert dataset.preset == 'table1'
    assert dataset.split('train').shape == (5, 32, 32)
    assert np.allclose(dataset.split('test'),
                       lowpass_by_synthetic_na(encode_mnist(pixels['test']), table1))

    with pytest.raises(ShapeError):
        build_dataset({'train': np.ones((32, 32))}, 'mnist', table1, 'mnist')


def test_binary16(binary16, table1):
    objects = binary16.split('train')
    assert objects.shape == (16, 4, 4)
    assert binary16.provenance == 'binary16'
    assert len(binary16.metadata['patterns']) == 16
    assert 'pattern_source' in binary16.metadata

    flat = objects.reshape(16, -1)
    for i in range(16):
        for j in range(i + 1, 16):
            assert np.abs(flat[i] - flat[j]).max() > 1e-9

    with pytest.raises(ShapeError):
        make_binary16(table1)


def test_save_load(tmpdir, binary16):
    path = str(tmpdir.join('binary16.fpmd'))
    save_dataset(path, binary16)
    loaded = load_dataset(path)
    assert loaded.provenance == 'binary16'
    assert loaded.preset == binary16.preset
    assert loaded.metadata == binary16.metadata
    assert np.array_equal(loaded.split('train'), binary16.split('train'))
    assert dict(loaded.split_sizes) == dict(binary16.split_sizes)


def test_load_invalid(tmpdir):
    path = str(tmpdir.join('bad.fpmd'))
    with open(path, 'wb') as fp:
        fp.write(b'not a dataset archive')
    with pytest.raises(ArchiveError):
        load_dataset(path)


def test_ingest_unknown_format(tmpdir, table1):
    with pytest.raises(IngestionError):
        ingest(str(tmpdir), 'hdf5', table1)
