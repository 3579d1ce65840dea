"""Grayscale images of the inputs, measurements and reconstructions of a training run"""
from typing import List, Optional, Union
from pathlib import Path
import logging
import math
import os

import numpy as np
import yaml
from PIL import Image

from fpm_codesign.channel import make_rng
from fpm_codesign.dataset import load_dataset
from fpm_codesign.exceptions import ContractError
from fpm_codesign.optics import LedPattern, led_is_brightfield
from fpm_codesign.trainer import load_model, objects_to_tensor, read_led_history

logger = logging.getLogger(__name__)

PANELS = ('actual_amplitude', 'actual_phase', 'recon_amplitude', 'recon_phase',
          'led_start', 'led_end', 'lowres_clean', 'lowres_noisy')
MIN_SIZE = 128


def to_uint8(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Map ``[lo, hi]`` linearly onto 0-255, clipping values outside the range"""
    values = np.nan_to_num(np.asarray(values, dtype=np.float64), nan=lo)
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    return np.round(scaled * 255).astype(np.uint8)


def save_grayscale(path: Union[str, Path], values: np.ndarray, lo: float, hi: float,
                   min_size: int = MIN_SIZE):
    """Write an 8-bit grayscale PNG, enlarged by pixel repetition to at least ``min_size``"""
    image = Image.fromarray(to_uint8(values, lo, hi))
    factor = max(1, int(math.ceil(min_size / max(image.size))))
    if factor > 1:
        image = image.resize((image.width * factor, image.height * factor), Image.NEAREST)
    image.save(path)


def led_heatmap(weights: np.ndarray, brightfield: np.ndarray, cell: int = 16) -> np.ndarray:
    """LED intensities as square cells, with a dashed outline around brightfield LEDs

    Args:
        weights (ndarray): Intensities on the LED grid, NaN at inactive positions
        brightfield (ndarray): Boolean grid of the same shape
        cell (int): Side of each cell in pixels
    Returns:
        (ndarray) Values in [0, 1], NaN where there is no LED
    """
    if weights.shape != brightfield.shape:
        raise ContractError(f'LED grid {weights.shape} and brightfield grid'
                            f' {brightfield.shape} differ')
    output = np.kron(weights, np.ones((cell, cell)))
    ys, xs = np.indices((cell, cell))
    edge = (ys == 0) | (xs == 0) | (ys == cell - 1) | (xs == cell - 1)
    dashes = ((ys + xs) // 2 % 2).astype(np.float64)
    for i, j in zip(*np.nonzero(brightfield)):
        block = output[i * cell:(i + 1) * cell, j * cell:(j + 1) * cell]
        block[edge] = dashes[edge]
    return output


def _amplitude_range(*fields) -> tuple:
    amplitudes = np.concatenate([np.abs(f).ravel() for f in fields])
    return 0.0, float(amplitudes.max())


def render_report(run_dir: Union[str, Path], examples: int = 4, split: str = 'test',
                  seed: int = 0, out_dir: Optional[Union[str, Path]] = None) -> List[str]:
    """Render the panels of the first test objects of a run

    Writes, for each example, the actual and reconstructed amplitude and phase, the LED
    pattern at the start and end of training, and the clean and noisy low-resolution
    images under the final pattern. Phase uses the fixed range [-pi, pi].

    Args:
        run_dir: Directory written by the ``train`` command
        examples (int): Number of objects to render
        split (str): Split the objects are taken from. Falls back to ``train`` when empty
        seed (int): Seed of the noise drawn for the low-resolution images
        out_dir: Output directory. Defaults to ``<run_dir>/reports``
    Returns:
        ([str]) Paths of the written images
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ContractError(f'Run directory {run_dir} does not exist')
    manifest_path = run_dir / 'manifest.yaml'
    checkpoint = run_dir / 'checkpoints' / 'final.fpmc'
    for required in (manifest_path, checkpoint, run_dir / 'led_pattern.csv'):
        if not required.is_file():
            raise ContractError(f'Run directory is missing {required.name}')
    with open(manifest_path) as fp:
        manifest = yaml.safe_load(fp)

    model, header = load_model(checkpoint, use_ema=True)
    config = model.config
    dataset = load_dataset(manifest['dataset'])
    objects = dataset.split(split)
    if len(objects) == 0:
        logger.warning(f'The {split} split is empty, rendering training objects')
        split, objects = 'train', dataset.split('train')
    objects = objects[:examples]
    m = float(header['m'])

    history = read_led_history(run_dir / 'led_pattern.csv')
    brightfield = led_is_brightfield(config)
    logger.info(f'{int(brightfield.sum())} of {len(brightfield)} LEDs are brightfield')
    brightfield = LedPattern(brightfield.astype(np.float64)).grid(config) == 1
    led_start = led_heatmap(LedPattern(history[0][1]).grid(config), brightfield)
    led_end = led_heatmap(LedPattern(model.led.data).grid(config), brightfield)

    clean, noisy = model.measure(objects, m, make_rng(seed))
    recon = model.reconstruct(noisy, training=False).data
    recon = recon[:, 0] + 1j * recon[:, 1]
    actual = objects_to_tensor(objects).data
    actual = actual[:, 0] + 1j * actual[:, 1]

    out_dir = Path(out_dir) if out_dir is not None else run_dir / 'reports'
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for i in range(len(objects)):
        amp_lo, amp_hi = _amplitude_range(actual[i], recon[i])
        low_hi = float(max(clean.data[i].max(), noisy.data[i].max()))
        panels = {
            'actual_amplitude': (np.abs(actual[i]), amp_lo, amp_hi),
            'actual_phase': (np.angle(actual[i]), -np.pi, np.pi),
            'recon_amplitude': (np.abs(recon[i]), amp_lo, amp_hi),
            'recon_phase': (np.angle(recon[i]), -np.pi, np.pi),
            'led_start': (led_start, 0.0, 1.0),
            'led_end': (led_end, 0.0, 1.0),
            'lowres_clean': (clean.data[i], 0.0, low_hi),
            'lowres_noisy': (noisy.data[i, 0], 0.0, low_hi),
        }
        for name in PANELS:
            values, lo, hi = panels[name]
            path = out_dir / f'{split}{i:03d}_{name}.png'
            save_grayscale(path, values, lo, hi)
            written.append(str(path))
    logger.info(f'Wrote {len(written)} images to {out_dir}')
    return written
