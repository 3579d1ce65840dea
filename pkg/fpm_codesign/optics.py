"""Forward model of a Fourier ptychographic microscope with an LED-array source

Each LED illuminates a thin sample with a tilted plane wave, which shifts the
sample spectrum. The objective passes the part of the shifted spectrum inside the
pupil, the sensor records the intensity, and LEDs add incoherently.

All Fourier transforms use the unitary ("ortho") normalization.
"""
from typing import List, Sequence, Tuple, Union
from dataclasses import dataclass, field
from pathlib import Path
import logging
import json
import os

import numpy as np
import jsonschema
import yaml

from fpm_codesign import tensor as T
from fpm_codesign.exceptions import ConstraintError, GeometryError, OutOfBandError, ShapeError

logger = logging.getLogger(__name__)

_PACKAGE_DIR = os.path.dirname(__file__)
PRESETS = ('table1', 'table2', 'table3')


@dataclass(frozen=True)
class OpticalConfig:
    """Physical parameters of the emulated microscope, in SI units

    Args:
        wavelength (float): Illumination wavelength (m)
        objective_na (float): Numerical aperture of the objective
        magnification (float): Magnification of the objective
        sensor_pixel (float): Pixel size of the image sensor (m)
        object_extent (float): Side length of the high-resolution object (m)
        highres_pixels (int): Pixels per side of the high-resolution object
        led_pitch (float): Distance between neighboring LEDs (m)
        led_grid (int): LEDs per side of the square array
        led_height (float): Distance from the LED array to the sample (m)
        active_led_mask (tuple): Rows of 0/1 flags marking the LEDs that can be lit
        name (str): Preset name, recorded in dataset archives and checkpoints
        reported_synthetic_na (float): Synthetic NA quoted for the preset, if any
    """

    wavelength: float
    objective_na: float
    magnification: float
    sensor_pixel: float
    object_extent: float
    highres_pixels: int
    led_pitch: float
    led_grid: int
    led_height: float
    active_led_mask: Tuple[Tuple[int, ...], ...]
    name: str = 'custom'
    reported_synthetic_na: float = None

    def __post_init__(self):
        object.__setattr__(self, 'active_led_mask',
                           tuple(tuple(int(v) for v in row) for row in self.active_led_mask))

        if not 0 < self.objective_na <= 1:
            raise GeometryError(f'Objective NA must be in (0, 1], got {self.objective_na}')
        for key in ['wavelength', 'magnification', 'sensor_pixel', 'object_extent',
                    'led_pitch', 'led_height']:
            if not getattr(self, key) > 0:
                raise GeometryError(f'{key} must be positive, got {getattr(self, key)}')
        if self.highres_pixels < 1 or self.led_grid < 1:
            raise GeometryError('Pixel and LED counts must be positive')

        mask = np.array(self.active_led_mask)
        if mask.shape != (self.led_grid, self.led_grid):
            raise GeometryError(f'Active LED mask has shape {mask.shape},'
                                f' expected {(self.led_grid, self.led_grid)}')
        if mask.sum() == 0:
            raise GeometryError('At least one LED must be active')

        # The sensor pixel, referred to the sample plane, must cover a whole number of
        #  high-resolution pixels
        ratio = (self.sensor_pixel / self.magnification) / self.highres_pitch
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-6 * ratio:
            raise GeometryError(f'Downsampling factor {ratio:.6g} is not a positive integer')
        if self.highres_pixels % k != 0:
            raise GeometryError(f'Downsampling factor {k} does not divide'
                                f' {self.highres_pixels} pixels')

    @property
    def highres_pitch(self) -> float:
        """Pixel size of the high-resolution object (m)"""
        return self.object_extent / self.highres_pixels

    @property
    def downsample(self) -> int:
        """Number of high-resolution pixels per sensor pixel, along each side"""
        return int(round((self.sensor_pixel / self.magnification) / self.highres_pitch))

    @property
    def lowres_pixels(self) -> int:
        return self.highres_pixels // self.downsample

    @property
    def highres_shape(self) -> Tuple[int, int]:
        return self.highres_pixels, self.highres_pixels

    @property
    def lowres_shape(self) -> Tuple[int, int]:
        return self.lowres_pixels, self.lowres_pixels

    @property
    def n_active(self) -> int:
        return int(np.sum(self.active_led_mask))

    @property
    def frequency_step(self) -> float:
        """Spacing of the discrete spatial-frequency grid (1/m)"""
        return 1.0 / self.object_extent

    def to_dict(self) -> dict:
        """Render as a JSON/YAML-serializable dictionary"""
        output = {
            'name': self.name,
            'wavelength': self.wavelength,
            'objective_na': self.objective_na,
            'magnification': self.magnification,
            'sensor_pixel': self.sensor_pixel,
            'object_extent': self.object_extent,
            'highres_pixels': self.highres_pixels,
            'led_pitch': self.led_pitch,
            'led_grid': self.led_grid,
            'led_height': self.led_height,
            'active_led_mask': [list(row) for row in self.active_led_mask],
        }
        if self.reported_synthetic_na is not None:
            output['reported_synthetic_na'] = self.reported_synthetic_na
        return output

    @classmethod
    def from_dict(cls, data: dict) -> 'OpticalConfig':
        jsonschema.validate(data, optics_schema())
        return cls(**data)


def optics_schema() -> dict:
    """JSON schema for optical configuration files"""
    with open(os.path.join(_PACKAGE_DIR, 'schemas', 'optics.json')) as fp:
        return json.load(fp)


def load_preset(name_or_path: Union[str, Path]) -> OpticalConfig:
    """Load one of the shipped presets or a custom YAML configuration

    Args:
        name_or_path: ``table1``, ``table2``, ``table3``, or a path to a YAML file
    Returns:
        (OpticalConfig) Validated configuration
    """
    if str(name_or_path) in PRESETS:
        path = os.path.join(_PACKAGE_DIR, 'presets', f'{name_or_path}.yaml')
    else:
        path = str(name_or_path)
        if not os.path.isfile(path):
            raise GeometryError(f'Unknown optical preset: {name_or_path}')

    with open(path) as fp:
        data = yaml.safe_load(fp)
    if not isinstance(data, dict):
        raise GeometryError(f'{path} does not contain a mapping of optical parameters')
    data.setdefault('name', Path(path).stem)
    try:
        config = OpticalConfig.from_dict(data)
    except jsonschema.ValidationError as e:
        raise GeometryError(f'{path} is not a valid optical configuration: {e.message}')

    # Flag presets whose quoted synthetic NA disagrees with their geometry
    if config.reported_synthetic_na is not None:
        computed = synthetic_na(config)
        if abs(computed - config.reported_synthetic_na) > 0.005:
            logger.warning(f'Preset {config.name} quotes a synthetic NA of'
                           f' {config.reported_synthetic_na}, but its geometry gives'
                           f' {computed:.3f}. Using the geometric value')
    return config


@dataclass
class LedGeometry:
    """Positions (x, y, z) of the active LEDs, row-major over the grid (m)"""

    positions: np.ndarray

    def __len__(self):
        return len(self.positions)


def led_geometry(config: OpticalConfig) -> LedGeometry:
    """Positions of the active LEDs of a grid centered on the optical axis

    Args:
        config (OpticalConfig): Microscope configuration
    Returns:
        (LedGeometry) One (x, y, z) row per active LED
    """
    center = (config.led_grid - 1) / 2
    positions = []
    for row, flags in enumerate(config.active_led_mask):
        for col, active in enumerate(flags):
            if active:
                positions.append(((col - center) * config.led_pitch,
                                  (row - center) * config.led_pitch,
                                  config.led_height))
    return LedGeometry(np.array(positions, dtype=np.float64))


@dataclass
class ComplexField:
    """Complex amplitude sampled on a square grid

    Args:
        re (ndarray): Real part
        im (ndarray): Imaginary part
        pixel_pitch (float): Grid spacing (m)
    """

    re: np.ndarray
    im: np.ndarray
    pixel_pitch: float = 1.0

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float64)
        self.im = np.asarray(self.im, dtype=np.float64)
        if self.re.shape != self.im.shape:
            raise ShapeError(f'Real part {self.re.shape} and imaginary part {self.im.shape}'
                             ' differ in shape')

    @classmethod
    def from_complex(cls, values: np.ndarray, pixel_pitch: float = 1.0) -> 'ComplexField':
        values = np.asarray(values, dtype=np.complex128)
        return cls(values.real, values.imag, pixel_pitch)

    @property
    def values(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.re.shape


@dataclass
class LedPattern:
    """Intensities ``c_l`` of the active LEDs"""

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)

    def __len__(self):
        return len(self.weights)

    def grid(self, config: OpticalConfig) -> np.ndarray:
        """Lay the weights out on the LED grid, with NaN at inactive positions"""
        output = np.full((config.led_grid, config.led_grid), np.nan)
        output[np.array(config.active_led_mask, dtype=bool)] = self.weights
        return output


@dataclass
class PupilFunction:
    """Binary pupil in (unshifted) spatial-frequency layout"""

    mask: np.ndarray
    cutoff: float


def led_spatial_frequency(led_position: Sequence[float], wavelength: float) -> Tuple[float, float]:
    """Spatial frequency of the plane wave from an LED at a given position

    Args:
        led_position: (x, y, z) of the LED relative to the sample (m)
        wavelength (float): Illumination wavelength (m)
    Returns:
        (float, float) Frequencies ``(u_x, u_y)`` (1/m)
    """
    x, y, z = (float(v) for v in led_position)
    if not wavelength > 0:
        raise GeometryError(f'Wavelength must be positive, got {wavelength}')
    r = np.sqrt(x * x + y * y + z * z)
    if r == 0:
        raise GeometryError('LED position coincides with the sample')
    if not z > 0:
        raise GeometryError(f'LED must be above the sample (z > 0), got z={z}')
    return -x / (wavelength * r), -y / (wavelength * r)


def _illumination_sines(config: OpticalConfig) -> np.ndarray:
    pos = led_geometry(config).positions
    r = np.hypot(pos[:, 0], pos[:, 1])
    return r / np.sqrt(r ** 2 + pos[:, 2] ** 2)


def synthetic_na(config: OpticalConfig) -> float:
    """Objective NA plus the largest illumination NA of the active LEDs"""
    return float(config.objective_na + _illumination_sines(config).max())


def led_is_brightfield(config: OpticalConfig) -> np.ndarray:
    """Whether each active LED lies inside the acceptance cone of the objective"""
    return _illumination_sines(config) <= config.objective_na


def frequency_grid(config: OpticalConfig,
                   grid_shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Spatial frequencies (u_x, u_y) of every FFT bin, in unshifted layout (1/m)"""
    uy = np.fft.fftfreq(grid_shape[0], d=config.highres_pitch)
    ux = np.fft.fftfreq(grid_shape[1], d=config.highres_pitch)
    return np.meshgrid(ux, uy)


def pupil_mask(config: OpticalConfig, grid_shape: Tuple[int, int] = None) -> PupilFunction:
    """Aberration-free circular pupil of radius NA / wavelength"""
    if grid_shape is None:
        grid_shape = config.highres_shape
    if tuple(grid_shape) != config.highres_shape:
        raise ShapeError(f'Pupil grid {grid_shape} does not match the object grid'
                         f' {config.highres_shape}')
    cutoff = config.objective_na / config.wavelength
    ux, uy = frequency_grid(config, grid_shape)
    return PupilFunction((ux ** 2 + uy ** 2 <= cutoff ** 2).astype(np.float64), cutoff)


def led_bin_shifts(config: OpticalConfig) -> np.ndarray:
    """Illumination frequency of each active LED rounded to whole FFT bins

    Returns:
        (ndarray) Integer shifts, one (row, column) = (y, x) pair per LED
    """
    n = config.highres_pixels
    shifts = []
    for index, position in enumerate(led_geometry(config).positions):
        ux, uy = led_spatial_frequency(position, config.wavelength)
        shift = (int(np.rint(uy / config.frequency_step)), int(np.rint(ux / config.frequency_step)))
        if max(abs(s) for s in shift) >= n / 2:
            raise OutOfBandError(f'LED {index} shifts the spectrum by {shift} bins, beyond the'
                                 f' {n}-pixel grid bandwidth')
        shifts.append(shift)
    return np.array(shifts, dtype=int).reshape(-1, 2)


def _check_object(values: np.ndarray, config: OpticalConfig):
    if values.shape[-2:] != config.highres_shape:
        raise ShapeError(f'Object grid {values.shape[-2:]} does not match the configured'
                         f' {config.highres_shape}')


def led_images(objects: np.ndarray, config: OpticalConfig) -> np.ndarray:
    """Low-resolution intensity image under each active LED, lit alone

    Args:
        objects (ndarray): Complex objects, shape (..., N, N)
        config (OpticalConfig): Microscope configuration
    Returns:
        (ndarray) Images of shape (..., n_leds, n, n)
    """
    objects = np.asarray(objects, dtype=np.complex128)
    _check_object(objects, config)
    pupil = pupil_mask(config).mask
    spectrum = np.fft.fft2(objects, norm='ortho')

    shifted = np.stack([np.roll(spectrum, tuple(shift), axis=(-2, -1))
                        for shift in led_bin_shifts(config)], axis=-3)
    intensity = np.abs(np.fft.ifft2(pupil * shifted, norm='ortho')) ** 2

    k = config.downsample
    n = config.lowres_pixels
    return intensity.reshape(intensity.shape[:-2] + (n, k, n, k)).mean(axis=(-3, -1))


def forward_single_led(obj: ComplexField, led_index: int, config: OpticalConfig) -> np.ndarray:
    """Low-resolution intensity image recorded with a single LED lit

    Args:
        obj (ComplexField): Sample transmission
        led_index (int): Index of the LED among the active LEDs
        config (OpticalConfig): Microscope configuration
    Returns:
        (ndarray) Non-negative image on the sensor grid
    """
    return led_images(obj.values, config)[led_index]


def _check_pattern(pattern: LedPattern, config: OpticalConfig):
    if len(pattern) != config.n_active:
        raise ShapeError(f'Pattern has {len(pattern)} weights for {config.n_active} active LEDs')
    if np.any(pattern.weights < 0):
        raise ConstraintError('LED intensities must be non-negative')


def pattern_jacobian(obj: ComplexField, config: OpticalConfig) -> np.ndarray:
    """Derivative of the recorded image with respect to the LED intensities

    The image is linear in the intensities, so column ``l`` is simply the image
    recorded with LED ``l`` alone and ``image = jacobian @ weights``.

    Returns:
        (ndarray) Matrix of shape (low-res pixels, active LEDs)
    """
    images = led_images(obj.values, config)
    return images.reshape(images.shape[0], -1).T


def forward_pattern(obj: ComplexField, pattern: LedPattern, config: OpticalConfig) -> np.ndarray:
    """Low-resolution intensity image recorded with several LEDs lit at once"""
    _check_pattern(pattern, config)
    return (pattern_jacobian(obj, config) @ pattern.weights).reshape(config.lowres_shape)


def batch_jacobian(objects: np.ndarray, config: OpticalConfig) -> np.ndarray:
    """:func:`pattern_jacobian` for a batch of complex objects, shape (B, pixels, LEDs)"""
    images = led_images(objects, config)
    return np.swapaxes(images.reshape(images.shape[:-2] + (-1,)), -1, -2)


def forward_pattern_tensor(objects: T.Tensor, weights: T.Tensor, config: OpticalConfig) -> T.Tensor:
    """Multi-LED forward model assembled from differentiable tensor primitives

    Args:
        objects (Tensor): Complex objects as pairs, shape (B, N, N, 2)
        weights (Tensor): LED intensities, shape (n_leds,)
        config (OpticalConfig): Microscope configuration
    Returns:
        (Tensor) Images of shape (B, n, n)
    """
    if objects.ndim != 4 or objects.shape[-1] != 2:
        raise ShapeError(f'Objects must have shape (B, N, N, 2), got {objects.shape}')
    _check_object(objects.data[..., 0], config)
    if weights.shape != (config.n_active,):
        raise ShapeError(f'Weights must have shape ({config.n_active},), got {weights.shape}')

    pupil = pupil_mask(config).mask[:, :, None]
    spectrum = T.fft2(objects)
    per_led: List[T.Tensor] = []
    for shift in led_bin_shifts(config):
        field = T.ifft2(T.roll(spectrum, tuple(shift), axis=(1, 2)) * pupil)
        per_led.append(T.block_mean(T.complex_modulus_squared(field), config.downsample))
    images = T.stack(per_led, axis=1)  # (B, L, n, n)
    return (images * weights.reshape(1, -1, 1, 1)).sum(axis=1)
