"""Reconstruction and discriminator networks built from tensor primitives

Each convolutional layer is a 3 x 3 convolution producing twice the layer's channel
count, batch normalization, and maxout over adjacent channel pairs, optionally followed
by dropout. Residual links add the output of an earlier layer to that of a later one,
through a 1 x 1 projection when the channel counts differ.
"""
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from typing import Dict, Optional, Tuple, Union
from pathlib import Path
import logging

import numpy as np
from scipy.stats import truncnorm

from fpm_codesign import tensor as T
from fpm_codesign.archive import read_container, write_container
from fpm_codesign.exceptions import ArchiveError, ShapeError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'FPMC'
CHECKPOINT_FORMAT = 1
DROPOUT_RATE = 0.2
MAXOUT_PIECES = 2


def truncated_normal(shape: Tuple[int, ...], rng: np.random.Generator,
                     stddev: float = 0.1) -> np.ndarray:
    """Normal draws about zero, redrawn when farther than 2 standard deviations"""
    return truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=stddev, size=shape, random_state=rng)


@dataclass(frozen=True)
class ConvNetSpec:
    """Architecture of one reconstruction branch

    Args:
        layer_channels: Output channels of each convolutional layer
        kernel_size (int): Spatial extent of the convolution kernels
        dropout_layers: Indices of the layers followed by dropout
        residual_links: (from, to) pairs; the output of layer ``from`` is added to the
            output of layer ``to``
        upsample (int): Ratio between the high- and low-resolution grids
    """

    layer_channels: Tuple[int, ...] = (10, 20, 30, 40, 50, 60, 70, 80)
    kernel_size: int = 3
    dropout_layers: Tuple[int, ...] = (2, 3, 4, 5)
    residual_links: Tuple[Tuple[int, int], ...] = ((0, 6), (1, 5), (2, 4))
    upsample: int = 4

    def __post_init__(self):
        object.__setattr__(self, 'layer_channels', tuple(int(c) for c in self.layer_channels))
        object.__setattr__(self, 'dropout_layers', tuple(int(i) for i in self.dropout_layers))
        object.__setattr__(self, 'residual_links',
                           tuple((int(a), int(b)) for a, b in self.residual_links))

        n = len(self.layer_channels)
        if n == 0 or min(self.layer_channels) < 1:
            raise ShapeError('Every layer needs at least one channel')
        if self.kernel_size % 2 == 0:
            raise ShapeError(f'Kernel size must be odd, got {self.kernel_size}')
        if self.upsample < 1:
            raise ShapeError(f'Upsampling factor must be positive, got {self.upsample}')
        if any(not 0 <= i < n for i in self.dropout_layers):
            raise ShapeError(f'Dropout layers {self.dropout_layers} out of range for {n} layers')
        for a, b in self.residual_links:
            if not 0 <= a < b < n:
                raise ShapeError(f'Residual link {(a, b)} must go forward between layers 0-{n - 1}')

    def to_dict(self) -> dict:
        return {k: [list(x) if isinstance(x, tuple) else x for x in v] if isinstance(v, tuple)
                else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> 'ConvNetSpec':
        return cls(**data)


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Small convolutional classifier: conv layers, global mean pooling, one dense unit"""

    conv_channels: Tuple[int, ...] = (8, 16)
    kernel_size: int = 3

    def __post_init__(self):
        object.__setattr__(self, 'conv_channels', tuple(int(c) for c in self.conv_channels))
        if len(self.conv_channels) == 0:
            raise ShapeError('The discriminator needs at least one convolutional layer')
        if self.kernel_size % 2 == 0:
            raise ShapeError(f'Kernel size must be odd, got {self.kernel_size}')

    def to_dict(self) -> dict:
        return {'conv_channels': list(self.conv_channels), 'kernel_size': self.kernel_size}

    @classmethod
    def from_dict(cls, data: dict) -> 'DiscriminatorSpec':
        return cls(**data)


class Network(ABC):
    """Base class for a set of named parameters and the computation that uses them"""

    def __init__(self, name: str):
        self.name = name
        self._parameters: Dict[str, T.Tensor] = OrderedDict()
        self._batch_norms: Dict[str, T.BatchNormState] = OrderedDict()

    def _add_parameter(self, name: str, values: np.ndarray) -> T.Tensor:
        full_name = f'{self.name}.{name}'
        tensor = T.Tensor(values, requires_grad=True, name=full_name)
        self._parameters[full_name] = tensor
        return tensor

    def _add_batch_norm(self, name: str, channels: int) -> T.BatchNormState:
        state = T.BatchNormState.create(channels)
        self._batch_norms[f'{self.name}.{name}'] = state
        return state

    def parameters(self) -> Dict[str, T.Tensor]:
        """Trainable tensors, by name, in declaration order"""
        return self._parameters

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self._parameters.values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Parameter values and batch-normalization running statistics"""
        output = OrderedDict((name, p.data.copy()) for name, p in self._parameters.items())
        for name, state in self._batch_norms.items():
            output[f'{name}.running_mean'] = state.running_mean.copy()
            output[f'{name}.running_var'] = state.running_var.copy()
        return output

    def load_state_dict(self, arrays: Dict[str, np.ndarray]):
        """Restore values written by :meth:`state_dict`"""
        for name, p in self._parameters.items():
            if name not in arrays:
                raise ArchiveError(f'Missing parameter {name}')
            if arrays[name].shape != p.shape:
                raise ShapeError(f'Parameter {name} has shape {arrays[name].shape},'
                                 f' expected {p.shape}')
            p.data = np.array(arrays[name], dtype=np.float64)
        for name, state in self._batch_norms.items():
            state.running_mean = np.array(arrays[f'{name}.running_mean'], dtype=np.float64)
            state.running_var = np.array(arrays[f'{name}.running_var'], dtype=np.float64)

    @abstractmethod
    def __call__(self, x: T.Tensor, training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> T.Tensor:
        """Run the network on a batch"""


@dataclass
class _ConvLayer:
    weight: T.Tensor
    bias: T.Tensor
    gamma: T.Tensor
    beta: T.Tensor
    state: T.BatchNormState
    dropout: bool = field(default=False)


class Reconstructor(Network):
    """Maps a low-resolution intensity image to one real-valued high-resolution image

    Args:
        spec (ConvNetSpec): Architecture
        low_res_shape: (h, w) of the input images
        high_res_shape: (H, W) of the output images
        rng (Generator): Stream used for the initial parameter values
        name (str): Prefix of the parameter names
        stddev (float): Standard deviation of the initial values
    """

    def __init__(self, spec: ConvNetSpec, low_res_shape: Tuple[int, int],
                 high_res_shape: Tuple[int, int], rng: np.random.Generator, name: str = 'real',
                 stddev: float = 0.1):
        super().__init__(name)
        low_res_shape, high_res_shape = tuple(low_res_shape), tuple(high_res_shape)
        k = spec.upsample
        if high_res_shape != (low_res_shape[0] * k, low_res_shape[1] * k):
            raise ShapeError(f'Upsampling by {k} maps {low_res_shape} to'
                             f' {(low_res_shape[0] * k, low_res_shape[1] * k)},'
                             f' not {high_res_shape}')
        self.spec = spec
        self.low_res_shape = low_res_shape
        self.high_res_shape = high_res_shape

        ks = spec.kernel_size
        self.layers = []
        in_channels = 1
        for i, c in enumerate(spec.layer_channels):
            width = MAXOUT_PIECES * c
            self.layers.append(_ConvLayer(
                weight=self._add_parameter(
                    f'conv{i}.weight', truncated_normal((width, in_channels, ks, ks), rng, stddev)),
                bias=self._add_parameter(f'conv{i}.bias', truncated_normal((width,), rng, stddev)),
                gamma=self._add_parameter(f'bn{i}.gamma', np.ones(width)),
                beta=self._add_parameter(f'bn{i}.beta', np.zeros(width)),
                state=self._add_batch_norm(f'bn{i}', width),
                dropout=i in spec.dropout_layers
            ))
            in_channels = c

        self.shortcuts = OrderedDict()
        for a, b in spec.residual_links:
            c_in, c_out = spec.layer_channels[a], spec.layer_channels[b]
            self.shortcuts[(a, b)] = self._add_parameter(
                f'shortcut{a}_{b}.weight', truncated_normal((c_out, c_in, 1, 1), rng, stddev))

        self.head_weight = self._add_parameter(
            'head.weight', truncated_normal((1, in_channels, ks, ks), rng, stddev))
        self.head_bias = self._add_parameter('head.bias', truncated_normal((1,), rng, stddev))

    def __call__(self, x: T.Tensor, training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> T.Tensor:
        """
        Args:
            x (Tensor): Low-resolution images, shape (B, 1, h, w)
            training (bool): Use batch statistics and dropout
            rng (Generator): Stream for the dropout masks (training only)
        Returns:
            (Tensor) High-resolution images, shape (B, 1, H, W)
        """
        if x.ndim != 4 or x.shape[1:] != (1,) + self.low_res_shape:
            raise ShapeError(f'Expected input of shape (B, 1, {self.low_res_shape[0]},'
                             f' {self.low_res_shape[1]}), got {x.shape}')
        a = T.upsample_nearest(x, self.spec.upsample)
        outputs = []
        for i, layer in enumerate(self.layers):
            a = T.conv2d(a, layer.weight, layer.bias)
            a = T.batch_norm(a, layer.gamma, layer.beta, layer.state, training)
            a = T.channel_max(a, MAXOUT_PIECES)
            if layer.dropout:
                a = T.dropout(a, DROPOUT_RATE, rng, training)
            for (src, dst), weight in self.shortcuts.items():
                if dst == i:
                    a = a + T.conv2d(outputs[src], weight)
            outputs.append(a)
        return T.conv2d(a, self.head_weight, self.head_bias)


def reconstructor_parameter_count(spec: ConvNetSpec) -> int:
    """Number of trainable values of a :class:`Reconstructor`, derived from its spec"""
    ks2 = spec.kernel_size ** 2
    total = 0
    in_channels = 1
    for c in spec.layer_channels:
        width = MAXOUT_PIECES * c
        total += width * in_channels * ks2 + 3 * width
        in_channels = c
    for a, b in spec.residual_links:
        total += spec.layer_channels[a] * spec.layer_channels[b]
    return total + in_channels * ks2 + 1


def build_reconstructor(spec: ConvNetSpec, low_res_shape: Tuple[int, int],
                        high_res_shape: Tuple[int, int], rng: np.random.Generator,
                        name: str = 'real', stddev: float = 0.1) -> Reconstructor:
    """Create one branch (real or imaginary part) of the reconstruction network"""
    return Reconstructor(spec, low_res_shape, high_res_shape, rng, name, stddev)


class Discriminator(Network):
    """Classifies complex fields, given as (re, im) channels, as actual or reconstructed

    Args:
        spec (DiscriminatorSpec): Architecture
        high_res_shape: (H, W) of the fields
        rng (Generator): Stream used for the initial parameter values
        stddev (float): Standard deviation of the initial values
    """

    def __init__(self, spec: DiscriminatorSpec, high_res_shape: Tuple[int, int],
                 rng: np.random.Generator, name: str = 'disc', stddev: float = 0.1):
        super().__init__(name)
        self.spec = spec
        self.high_res_shape = tuple(high_res_shape)
        ks = spec.kernel_size
        self.convs = []
        in_channels = 2
        for i, c in enumerate(spec.conv_channels):
            width = MAXOUT_PIECES * c
            self.convs.append((
                self._add_parameter(f'conv{i}.weight',
                                    truncated_normal((width, in_channels, ks, ks), rng, stddev)),
                self._add_parameter(f'conv{i}.bias', truncated_normal((width,), rng, stddev))
            ))
            in_channels = c
        self.dense_weight = self._add_parameter('dense.weight',
                                                truncated_normal((in_channels,), rng, stddev))
        self.dense_bias = self._add_parameter('dense.bias', truncated_normal((1,), rng, stddev))

    def __call__(self, x: T.Tensor, training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> T.Tensor:
        """
        Args:
            x (Tensor): Fields of shape (B, 2, H, W)
        Returns:
            (Tensor) One logit per field, shape (B,)
        """
        if x.ndim != 4 or x.shape[1:] != (2,) + self.high_res_shape:
            raise ShapeError(f'Expected input of shape (B, 2, {self.high_res_shape[0]},'
                             f' {self.high_res_shape[1]}), got {x.shape}')
        a = x
        for weight, bias in self.convs:
            a = T.channel_max(T.conv2d(a, weight, bias), MAXOUT_PIECES)
        pooled = a.mean(axis=(2, 3))
        return pooled @ self.dense_weight + self.dense_bias


def build_discriminator(spec: DiscriminatorSpec, high_res_shape: Tuple[int, int],
                        rng: np.random.Generator, stddev: float = 0.1) -> Discriminator:
    """Create the discriminator network"""
    return Discriminator(spec, high_res_shape, rng, stddev=stddev)


def save_checkpoint(path: Union[str, Path], header: dict, arrays: Dict[str, np.ndarray]):
    """Write a checkpoint: a structured header followed by named arrays

    Args:
        path: Output path
        header (dict): Run description (specs, shapes, iteration, EMA decay, ...)
        arrays (dict): Named arrays, written in iteration order
    """
    header = dict(header)
    header['format'] = CHECKPOINT_FORMAT
    write_container(path, CHECKPOINT_MAGIC, header, arrays)


def load_checkpoint(path: Union[str, Path]) -> Tuple[dict, Dict[str, np.ndarray]]:
    """Read a checkpoint written by :func:`save_checkpoint`"""
    header, arrays = read_container(path, CHECKPOINT_MAGIC)
    if header.get('format') != CHECKPOINT_FORMAT:
        raise ArchiveError(f'{path} has checkpoint format {header.get("format")},'
                           f' expected {CHECKPOINT_FORMAT}')
    return header, arrays
