"""Reverse-mode automatic differentiation over dense float64 arrays

Every operation creates a :class:`Tensor` that remembers its parents and a function
computing the vector-Jacobian product (VJP) of the operation. :class:`Graph` orders the
nodes reachable from an output and :func:`backward` walks them in reverse.

Complex values are carried as real tensors with a trailing axis of length 2
holding the real and imaginary parts.
"""
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union
from dataclasses import dataclass
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from fpm_codesign.exceptions import ContractError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """N-dimensional real array that participates in reverse-mode differentiation

    Args:
        data: Values of the tensor, stored as 64-bit floats
        requires_grad (bool): Whether gradients should be computed for this tensor
        name (str): Optional label, used by networks to name their parameters
    """

    __array_priority__ = 100  # numpy defers binary operators to Tensor

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._vjp: Optional[VJP] = None
        self._op = 'leaf'

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f'item() needs a single-element tensor, got shape {self.shape}')
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        """Copy of the values that is cut out of the graph"""
        return Tensor(self.data.copy())

    def backward(self) -> None:
        """Populate the gradients of everything this (scalar) tensor depends on"""
        backward(Graph(self), self)

    def __repr__(self):
        label = f', name={self.name!r}' if self.name else ''
        return f'Tensor(shape={self.shape}, op={self._op}{label})'

    # Operator overloads
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError('Division is only defined by a constant')
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap constants as (non-differentiable) tensors"""
    return x if isinstance(x, Tensor) else Tensor(x)


def custom_op(data: np.ndarray, parents: Sequence[Tensor], vjp: VJP, op: str) -> Tensor:
    """Create a graph node from a forward value and its VJP

    Args:
        data: Result of the forward computation
        parents ([Tensor]): Inputs of the operation
        vjp: Function mapping the output gradient to one gradient per parent
            (``None`` for a parent that receives no gradient)
        op (str): Name of the operation, for debugging
    Returns:
        (Tensor) Output node
    """
    out = Tensor(data)
    out._parents = tuple(parents)
    out._vjp = vjp
    out._op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    return out


class Graph:
    """Nodes reachable from an output, in topological order

    Args:
        output (Tensor): Final node of the computation
    Attributes:
        nodes ([Tensor]): Every reachable node; each node's inputs precede it
        parameters ([Tensor]): Leaves that require gradients
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: List[Tensor] = []

        # Iterative depth-first search, children emitted before parents
        visited = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.parameters = [n for n in self.nodes if n.is_leaf and n.requires_grad]


def backward(graph: Graph, output: Tensor,
             parameters: Optional[Iterable[Tensor]] = None) -> List[np.ndarray]:
    """Compute gradients of a scalar output with respect to all parameters

    Gradients are written to the ``grad`` attribute of every node that requires them,
    replacing any previous value.

    Args:
        graph (Graph): Graph built from ``output``
        output (Tensor): Single-element tensor to differentiate
        parameters ([Tensor]): Tensors whose gradients are requested. Those that do not
            take part in the graph receive zero gradients. Defaults to ``graph.parameters``
    Returns:
        ([ndarray]) Gradients, in the order of ``parameters``
    """
    if output.size != 1:
        raise ContractError(f'backward needs a single-element output, got shape {output.shape}')

    grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(graph.nodes):
        g = grads.get(id(node))
        if g is None or not node.requires_grad:
            continue
        node.grad = g
        if node.is_leaf:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg

    if parameters is None:
        parameters = graph.parameters
    result = []
    for p in parameters:
        if id(p) not in grads:
            p.grad = np.zeros_like(p.data)
        result.append(p.grad)
    return result


# Helpers
def _broadcast_shape(*shapes) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f'Shapes {shapes} cannot be broadcast together')


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes that broadcasting added or stretched"""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _complex(z: np.ndarray) -> np.ndarray:
    return z[..., 0] + 1j * z[..., 1]


def _pair(c: np.ndarray) -> np.ndarray:
    return np.stack([c.real, c.imag], axis=-1)


def _require_complex_pair(x: Tensor, op: str):
    if x.ndim < 3 or x.shape[-1] != 2:
        raise ShapeError(f'{op} expects (..., H, W, 2) complex pairs, got {x.shape}')


# Elementwise arithmetic
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return custom_op(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), 'add')


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return custom_op(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), 'sub')


def neg(a) -> Tensor:
    a = as_tensor(a)
    return custom_op(-a.data, (a,), lambda g: (-g,), 'neg')


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return custom_op(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape),
                                _unbroadcast(g * a.data, b.shape)), 'mul')


def square(a) -> Tensor:
    a = as_tensor(a)
    return custom_op(a.data ** 2, (a,), lambda g: (2 * a.data * g,), 'square')


def softplus(a) -> Tensor:
    """``log(1 + exp(a))``, evaluated without overflow"""
    a = as_tensor(a)
    return custom_op(np.logaddexp(0.0, a.data), (a,), lambda g: (g * expit(a.data),), 'softplus')


# Linear algebra
def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting rules; ``b`` may be a vector"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2:
        raise ShapeError(f'matmul expects a matrix on the left, got shape {a.shape}')
    inner = b.shape[0] if b.ndim == 1 else b.shape[-2] if b.ndim >= 2 else None
    if inner != a.shape[-1]:
        raise ShapeError(f'matmul shapes {a.shape} and {b.shape} do not align')

    if b.ndim == 1:
        def vjp(g):
            ga = g[..., None] * b.data
            gb = np.tensordot(a.data, g, axes=(tuple(range(a.ndim - 1)), tuple(range(g.ndim))))
            return ga, gb
    else:
        _broadcast_shape(a.shape[:-2], b.shape[:-2])

        def vjp(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return custom_op(a.data @ b.data, (a, b), vjp, 'matmul')


# Reductions and reshaping
def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return custom_op(out, (a,), vjp, 'sum')


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f'Cannot reshape {a.shape} into {shape}')
    return custom_op(out, (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return custom_op(np.transpose(a.data, axes), (a,),
                     lambda g: (np.transpose(g, inverse),), 'transpose')


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return custom_op(a.data[index], (a,), vjp, 'getitem')


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f'Cannot concatenate: {e}')
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return custom_op(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)), 'concat')


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f'Cannot stack: {e}')
    return custom_op(out, tensors,
                     lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
                     'stack')


def roll(a, shift, axis) -> Tensor:
    """Circular shift, as :func:`numpy.roll`"""
    a = as_tensor(a)
    back = tuple(-s for s in shift) if isinstance(shift, (tuple, list)) else -shift
    return custom_op(np.roll(a.data, shift, axis=axis), (a,),
                     lambda g: (np.roll(g, back, axis=axis),), 'roll')


def diff(a, axis: int) -> Tensor:
    """Forward difference ``a[i + 1] - a[i]`` along an axis (no wraparound)"""
    a = as_tensor(a)
    if a.shape[axis] < 2:
        raise ShapeError(f'diff needs at least 2 entries along axis {axis}, got {a.shape}')

    def vjp(g):
        out = np.zeros_like(a.data)
        n = a.shape[axis]
        hi = [slice(None)] * a.ndim
        lo = [slice(None)] * a.ndim
        hi[axis] = slice(1, n)
        lo[axis] = slice(0, n - 1)
        out[tuple(hi)] += g
        out[tuple(lo)] -= g
        return (out,)

    return custom_op(np.diff(a.data, axis=axis), (a,), vjp, 'diff')


# Image operations
def conv2d(x, w, b=None) -> Tensor:
    """2D cross-correlation with stride 1 and zero "same" padding

    Args:
        x (Tensor): Input, shape (N, C, H, W)
        w (Tensor): Kernels, shape (F, C, kh, kw) with odd kh and kw
        b (Tensor): Optional bias, shape (F,)
    Returns:
        (Tensor) Output of shape (N, F, H, W)
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f'conv2d expects 4D input and kernels, got {x.shape} and {w.shape}')
    n, c, h, wd = x.shape
    f, c_w, kh, kw = w.shape
    if c != c_w:
        raise ShapeError(f'conv2d input has {c} channels, kernels expect {c_w}')
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f'conv2d needs odd kernel sizes for "same" padding, got {kh}x{kw}')
    if b is not None:
        b = as_tensor(b)
        if b.shape != (f,):
            raise ShapeError(f'conv2d bias must have shape ({f},), got {b.shape}')

    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, H, W, kh, kw)
    out = np.tensordot(windows, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def vjp(g):
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, w.data[:, :, i, j], axes=([1], [0]))
                gxp[:, :, i:i + h, j:j + wd] += contrib.transpose(0, 3, 1, 2)
        gx = gxp[:, :, ph:ph + h, pw:pw + wd]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return custom_op(np.ascontiguousarray(out), parents, vjp, 'conv2d')


def channel_max(x, pieces: int = 2) -> Tensor:
    """Maxout over groups of adjacent channels

    Ties go to the lowest channel index of each group.

    Args:
        x (Tensor): Input, shape (N, C, ...) with C divisible by ``pieces``
        pieces (int): Number of channels per group
    Returns:
        (Tensor) Output with C / pieces channels
    """
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[1] % pieces != 0:
        raise ShapeError(f'channel_max needs a channel count divisible by {pieces}, got {x.shape}')
    grouped = x.data.reshape((x.shape[0], x.shape[1] // pieces, pieces) + x.shape[2:])
    winner = np.argmax(grouped, axis=2)
    out = np.take_along_axis(grouped, winner[:, :, None], axis=2)[:, :, 0]

    def vjp(g):
        gg = np.zeros_like(grouped)
        np.put_along_axis(gg, winner[:, :, None], g[:, :, None], axis=2)
        return (gg.reshape(x.shape),)

    return custom_op(out, (x,), vjp, 'channel_max')


@dataclass
class BatchNormState:
    """Running statistics of one batch-normalization layer"""

    running_mean: np.ndarray
    running_var: np.ndarray
    decay: float = 0.99
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, decay: float = 0.99, eps: float = 1e-5) -> 'BatchNormState':
        return cls(np.zeros(channels), np.ones(channels), decay, eps)


def batch_norm(x, gamma, beta, state: BatchNormState, training: bool) -> Tensor:
    """Batch normalization over all axes but the channel axis (axis 1)

    In training mode the batch statistics are used and the running averages in
    ``state`` are updated. Otherwise the running averages are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f'batch_norm parameters must have shape ({channels},)')
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, channels) + (1,) * (x.ndim - 2)
    count = x.size // channels

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.running_mean = state.decay * state.running_mean + (1 - state.decay) * mu
        state.running_var = state.decay * state.running_var + (1 - state.decay) * var
    else:
        mu, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def vjp(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if training:
            gx = (inv_std.reshape(bshape) / count) * (
                count * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
        else:
            gx = dxhat * inv_std.reshape(bshape)
        return gx, ggamma, gbeta

    return custom_op(out, (x, gamma, beta), vjp, 'batch_norm')


def dropout(x, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at training time"""
    x = as_tensor(x)
    if not training or rate == 0:
        return x
    if not 0 <= rate < 1:
        raise ContractError(f'Dropout rate must be in [0, 1), got {rate}')
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return custom_op(x.data * keep, (x,), lambda g: (g * keep,), 'dropout')


def block_mean(x, k: int) -> Tensor:
    """Average non-overlapping k x k blocks of the last two axes"""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if h % k or w % k:
        raise ShapeError(f'block_mean factor {k} does not divide image shape {(h, w)}')
    lead = x.shape[:-2]
    out = x.data.reshape(lead + (h // k, k, w // k, k)).mean(axis=(-3, -1))

    def vjp(g):
        return (np.repeat(np.repeat(g, k, axis=-2), k, axis=-1) / (k * k),)

    return custom_op(out, (x,), vjp, 'block_mean')


def upsample_nearest(x, k: int) -> Tensor:
    """Repeat every pixel of the last two axes into a k x k block"""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    out = np.repeat(np.repeat(x.data, k, axis=-2), k, axis=-1)

    def vjp(g):
        return (g.reshape(x.shape[:-2] + (h, k, w, k)).sum(axis=(-3, -1)),)

    return custom_op(out, (x,), vjp, 'upsample_nearest')


# Complex-valued operations
def complex_modulus_squared(z) -> Tensor:
    """``re**2 + im**2`` of a complex-pair tensor, dropping the trailing axis"""
    z = as_tensor(z)
    if z.ndim < 1 or z.shape[-1] != 2:
        raise ShapeError(f'complex_modulus_squared expects a trailing axis of 2, got {z.shape}')
    out = (z.data ** 2).sum(axis=-1)
    return custom_op(out, (z,), lambda g: (2 * z.data * g[..., None],), 'complex_modulus_squared')


def fft2(z) -> Tensor:
    """Unitary 2D discrete Fourier transform over the two axes before the pair axis"""
    z = as_tensor(z)
    _require_complex_pair(z, 'fft2')
    out = _pair(np.fft.fft2(_complex(z.data), axes=(-2, -1), norm='ortho'))
    return custom_op(out, (z,),
                     lambda g: (_pair(np.fft.ifft2(_complex(g), axes=(-2, -1), norm='ortho')),),
                     'fft2')


def ifft2(z) -> Tensor:
    """Inverse of :func:`fft2`"""
    z = as_tensor(z)
    _require_complex_pair(z, 'ifft2')
    out = _pair(np.fft.ifft2(_complex(z.data), axes=(-2, -1), norm='ortho'))
    return custom_op(out, (z,),
                     lambda g: (_pair(np.fft.fft2(_complex(g), axes=(-2, -1), norm='ortho')),),
                     'ifft2')

