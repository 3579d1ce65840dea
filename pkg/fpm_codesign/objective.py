"""Loss functions for the reconstruction and discriminator networks

Complex fields are passed as real tensors with the real and imaginary parts on the
channel axis, shape (..., 2, H, W).
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union
import logging

import numpy as np

from fpm_codesign import tensor as T
from fpm_codesign.exceptions import ShapeError
from fpm_codesign.optics import ComplexField

logger = logging.getLogger(__name__)

ALPHA = 1000.0

FieldLike = Union[T.Tensor, ComplexField, np.ndarray]


def as_field_tensor(value: FieldLike) -> T.Tensor:
    """Express a complex field as a (..., 2, H, W) tensor

    Args:
        value: A tensor (returned unchanged), a :class:`ComplexField`, or a
            complex array of shape (..., H, W)
    """
    if isinstance(value, T.Tensor):
        return value
    if isinstance(value, ComplexField):
        value = value.values
    value = np.asarray(value)
    return T.Tensor(np.stack([value.real, value.imag], axis=-3))


def _difference(pred: FieldLike, actual: FieldLike) -> T.Tensor:
    pred, actual = as_field_tensor(pred), as_field_tensor(actual)
    if pred.shape != actual.shape:
        raise ShapeError(f'Prediction shape {pred.shape} does not match {actual.shape}')
    if pred.ndim < 3 or pred.shape[-3] != 2:
        raise ShapeError(f'Fields must have shape (..., 2, H, W), got {pred.shape}')
    return pred - actual


def _mean_squared_modulus(delta: T.Tensor) -> T.Tensor:
    """Mean over pixels of ``re**2 + im**2``"""
    pixels = delta.size // 2
    return T.square(delta).sum() * (1.0 / pixels)


def loss_M(pred: FieldLike, actual: FieldLike) -> T.Tensor:
    """Mean-squared error between two complex fields

    Returns:
        (Tensor) Mean over pixels of the squared modulus of the difference
    """
    return _mean_squared_modulus(_difference(pred, actual))


def loss_G(pred: FieldLike, actual: FieldLike) -> T.Tensor:
    """Mean-squared error of the vertical and horizontal image gradients

    Gradients are forward differences between neighboring pixels, taken only where
    both neighbors exist.

    Returns:
        (Tensor) Vertical MSE plus horizontal MSE
    """
    delta = _difference(pred, actual)
    if min(delta.shape[-2:]) < 2:
        raise ShapeError(f'Gradient loss needs fields of at least 2 x 2, got {delta.shape[-2:]}')
    return (_mean_squared_modulus(T.diff(delta, axis=-2))
            + _mean_squared_modulus(T.diff(delta, axis=-1)))


def loss_C(logits_on_pred: T.Tensor) -> T.Tensor:
    """Cross-entropy of the reconstructions being labeled as actual fields"""
    return T.softplus(-T.as_tensor(logits_on_pred)).mean()


def loss_D(logits_on_pred: T.Tensor, logits_on_actual: T.Tensor) -> T.Tensor:
    """Cross-entropy of the discriminator labeling both groups correctly"""
    return (T.softplus(T.as_tensor(logits_on_pred)).mean()
            + T.softplus(-T.as_tensor(logits_on_actual)).mean())


@dataclass
class LossReport:
    """Values of the loss terms at one training iteration

    Args:
        iteration (int): Training iteration
        M (float): Mean-squared complex error
        G (float): Gradient mean-squared error
        C (float): Adversarial loss of the reconstruction
        J (float): Combined loss, ``M + alpha * G + C``
        alpha (float): Weight of the gradient term
    """

    iteration: int
    M: float
    G: float
    C: float
    J: float
    alpha: float = ALPHA

    @staticmethod
    def csv_header() -> List[str]:
        return ['iteration', 'M', 'G', 'C', 'J']

    def csv_row(self) -> List[str]:
        return [str(self.iteration)] + [repr(float(x)) for x in (self.M, self.G, self.C, self.J)]


def combined_loss(pred: FieldLike, actual: FieldLike, logits_on_pred: Optional[T.Tensor] = None,
                  alpha: float = ALPHA, iteration: int = 0) -> Tuple[T.Tensor, LossReport]:
    """Assemble ``J = M + alpha * G + C``

    Args:
        pred: Reconstructed fields
        actual: Actual fields
        logits_on_pred (Tensor): Discriminator output on ``pred``. ``C`` is zero when omitted
        alpha (float): Weight of the gradient term
        iteration (int): Iteration recorded in the report
    Returns:
        - (Tensor) Differentiable ``J``
        - (LossReport) Values of the individual terms
    """
    m = loss_M(pred, actual)
    g = loss_G(pred, actual)
    j = m + g * alpha
    c_value = 0.0
    if logits_on_pred is not None:
        c = loss_C(logits_on_pred)
        j = j + c
        c_value = c.item()
    return j, LossReport(iteration, m.item(), g.item(), c_value, j.item(), alpha)

