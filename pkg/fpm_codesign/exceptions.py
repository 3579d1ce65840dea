"""Errors raised by fpm_codesign

Bad input of any kind raises a subclass of :class:`ValueError`, so callers that only
care about "the input was wrong" can catch that one type.
"""
from typing import Optional


class GeometryError(ValueError):
    """Optical configuration or LED geometry is not physically valid"""


class OutOfBandError(ValueError):
    """An LED shifts the object spectrum beyond the representable grid bandwidth"""


class ConstraintError(ValueError):
    """A value violates a bound (LED weights, noise factor, pixel range)"""


class ShapeError(ValueError):
    """Array shapes do not agree"""


class ContractError(ValueError):
    """A function was called outside of its contract"""


class NonFiniteError(ValueError):
    """An input contains NaN or infinite values"""


class ArchiveError(ValueError):
    """A binary container is malformed or of an unsupported version"""


class IngestionError(ValueError):
    """An input file could not be read into a dataset

    Args:
        message (str): Description of the problem
        path (str): File that failed
        offset (int): Byte offset at which the problem was detected, if known
    """

    def __init__(self, message: str, path: Optional[str] = None, offset: Optional[int] = None):
        self.path = path
        self.offset = offset
        details = []
        if path is not None:
            details.append(f'file={path}')
        if offset is not None:
            details.append(f'offset={offset}')
        if details:
            message = f'{message} ({", ".join(details)})'
        super().__init__(message)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient"""
