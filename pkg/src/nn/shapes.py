"""Output-shape and padding rules for strided convolutions."""
import math
from typing import Literal

from src.core.exceptions import InvalidArgumentException

Padding = Literal["valid", "same"]


def _check_padding(padding: str) -> None:
    if padding not in ("valid", "same"):
        raise InvalidArgumentException(f"padding must be 'valid' or 'same', got {padding!r}")


def conv_output_size(size: int, kernel: int, stride: int, padding: Padding) -> int:
    """
    Spatial extent after a convolution.

    valid: ``floor((in - k) / s) + 1``; same: ``ceil(in / s)``.

    Raises:
        InvalidArgumentException: If the result is not positive
    """
    _check_padding(padding)
    if padding == "valid":
        out = (size - kernel) // stride + 1
    else:
        out = math.ceil(size / stride)
    if out < 1:
        raise InvalidArgumentException(
            f"convolution k={kernel}, s={stride}, padding={padding} leaves no output from extent {size}"
        )
    return out


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: Padding) -> int:
    """Spatial extent after a transpose convolution: ``in * s`` (same) or ``(in - 1) s + k`` (valid)."""
    _check_padding(padding)
    if size < 1:
        raise InvalidArgumentException(f"transpose convolution needs a positive extent, got {size}")
    return size * stride if padding == "same" else (size - 1) * stride + kernel


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) zero padding that gives a 'same' convolution, extra cell after."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv_shapes(
    kernel: int,
    stride: int,
    padding: Padding,
    in_hw: tuple[int, int],
    transpose: bool = False,
) -> tuple[int, int]:
    """Output (height, width) of a square-kernel (transpose) convolution."""
    rule = conv_transpose_output_size if transpose else conv_output_size
    return rule(in_hw[0], kernel, stride, padding), rule(in_hw[1], kernel, stride, padding)
