"""Pixel containers, color conversion, and lossless PNG I/O.

In memory, images are float64 arrays of shape (H, W, C) with values in
[0, 1]; binary masks are uint8 arrays of shape (H, W) with values in
{0, 1}. On disk, everything is PNG: 8- or 16-bit reads, 8-bit writes.
Masks use the 8-bit grayscale convention 0 -> 0, 255 -> 1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    CorruptDataError,
    IoFailureError,
    MissingFileError,
    ShapeMismatchError,
    UnsupportedFormatError,
    WrongChannelCountError,
)

# ITU-R BT.601 luma weights
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
# PNG color types within the contract: 0 grayscale, 2 RGB, 6 RGBA
_CHANNELS_BY_COLOR_TYPE = {0: 1, 2: 3, 6: 4}


@dataclass(frozen=True)
class Image:
    """Float raster in [0, 1], shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3:
            raise ShapeMismatchError("Image data must be an (H, W, C) array")
        if d.shape[2] not in (1, 3, 4):
            raise WrongChannelCountError(f"channels must be 1, 3, or 4, got {d.shape[2]}")
        if d.dtype != np.float64:
            object.__setattr__(self, "data", d.astype(np.float64))
            d = self.data
        if d.size and (not np.isfinite(d).all() or d.min() < 0.0 or d.max() > 1.0):
            raise ShapeMismatchError("Image values must be finite and within [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BinaryMask:
    """Binary raster, shape (height, width), values exactly 0 or 1."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 2:
            raise ShapeMismatchError("BinaryMask data must be an (H, W) array")
        if d.dtype != np.uint8:
            if not np.isin(d, (0, 1)).all():
                raise ShapeMismatchError("BinaryMask values must be exactly 0 or 1")
            object.__setattr__(self, "data", d.astype(np.uint8))
            d = self.data
        elif d.size and d.max() > 1:
            raise ShapeMismatchError("BinaryMask values must be exactly 0 or 1")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def count(self) -> int:
        """Number of 1-pixels."""
        return int(self.data.sum())


def _read_png_header(path: Path) -> tuple[int, int, int, int]:
    """Return (width, height, bit_depth, channels) after validating the IHDR.

    Raises UnsupportedFormatError for non-PNG files or PNG variants outside
    the contract (palette, gray+alpha, 1/2/4-bit depths), CorruptDataError
    for files too short to carry a header.
    """
    try:
        head = path.open("rb").read(33)
    except OSError as e:
        raise IoFailureError(f"cannot read {path}: {e}") from e
    if len(head) < 8 or head[:8] != _PNG_SIGNATURE:
        raise UnsupportedFormatError(f"{path} is not a PNG file")
    if len(head) < 29 or head[12:16] != b"IHDR":
        raise CorruptDataError(f"{path}: missing or truncated IHDR chunk")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", head[16:26])
    if bit_depth not in (8, 16):
        raise UnsupportedFormatError(f"{path}: unsupported bit depth {bit_depth}")
    if color_type not in _CHANNELS_BY_COLOR_TYPE:
        raise UnsupportedFormatError(f"{path}: unsupported PNG color type {color_type}")
    return width, height, bit_depth, _CHANNELS_BY_COLOR_TYPE[color_type]


def load_png(path) -> Image:
    """Load an 8- or 16-bit PNG as an Image.

    Integer samples are divided by the bit-depth maximum (255 or 65535);
    dimensions are preserved exactly.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    width, height, bit_depth, channels = _read_png_header(path)
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise CorruptDataError(f"{path}: PNG decode failed")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape != (height, width, channels):
        raise CorruptDataError(
            f"{path}: decoded shape {arr.shape} disagrees with header "
            f"({height}, {width}, {channels})"
        )
    if channels >= 3:  # cv2 decodes to BGR(A)
        arr = arr[:, :, [2, 1, 0] + ([3] if channels == 4 else [])]
    maxval = 255.0 if bit_depth == 8 else 65535.0
    return Image(arr.astype(np.float64) / maxval)


def save_png(img: Image, path) -> None:
    """Write an Image as 8-bit PNG, quantizing with round-half-up."""
    path = Path(path)
    arr = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    else:  # cv2 expects BGR(A)
        arr = arr[:, :, [2, 1, 0] + ([3] if arr.shape[2] == 4 else [])]
    try:
        ok = cv2.imwrite(str(path), arr)
    except cv2.error as e:
        raise IoFailureError(f"cannot write {path}: {e}") from e
    if not ok:
        raise IoFailureError(f"cannot write {path}")


def load_mask(path) -> BinaryMask:
    """Load a binary mask stored as 8-bit grayscale PNG (0 -> 0, 255 -> 1).

    Any sample outside {0, 255} is rejected: silent thresholding would hide
    upstream labeling bugs.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    width, height, bit_depth, channels = _read_png_header(path)
    if bit_depth != 8 or channels != 1:
        raise UnsupportedFormatError(f"{path}: masks must be 8-bit grayscale PNG")
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None or arr.shape != (height, width):
        raise CorruptDataError(f"{path}: PNG decode failed")
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise CorruptDataError(
            f"{path}: {int(bad.sum())} mask samples outside {{0, 255}}"
        )
    return BinaryMask((arr == 255).astype(np.uint8))


def save_mask(mask: BinaryMask, path) -> None:
    """Write a binary mask as 8-bit grayscale PNG with samples in {0, 255}."""
    path = Path(path)
    arr = (mask.data * np.uint8(255)).astype(np.uint8)
    try:
        ok = cv2.imwrite(str(path), arr)
    except cv2.error as e:
        raise IoFailureError(f"cannot write {path}: {e}") from e
    if not ok:
        raise IoFailureError(f"cannot write {path}")


def to_grayscale(img: Image) -> Image:
    """Collapse a 3-channel image to luma with BT.601 weights."""
    if img.channels != 3:
        raise WrongChannelCountError(f"expected 3 channels, got {img.channels}")
    y = img.data @ GRAY_WEIGHTS
    return Image(np.clip(y, 0.0, 1.0)[:, :, None])


def apply_mask(img: Image, mask: BinaryMask) -> Image:
    """Zero every pixel where the mask is 0."""
    if (img.height, img.width) != (mask.height, mask.width):
        raise ShapeMismatchError(
            f"image {img.height}x{img.width} vs mask {mask.height}x{mask.width}"
        )
    return Image(img.data * mask.data[:, :, None])
