"""Gaussian filtering and texture-map extraction.

The texture transform scores each pixel by how much darker it is than its
Gaussian-blurred neighborhood, on the 0-255 intensity scale:

    T = (1 - I / (1 + I_blur)) * 255, clamped to [0, 255]

Dark, thin structures (wrinkles, contours) dip below their surroundings and
score high. Masking non-facial regions afterwards yields the weak label used
as the pretraining target.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .errors import (
    InvalidKernelSpecError,
    IoFailureError,
    MissingFileError,
    ShapeMismatchError,
    WrinkleforgeError,
    WrongChannelCountError,
)
from .image_io import BinaryMask, Image, load_mask, load_png, to_grayscale

DEFAULT_KERNEL_SIZE = 21
DEFAULT_SIGMA = 5.0


@dataclass(frozen=True)
class GaussianKernel:
    """Normalized 2-D Gaussian kernel together with its separable 1-D factor."""

    size: int
    sigma: float
    weights_1d: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class TextureMap:
    """Float raster in [0, 255], shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 2:
            raise ShapeMismatchError("TextureMap data must be an (H, W) array")
        if d.dtype != np.float64:
            object.__setattr__(self, "data", d.astype(np.float64))
            d = self.data
        if d.size and (not np.isfinite(d).all() or d.min() < 0.0 or d.max() > 255.0):
            raise ShapeMismatchError("TextureMap values must be finite and within [0, 255]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def make_gaussian(size: int, sigma: float) -> GaussianKernel:
    """Build a normalized Gaussian kernel of odd size.

    w(i, j) is proportional to exp(-(i^2 + j^2) / (2 sigma^2)) over offsets
    i, j in [-(size-1)/2, (size-1)/2]. The 2-D weights are the outer product
    of the normalized 1-D factor, so they sum to 1 and are exactly separable.
    """
    if size < 1 or size % 2 == 0:
        raise InvalidKernelSpecError(f"kernel size must be odd and >= 1, got {size}")
    if not sigma > 0:
        raise InvalidKernelSpecError(f"sigma must be positive, got {sigma}")
    half = (size - 1) // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    w1 = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    w1 /= w1.sum()
    return GaussianKernel(size=size, sigma=float(sigma), weights_1d=w1, weights=np.outer(w1, w1))


def gaussian_blur(img: Image, kernel: GaussianKernel) -> Image:
    """Separable 2-D convolution with reflect-101 borders (edge pixel not repeated)."""
    if img.channels != 1:
        raise WrongChannelCountError(f"expected 1 channel, got {img.channels}")
    plane = img.data[:, :, 0]
    # scipy's 'mirror' mode is reflect-101; the kernel is symmetric so
    # correlation equals convolution
    out = ndimage.correlate1d(plane, kernel.weights_1d, axis=0, mode="mirror")
    out = ndimage.correlate1d(out, kernel.weights_1d, axis=1, mode="mirror")
    return Image(np.clip(out, 0.0, 1.0)[:, :, None])


def texture_map(gray: Image, kernel: GaussianKernel) -> TextureMap:
    """Apply the texture transform to a single-channel image.

    Intensities move to the 0-255 scale (where the +1 in the denominator is
    meaningful) before the ratio; the result is clamped to [0, 255] because
    pixels brighter than their blurred neighborhood would go negative.
    """
    if gray.channels != 1:
        raise WrongChannelCountError(f"expected 1 channel, got {gray.channels}")
    intensity = gray.data[:, :, 0] * 255.0
    blurred = gaussian_blur(gray, kernel).data[:, :, 0] * 255.0
    t = (1.0 - intensity / (1.0 + blurred)) * 255.0
    return TextureMap(np.clip(t, 0.0, 255.0))


def weak_label(img: Image, face: BinaryMask, kernel: GaussianKernel) -> TextureMap:
    """Texture map of the grayscale image with non-facial pixels set to 0."""
    if (img.height, img.width) != (face.height, face.width):
        raise ShapeMismatchError(
            f"image {img.height}x{img.width} vs mask {face.height}x{face.width}"
        )
    t = texture_map(to_grayscale(img), kernel)
    return TextureMap(t.data * face.data)


def save_texture(tmap: TextureMap, path) -> None:
    """Write a texture map as 8-bit grayscale PNG (round-half-up quantization)."""
    arr = np.floor(tmap.data + 0.5).astype(np.uint8)
    try:
        ok = cv2.imwrite(str(path), arr)
    except cv2.error as e:
        raise IoFailureError(f"cannot write {path}: {e}") from e
    if not ok:
        raise IoFailureError(f"cannot write {path}")


def load_texture(path) -> TextureMap:
    """Load an 8-bit grayscale texture PNG back to [0, 255] floats."""
    img = load_png(path)
    if img.channels != 1:
        raise WrongChannelCountError(f"{path}: texture maps must be single-channel")
    return TextureMap(img.data[:, :, 0] * 255.0)


def _weak_label_job(args: tuple) -> tuple[str, dict | None]:
    """Process one id; returns (id, failure-record-or-None). Used by the batch pool."""
    image_id, src_dir, mask_dir, out_dir, size, sigma = args
    kernel = make_gaussian(size, sigma)
    mask_path = Path(mask_dir) / f"{image_id}.png"
    if not mask_path.is_file():
        return image_id, {"id": image_id, "reason": "MissingMask", "detail": str(mask_path)}
    try:
        img = load_png(Path(src_dir) / f"{image_id}.png")
        mask = load_mask(mask_path)
        label = weak_label(img, mask, kernel)
        save_texture(label, Path(out_dir) / f"{image_id}.png")
    except WrinkleforgeError as e:
        return image_id, {"id": image_id, "reason": type(e).__name__, "detail": str(e)}
    return image_id, None


def batch_weak_labels(src_dir, mask_dir, out_dir, kernel: GaussianKernel,
                      jobs: int | None = None) -> dict:
    """Generate one weak-label PNG per image in src_dir.

    Inputs follow the `images/<id>.png` + `face_masks/<id>.png` layout.
    Per-file failures are collected in the report instead of aborting the
    batch; outputs are byte-identical for any worker count because each file
    depends only on its own inputs.

    Returns {"processed": count, "failed": [records sorted by id]}.
    """
    src_dir, mask_dir, out_dir = Path(src_dir), Path(mask_dir), Path(out_dir)
    if not src_dir.is_dir():
        raise MissingFileError(str(src_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = sorted(p.stem for p in src_dir.glob("*.png"))
    jobs = jobs or os.cpu_count() or 1
    job_args = [(i, str(src_dir), str(mask_dir), str(out_dir), kernel.size, kernel.sigma)
                for i in ids]
    if jobs <= 1 or len(ids) <= 1:
        results = [_weak_label_job(a) for a in job_args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_weak_label_job, job_args, chunksize=8))
    failed = sorted((rec for _, rec in results if rec is not None), key=lambda r: r["id"])
    return {"processed": len(ids) - len(failed), "failed": failed}
