"""Raster ingestion and the two convolution paths used by the pipeline.

Images and every derived map are plain 2-D ``float64`` numpy arrays indexed
``[row, col]`` (``y`` down, ``x`` right).  Spectra are ``complex128`` arrays
of the same shape laid out in ``numpy.fft`` order (DC at ``[0, 0]``).
"""
from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DimensionMismatch, EvenKernel, UnsupportedFormat, ZeroSizedImage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_FORMATS = {"PNG", "PPM"}  # PIL reports PGM files as PPM
_MODES = {"L", "RGB", "RGBA", "LA", "P", "1"}


def as_field(values, name: str = "field") -> np.ndarray:
    """Return ``values`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ZeroSizedImage(f"{name} has zero size")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def load_grayscale(path) -> np.ndarray:
    """Read an 8-bit PNG/PGM raster into a ``[0, 1]`` grayscale array.

    RGB input is collapsed with the 0.299/0.587/0.114 luminance weights
    before scaling.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a readable raster") from exc
    if img.format not in _FORMATS:
        raise UnsupportedFormat(f"{path}: format {img.format} not supported")
    if img.mode not in _MODES:
        raise UnsupportedFormat(f"{path}: pixel mode {img.mode} is not 8-bit")
    if img.width == 0 or img.height == 0:
        raise ZeroSizedImage(path)

    if img.mode in ("L", "1"):
        data = np.asarray(img.convert("L"), dtype=np.float64)
    elif img.mode == "LA":
        data = np.asarray(img, dtype=np.float64)[..., 0]
    else:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        w = np.asarray(LUMA_WEIGHTS)
        data = rgb @ w
    return np.clip(data / 255.0, 0.0, 1.0)


def save_grayscale(path, image: np.ndarray) -> None:
    """Write a ``[0, 1]`` array as an 8-bit grayscale PNG (or PGM by suffix)."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(os.fspath(path))


def fft_convolve(image: np.ndarray, kernel_spectrum: np.ndarray):
    """Circular convolution with a kernel given by its transfer function.

    Returns the real and imaginary parts of ``ifft2(fft2(image) * spectrum)``.
    """
    image = np.asarray(image, dtype=np.float64)
    kernel_spectrum = np.asarray(kernel_spectrum)
    if image.shape != kernel_spectrum.shape:
        raise DimensionMismatch(
            f"spectrum {kernel_spectrum.shape} does not match image {image.shape}")
    out = np.fft.ifft2(np.fft.fft2(image) * kernel_spectrum)
    return out.real.copy(), out.imag.copy()


def kernel_to_spectrum(kernel: np.ndarray, shape) -> np.ndarray:
    """Transfer function of a small centred odd kernel on a ``shape`` grid."""
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise EvenKernel(f"kernel shape {kernel.shape} must be odd")
    if kh > shape[0] or kw > shape[1]:
        raise DimensionMismatch("kernel larger than grid")
    padded = np.zeros(shape)
    padded[:kh, :kw] = kernel
    padded = np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(padded)


def direct_convolve(field: np.ndarray, kernel: np.ndarray, boundary: str = "periodic") -> np.ndarray:
    """Spatial convolution with an odd, centred kernel.

    ``boundary`` is ``"periodic"`` (wrap-around) or ``"replicate"`` (edge
    pixels extended).
    """
    field = np.asarray(field, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise EvenKernel(f"kernel shape {kernel.shape} must be odd")
    modes = {"periodic": "wrap", "replicate": "nearest"}
    if boundary not in modes:
        raise ValueError(f"unknown boundary rule {boundary!r}")
    return ndimage.convolve(field, kernel, mode=modes[boundary])


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Normalized 2-D Gaussian kernel of odd size ``2*radius + 1``."""
    if radius is None:
        radius = max(1, int(np.ceil(3.0 * sigma)))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()
