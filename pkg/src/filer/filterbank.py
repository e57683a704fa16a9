"""Multi-scale, multi-orientation log-Gabor filter bank in the frequency domain."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidConfig


@dataclass(frozen=True)
class FilterBankConfig:
    n_scales: int = 4
    n_orients: int = 6
    min_wavelength: float = 3.0
    scale_mult: float = 2.1
    sigma_f_ratio: float = 0.55
    sigma_theta: float | None = None  # default pi / (2 * n_orients) * 1.2
    orientation_offset: float = 0.0  # radians added to every filter orientation
    literal_form: bool = False  # unsquared exponents exactly as typeset

    def __post_init__(self):
        if self.n_scales < 1 or self.n_orients < 1:
            raise InvalidConfig("n_scales and n_orients must be >= 1")
        if self.min_wavelength < 2:
            raise InvalidConfig("min_wavelength must be >= 2")
        if self.scale_mult <= 1:
            raise InvalidConfig("scale_mult must be > 1")
        if not 0 < self.sigma_f_ratio < 1:
            raise InvalidConfig("sigma_f_ratio must lie in (0, 1)")
        if self.sigma_theta is not None and self.sigma_theta <= 0:
            raise InvalidConfig("sigma_theta must be > 0")

    @property
    def angular_sigma(self) -> float:
        if self.sigma_theta is not None:
            return self.sigma_theta
        return math.pi / (2 * self.n_orients) * 1.2

    def center_frequencies(self) -> np.ndarray:
        """Center frequency (cycles/pixel) of every scale, finest first."""
        wavelengths = self.min_wavelength * self.scale_mult ** np.arange(self.n_scales)
        return 1.0 / wavelengths

    def orientations(self) -> np.ndarray:
        return np.arange(self.n_orients) * math.pi / self.n_orients + self.orientation_offset


@dataclass(frozen=True)
class FilterBank:
    transfers: np.ndarray  # (n_scales, n_orients, height, width), real-valued
    orientations: np.ndarray
    config: FilterBankConfig = field(repr=False)

    @property
    def shape(self):
        return self.transfers.shape[2:]


@dataclass(frozen=True)
class ResponseStack:
    even: np.ndarray  # (n_scales, n_orients, height, width)
    odd: np.ndarray

    @property
    def n_scales(self) -> int:
        return self.even.shape[0]

    @property
    def n_orients(self) -> int:
        return self.even.shape[1]

    @property
    def shape(self):
        return self.even.shape[2:]


def frequency_grid(height: int, width: int):
    """Radius (cycles/pixel) and polar angle of every DFT bin."""
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    radius = np.sqrt(fx ** 2 + fy ** 2)
    theta = np.arctan2(np.broadcast_to(fy, radius.shape), np.broadcast_to(fx, radius.shape))
    return radius, theta


def _radial_term(radius, f0, sigma_ratio, literal):
    r = radius.copy()
    r[0, 0] = 1.0
    log_sigma = math.log(sigma_ratio)
    if literal:
        out = np.exp(-np.log(r / f0) / (2.0 * log_sigma))
    else:
        out = np.exp(-(np.log(r / f0) ** 2) / (2.0 * log_sigma ** 2))
    out[0, 0] = 0.0
    return out


def _angular_term(theta, theta_o, sigma_theta, literal):
    # wrapped angular deviation in (-pi, pi]
    d = np.arctan2(np.sin(theta - theta_o), np.cos(theta - theta_o))
    if literal:
        return np.exp(-np.abs(d) / (2.0 * sigma_theta ** 2))
    return np.exp(-(d ** 2) / (2.0 * sigma_theta ** 2))


@functools.lru_cache(maxsize=8)
def build_filter_bank(width: int, height: int, config: FilterBankConfig = FilterBankConfig()) -> FilterBank:
    """Evaluate the log-radial times angular Gaussian transfer on the DFT grid.

    Each transfer is one-sided in orientation, so the spatial kernel is
    complex with an even real part and an odd imaginary part.  Results are
    cached per ``(width, height, config)``.
    """
    if width < 8 or height < 8:
        raise InvalidConfig(f"image {width}x{height} too small for a filter bank")
    radius, theta = frequency_grid(height, width)
    sigma_theta = config.angular_sigma
    orients = config.orientations()
    radial = [_radial_term(radius, f0, config.sigma_f_ratio, config.literal_form)
              for f0 in config.center_frequencies()]
    angular = [_angular_term(theta, th, sigma_theta, config.literal_form) for th in orients]
    transfers = np.empty((config.n_scales, config.n_orients, height, width))
    for s, rad in enumerate(radial):
        for o, ang in enumerate(angular):
            transfers[s, o] = rad * ang
    transfers[:, :, 0, 0] = 0.0
    transfers.setflags(write=False)
    orients.setflags(write=False)
    return FilterBank(transfers=transfers, orientations=orients, config=config)


def apply_filter_bank(image: np.ndarray, bank: FilterBank) -> ResponseStack:
    """Even/odd responses of ``image`` to every filter in ``bank``."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape != tuple(bank.shape):
        raise DimensionMismatch(f"bank built for {tuple(bank.shape)}, image is {image.shape}")
    spectrum = np.fft.fft2(image)
    ns, no = bank.transfers.shape[:2]
    even = np.empty((ns, no) + image.shape)
    odd = np.empty_like(even)
    for s in range(ns):
        for o in range(no):
            resp = np.fft.ifft2(spectrum * bank.transfers[s, o])
            even[s, o] = resp.real
            odd[s, o] = resp.imag
    return ResponseStack(even=even, odd=odd)


def amplitude(stack: ResponseStack, s: int, o: int) -> np.ndarray:
    """Elementwise magnitude of the (s, o) even/odd response pair."""
    if not (0 <= s < stack.n_scales and 0 <= o < stack.n_orients):
        raise IndexError(f"(s={s}, o={o}) outside {stack.n_scales}x{stack.n_orients} stack")
    return np.sqrt(stack.even[s, o] ** 2 + stack.odd[s, o] ** 2)


def spatial_kernel(bank: FilterBank, s: int, o: int) -> np.ndarray:
    """Complex spatial kernel of one filter, centred at index ``[0, 0]``."""
    return np.fft.ifft2(bank.transfers[s, o])
