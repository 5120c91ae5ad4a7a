"""Thermal radiometry and nasal-airflow extraction from thermal video."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TimeSeries
from .errors import BoundsError, DomainError, SomnoError, TooShortError
from .io import read_framed, write_framed

PLANCK_H = 6.63e-34  # J s
BOLTZMANN_K = 1.38e-23  # J / K
LIGHT_C = 3e8  # m / s
STEFAN_BOLTZMANN = 5.67e-8  # W m^-2 K^-4

DEFAULT_DERIVATIVE_WINDOW = 25
DERIVATIVE_REFERENCE_RATE = 30.0


@dataclass(frozen=True)
class RadiometricParams:
    emissivity: float = 1.0
    sigma: float = STEFAN_BOLTZMANN
    h: float = PLANCK_H
    k: float = BOLTZMANN_K
    c: float = LIGHT_C

    def __post_init__(self):
        if not 0 < self.emissivity <= 1:
            raise DomainError(f"emissivity must lie in (0, 1], got {self.emissivity}")


@dataclass(frozen=True)
class RoiRect:
    row0: int
    col0: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.row0 < 0 or self.col0 < 0:
            raise BoundsError(f"invalid ROI {self}", code="thermal-airflow.bounds")

    def fits(self, height: int, width: int) -> bool:
        return self.row0 + self.height <= height and self.col0 + self.width <= width

    @property
    def slices(self):
        return slice(self.row0, self.row0 + self.height), slice(self.col0, self.col0 + self.width)


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Stack of thermal frames shaped ``(T, H, W)`` sampled at ``rate`` Hz."""

    frames: np.ndarray
    rate: float
    t0: float = 0.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise SomnoError("frames must be a (T, H, W) array")
        if not self.rate > 0:
            raise SomnoError(f"frame rate must be positive, got {self.rate}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]


def spectral_exitance(wavelength, temperature, params: RadiometricParams = RadiometricParams()):
    """Planck spectral radiant exitance in W m^-2 per metre of wavelength."""
    lam = np.asarray(wavelength, dtype=float)
    temp = np.asarray(temperature, dtype=float)
    if np.any(lam <= 0) or np.any(temp <= 0):
        raise DomainError("wavelength and temperature must be positive")
    h, c, k = params.h, params.c, params.k
    x = h * c / (lam * k * temp)
    out = 2 * math.pi * params.emissivity * h * c**2 / lam**5 / np.expm1(x)
    return out if out.ndim else float(out)


def radiant_exitance(temperature, params: RadiometricParams = RadiometricParams()):
    """Total exitance ``emissivity * sigma * T**4``."""
    temp = np.asarray(temperature, dtype=float)
    if np.any(temp < 0):
        raise DomainError("temperature must be non-negative")
    out = params.emissivity * params.sigma * temp**4
    return out if out.ndim else float(out)


def temperature_from_exitance(exitance, params: RadiometricParams = RadiometricParams()):
    """Invert :func:`radiant_exitance` by taking the fourth root."""
    val = np.asarray(exitance, dtype=float)
    if np.any(val < 0):
        raise DomainError("exitance must be non-negative")
    out = (val / (params.emissivity * params.sigma)) ** 0.25
    return out if out.ndim else float(out)


def roi_mean_series(seq: FrameSequence, roi: RoiRect) -> TimeSeries:
    """Spatial mean of each frame over ``roi``."""
    h, w = seq.shape
    if not roi.fits(h, w):
        raise BoundsError(f"ROI {roi} exceeds frame size {h}x{w}", code="thermal-airflow.bounds")
    rows, cols = roi.slices
    patch = seq.frames[:, rows, cols].astype(float)
    return TimeSeries(patch.mean(axis=(1, 2)), seq.rate, seq.t0)


def derivative_window(rate: float) -> int:
    """Window length keeping the 25-frames-at-30-Hz temporal extent, forced odd."""
    n = int(round(DEFAULT_DERIVATIVE_WINDOW * rate / DERIVATIVE_REFERENCE_RATE))
    if n % 2 == 0:
        n += 1
    return max(3, n)


def motion_compensated_derivative(ts: TimeSeries, n: int | None = None) -> TimeSeries:
    """Average of first differences over a centered window of ``n`` samples.

    ``y[t] = (1/n) * sum_{i=-h}^{h} (x[t+i] - x[t+i-1])`` with ``h = n // 2``,
    which telescopes to ``(x[t+h] - x[t-h-1]) / n``. Only fully supported
    outputs are kept, so the result is ``n`` samples shorter and starts
    ``(h + 1) / rate`` seconds later.
    """
    if n is None:
        n = derivative_window(ts.rate)
    if n < 3 or n % 2 == 0:
        raise SomnoError(f"window must be odd and >= 3, got {n}")
    if len(ts) < n + 2:
        raise TooShortError(f"need at least {n + 2} samples, got {len(ts)}", code="thermal-airflow.too-short")
    h = n // 2
    x = ts.samples
    y = (x[n:] - x[: len(x) - n]) / n
    return ts.replace(y, t0=ts.t0 + (h + 1) / ts.rate)


def write_frames(seq: FrameSequence, path) -> None:
    count, height, width = seq.frames.shape
    header = {"rate_hz": seq.rate, "t0_s": seq.t0, "height": height, "width": width, "count": count}
    write_framed(path, header, seq.frames)


def read_frames(path) -> FrameSequence:
    header, payload = read_framed(path)
    shape = (header["count"], header["height"], header["width"])
    if payload.size != shape[0] * shape[1] * shape[2]:
        raise SomnoError(f"{path}: raster size does not match header", code="io.format")
    return FrameSequence(payload.reshape(shape), header["rate_hz"], header["t0_s"])
