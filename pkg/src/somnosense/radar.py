"""FMCW radar processing: range matrix, phase tracking and range-bin selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .core import BREATHING_BAND, FrequencyBand, TimeSeries, power_spectrum
from .errors import BoundsError, ConfigError, NoDataError, SomnoError
from .io import read_framed, write_framed
from .thermal import motion_compensated_derivative

SPEED_OF_LIGHT = 3e8

DEFAULT_WINDOW_BINS = 11
DEFAULT_SIGNAL_HALFWIDTH = 1


@dataclass(frozen=True)
class ChirpConfig:
    """Chirp timing. Defaults: 77 GHz start, 4 GHz sweep in 50 us, 256 samples, 30 Hz."""

    f_c: float = 77e9
    slope: float = 4e9 / 50e-6
    t_c: float = 50e-6
    adc_rate: float = 256 / 50e-6
    samples_per_chirp: int = 256
    chirp_rate: float = 30.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"{f.name} must be positive")
        if self.samples_per_chirp > self.adc_rate * self.t_c * (1 + 1e-9):
            raise ConfigError("samples_per_chirp exceeds adc_rate * t_c")

    @property
    def bandwidth(self) -> float:
        return self.slope * self.t_c

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def sampled_bandwidth(self) -> float:
        return self.slope * self.samples_per_chirp / self.adc_rate

    @property
    def phase_center_frequency(self) -> float:
        """Carrier at the centre of the sampled sweep, where spectral phase is referenced."""
        return self.f_c + self.slope * (self.samples_per_chirp - 1) / (2 * self.adc_rate)

    def bin_spacing(self, fft_length: int) -> float:
        return SPEED_OF_LIGHT / (2 * self.slope) * self.adc_rate / fft_length

    def max_range(self) -> float:
        return SPEED_OF_LIGHT * self.adc_rate / (2 * self.slope)


@dataclass(frozen=True, eq=False)
class AdcCube:
    """Complex I/Q samples shaped ``(chirps, samples_per_chirp)``."""

    samples: np.ndarray
    config: ChirpConfig

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[1] != self.config.samples_per_chirp:
            raise ConfigError(f"ADC cube shape {s.shape} does not match samples_per_chirp")
        if not np.all(np.isfinite(s)):
            raise SomnoError("ADC samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def chirps(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True, eq=False)
class RangeMatrix:
    """Complex range profiles shaped ``(range_bins, chirps)``."""

    values: np.ndarray
    bin_spacing: float
    config: ChirpConfig
    t0: float = 0.0

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    def bin_range(self, b) -> float:
        return b * self.bin_spacing

    def range_bin(self, r: float) -> int:
        return int(round(r / self.bin_spacing))


@dataclass(frozen=True)
class BinSelection:
    index: int
    snr: float
    window: tuple


def range_matrix(cube: AdcCube, fft_length: int | None = None, max_range: float | None = None) -> RangeMatrix:
    """Hann-windowed range FFT of every chirp.

    Bin ``b`` is centred on range ``b * c / (2 k) * adc_rate / fft_length``.
    ``max_range`` optionally truncates the returned bins to save memory.
    """
    cfg = cube.config
    fft_length = fft_length or cfg.samples_per_chirp
    if fft_length < cfg.samples_per_chirp:
        raise ConfigError(f"fft_length {fft_length} < samples_per_chirp {cfg.samples_per_chirp}")
    spacing = cfg.bin_spacing(fft_length)
    nbins = fft_length
    if max_range is not None:
        nbins = min(fft_length, int(math.ceil(max_range / spacing)) + 1)
    if cube.chirps == 0:
        return RangeMatrix(np.zeros((nbins, 0), dtype=complex), spacing, cfg)
    win = np.hanning(cfg.samples_per_chirp)
    out = np.empty((nbins, cube.chirps), dtype=np.complex128)
    block = max(1, 2**22 // fft_length)
    for c0 in range(0, cube.chirps, block):
        seg = cube.samples[c0 : c0 + block].astype(np.complex128) * win
        out[:, c0 : c0 + block] = np.fft.fft(seg, n=fft_length, axis=1)[:, :nbins].T
    out.setflags(write=False)
    return RangeMatrix(out, spacing, cfg)


def phase_series(rm: RangeMatrix, bin: int) -> TimeSeries:
    """Unwrapped slow-time phase of one range bin, in radians.

    The spectral phase of a windowed chirp tracks range at the sweep-centre
    carrier; it is rescaled to the chirp start frequency so that a range
    change ``dR`` maps to ``4 * pi * dR / wavelength`` with
    ``wavelength = c / f_c``.
    """
    if not 0 <= bin < rm.bins:
        raise BoundsError(f"range bin {bin} outside [0, {rm.bins})", code="radar-effort.bounds")
    cfg = rm.config
    phase = np.unwrap(np.angle(rm.values[bin]))
    scale = cfg.f_c / cfg.phase_center_frequency
    return TimeSeries(phase * scale, cfg.chirp_rate, rm.t0, unit="rad")


def band_snr(ts: TimeSeries, band: FrequencyBand = BREATHING_BAND, signal_halfwidth: int = DEFAULT_SIGNAL_HALFWIDTH) -> float:
    """In-band spectral SNR: power near the strongest in-band bin over the rest of the band."""
    if ts.duration < 30.0 - 1e-9:
        raise SomnoError(f"SNR estimation needs >= 30 s, got {ts.duration:.2f} s", code="radar-effort.too-short")
    freqs, power = power_spectrum(ts)
    band_idx = np.flatnonzero((freqs >= band.low) & (freqs <= band.high))
    if band_idx.size == 0:
        raise ConfigError("no spectral bins in band")
    peak = band_idx[int(np.argmax(power[band_idx]))]
    sig_mask = np.abs(band_idx - peak) <= signal_halfwidth
    noise = power[band_idx[~sig_mask]]
    if noise.size == 0:
        raise ConfigError("band too narrow: no noise bins remain at this resolution")
    num = float(power[band_idx[sig_mask]].sum())
    den = float(noise.sum())
    if den == 0.0:
        return math.inf if num > 0 else 0.0
    return num / den


def max_power_bin(rm: RangeMatrix) -> int:
    """Bin with the highest mean magnitude over slow time, skipping the DC bin."""
    mag = np.abs(rm.values).mean(axis=1)
    mag[0] = -1.0
    return int(np.argmax(mag))


def select_breathing_bin(
    rm: RangeMatrix,
    window: int = DEFAULT_WINDOW_BINS,
    band: FrequencyBand = BREATHING_BAND,
    signal_halfwidth: int = DEFAULT_SIGNAL_HALFWIDTH,
    derivative_n: int | None = None,
) -> tuple[BinSelection, TimeSeries]:
    """Pick the range bin with the best breathing-band SNR near the strongest reflector.

    Returns the selection and the SNR-weighted phase of the chosen bin after
    the motion-compensated derivative.
    """
    if rm.values.size == 0:
        raise NoDataError("empty range matrix")
    if window < 1:
        raise ConfigError("window must be >= 1 bin")
    center = max_power_bin(rm)
    lo = max(1, center - window // 2)
    hi = min(rm.bins, center - window // 2 + window)
    best, best_snr, best_phase = None, -1.0, None
    for b in range(lo, hi):
        x = phase_series(rm, b)
        snr = band_snr(x, band, signal_halfwidth)
        if snr > best_snr:
            best, best_snr, best_phase = b, snr, x
    y = best_phase.replace(best_snr * best_phase.samples)
    return BinSelection(best, best_snr, (lo, hi)), motion_compensated_derivative(y, derivative_n)


# -- file format --------------------------------------------------------------


def write_adc(cube: AdcCube, path) -> None:
    cfg = cube.config
    header = {
        "f_c_hz": cfg.f_c,
        "slope_hz_per_s": cfg.slope,
        "t_c_s": cfg.t_c,
        "adc_rate_hz": cfg.adc_rate,
        "samples_per_chirp": cfg.samples_per_chirp,
        "chirp_rate_hz": cfg.chirp_rate,
        "chirps": cube.chirps,
    }
    iq = np.empty(cube.samples.shape + (2,), dtype=np.float32)
    iq[..., 0] = cube.samples.real
    iq[..., 1] = cube.samples.imag
    write_framed(path, header, iq)


def read_adc(path) -> AdcCube:
    header, payload = read_framed(path)
    cfg = ChirpConfig(
        f_c=header["f_c_hz"],
        slope=header["slope_hz_per_s"],
        t_c=header["t_c_s"],
        adc_rate=header["adc_rate_hz"],
        samples_per_chirp=int(header["samples_per_chirp"]),
        chirp_rate=header["chirp_rate_hz"],
    )
    n = int(header["chirps"])
    iq = payload.reshape(n, cfg.samples_per_chirp, 2)
    return AdcCube((iq[..., 0] + 1j * iq[..., 1]).astype(np.complex64), cfg)
