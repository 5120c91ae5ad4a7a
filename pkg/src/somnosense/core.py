"""Signal containers and generic operations shared by every pipeline stage.

Filtering, peak picking, envelope interpolation and spectral rate estimation
live here. All functions are pure: they never mutate their inputs and return
new read-only containers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import signal as sps

from .errors import (
    InvalidBandError,
    NoKeypointsError,
    NoSignalError,
    SomnoError,
    TooShortError,
)

# Butterworth prototype order per band edge; the band-pass has twice this
# order and is applied forward-backward (squared magnitude, zero phase).
BANDPASS_ORDER = 3

BREATHING_BAND_HZ = (0.1, 0.5)

# Maximum plausible breathing rate used for the default peak spacing.
MAX_BREATH_HZ = 0.6

SPECTRAL_BIN_HZ = 0.005


def _frozen(values, dtype=float):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled real-valued signal.

    Parameters
    ----------
    samples : array_like
        Sample values. Must be finite.
    rate : float
        Sampling rate in Hz.
    t0 : float
        Time of the first sample in seconds.
    unit : str
        Free-form unit label carried through file interchange.
    """

    samples: np.ndarray
    rate: float
    t0: float = 0.0
    unit: str = ""

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.ndim != 1:
            raise SomnoError("TimeSeries samples must be one-dimensional")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise SomnoError(f"sample rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(samples)):
            raise SomnoError("TimeSeries samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.rate

    def replace(self, samples, t0=None) -> "TimeSeries":
        return TimeSeries(samples, self.rate, self.t0 if t0 is None else t0, self.unit)

    def window(self, start_s: float, end_s: float) -> "TimeSeries":
        """Samples with ``start_s <= t < end_s``."""
        i0 = max(0, int(math.ceil((start_s - self.t0) * self.rate - 1e-9)))
        i1 = min(len(self), int(math.ceil((end_s - self.t0) * self.rate - 1e-9)))
        i1 = max(i0, i1)
        return TimeSeries(self.samples[i0:i1], self.rate, self.t0 + i0 / self.rate, self.unit)


class PeakKind(str, Enum):
    MINIMA = "minima"
    MAXIMA = "maxima"


@dataclass(frozen=True, eq=False)
class PeakList:
    """Extrema of a signal: strictly increasing sample indices and their values."""

    indices: np.ndarray
    values: np.ndarray
    kind: PeakKind

    def __post_init__(self):
        idx = _frozen(self.indices, dtype=np.int64)
        vals = _frozen(self.values)
        if idx.shape != vals.shape or idx.ndim != 1:
            raise SomnoError("peak indices and values must be matching 1-D arrays")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise SomnoError("peak indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", PeakKind(self.kind))

    def __len__(self):
        return self.indices.shape[0]

    def subset(self, keep) -> "PeakList":
        keep = np.asarray(keep)
        return PeakList(self.indices[keep], self.values[keep], self.kind)


@dataclass(frozen=True)
class FrequencyBand:
    low: float
    high: float

    def __post_init__(self):
        if not (0 <= self.low < self.high):
            raise InvalidBandError(f"need 0 <= low < high, got ({self.low}, {self.high})")


BREATHING_BAND = FrequencyBand(*BREATHING_BAND_HZ)


class EventKind(str, Enum):
    OSA = "OSA"
    CSA = "CSA"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ApneaEvent:
    """Annotated interval ``[start, end)`` in seconds."""

    start: float
    end: float
    kind: EventKind = EventKind.UNKNOWN
    confidence: float = 1.0

    def __post_init__(self):
        if self.end - self.start < 0:
            raise SomnoError(f"event end {self.end} precedes start {self.start}")
        if not 0.0 <= self.confidence <= 1.0:
            raise SomnoError(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(self, "kind", EventKind(self.kind))

    @property
    def duration(self) -> float:
        return self.end - self.start


def check_event_list(events) -> list:
    """Return ``events`` as a list after verifying sorted, non-overlapping order."""
    events = list(events)
    for a, b in zip(events, events[1:]):
        if b.start < a.start:
            raise SomnoError("events must be sorted by start")
        if b.start < a.end:
            raise SomnoError(f"events overlap: [{a.start}, {a.end}) and [{b.start}, {b.end})")
    return events


def _bandpass_sos(band: FrequencyBand, rate: float):
    return sps.butter(BANDPASS_ORDER, [band.low, band.high], btype="bandpass", fs=rate, output="sos")


def bandpass(ts: TimeSeries, band: FrequencyBand = BREATHING_BAND) -> TimeSeries:
    """Zero-phase Butterworth band-pass.

    A 3rd-order-per-edge Butterworth design (6th-order band-pass, second-order
    sections) is run forward and backward, so the effective magnitude response
    is squared and the phase response is zero.
    """
    if band.low <= 0:
        raise InvalidBandError("band-pass needs a positive low edge")
    if not ts.rate > 2 * band.high:
        raise InvalidBandError(f"band high edge {band.high} Hz is at or above Nyquist ({ts.rate / 2} Hz)")
    sos = _bandpass_sos(band, ts.rate)
    padlen = 3 * (2 * len(sos) + 1)
    if len(ts) <= padlen:
        raise TooShortError(f"series of {len(ts)} samples is shorter than the filter warm-up ({padlen + 1})")
    return ts.replace(sps.sosfiltfilt(sos, ts.samples))


def default_min_distance(rate: float) -> int:
    return max(1, int(round(rate / MAX_BREATH_HZ)))


def default_min_prominence(samples: np.ndarray) -> float:
    if samples.size == 0:
        return 0.0
    q75, q25 = np.percentile(samples, [75, 25])
    return 0.05 * float(q75 - q25)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; edges use the available samples only."""
    x = np.asarray(x, dtype=float)
    if window <= 1 or x.size == 0:
        return x.copy()
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.clip(idx - half, 0, x.size)
    hi = np.clip(idx - half + window, 0, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def detect_peaks(
    ts: TimeSeries,
    kind: PeakKind | str = PeakKind.MAXIMA,
    min_prominence: float | None = None,
    min_distance: int | None = None,
    smooth: int = 1,
) -> PeakList:
    """Local extrema with prominence and spacing constraints.

    ``min_distance`` defaults to ``rate / 0.6`` samples (36 breaths/min) and
    ``min_prominence`` to 5% of the interquartile range. With ``smooth > 1`` the
    extrema are located on a moving-average copy, but the returned values are
    always read from the original samples.
    """
    kind = PeakKind(kind)
    x = ts.samples
    if min_distance is None:
        min_distance = default_min_distance(ts.rate)
    if min_prominence is None:
        min_prominence = default_min_prominence(x)
    if min_distance < 1 or min_prominence < 0:
        raise SomnoError("need min_distance >= 1 and min_prominence >= 0")
    if len(x) < 3:
        return PeakList([], [], kind)
    work = moving_average(x, smooth) if smooth > 1 else x
    sign = 1.0 if kind is PeakKind.MAXIMA else -1.0
    # find_peaks treats prominence=0 as "no constraint" and still requires a
    # strict local extremum, so flat input yields nothing.
    idx, _ = sps.find_peaks(sign * work, prominence=min_prominence, distance=min_distance)
    if smooth > 1 and idx.size:
        # snap to the true extremum of the raw signal within the smoothing span
        half = smooth // 2
        snapped = []
        for i in idx:
            lo, hi = max(0, i - half), min(len(x), i + half + 1)
            snapped.append(lo + int(np.argmax(sign * x[lo:hi])))
        idx = np.unique(np.array(snapped, dtype=np.int64))
    return PeakList(idx, x[idx], kind)


def interpolate_envelope(peaks: PeakList, length: int, rate: float, t0: float = 0.0) -> TimeSeries:
    """Piecewise-linear curve through the peaks, held constant beyond the ends."""
    if len(peaks) == 0:
        raise NoKeypointsError("cannot build an envelope from an empty peak list")
    grid = np.arange(length, dtype=float)
    return TimeSeries(np.interp(grid, peaks.indices.astype(float), peaks.values), rate, t0)


def _padded_length(n: int, rate: float) -> int:
    need = max(n, int(math.ceil(rate / SPECTRAL_BIN_HZ)))
    return 1 << (need - 1).bit_length()


def power_spectrum(ts: TimeSeries, nfft: int | None = None):
    """One-sided power spectrum of the mean-removed series, zero-padded to ``nfft``."""
    x = ts.samples - ts.samples.mean()
    n = nfft or len(x)
    spec = np.fft.rfft(x, n=n)
    freqs = np.fft.rfftfreq(n, d=1.0 / ts.rate)
    return freqs, np.abs(spec) ** 2


def spectral_rate(ts: TimeSeries, band: FrequencyBand = BREATHING_BAND) -> float:
    """Dominant in-band frequency in breaths per minute.

    The spectrum is zero-padded to a bin width of at most 0.005 Hz; ties in
    the argmax resolve to the lowest frequency.
    """
    if ts.duration < 30.0 - 1e-9:
        raise TooShortError(f"rate estimation needs >= 30 s, got {ts.duration:.2f} s")
    freqs, power = power_spectrum(ts, _padded_length(len(ts), ts.rate))
    in_band = (freqs >= band.low) & (freqs <= band.high)
    if not np.any(in_band):
        raise NoSignalError("no spectral bins inside the band")
    total = float(power.sum())
    band_power = power[in_band]
    if total <= 0 or float(band_power.sum()) < 1e-12 * total:
        raise NoSignalError("no in-band power above the noise floor")
    # np.argmax returns the first (lowest-frequency) maximum
    return 60.0 * float(freqs[in_band][int(np.argmax(band_power))])
