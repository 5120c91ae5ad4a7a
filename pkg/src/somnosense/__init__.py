"""Contactless sleep-apnea screening from thermal video and FMCW radar."""

__version__ = "0.1.0"

from .core import (
    BREATHING_BAND,
    ApneaEvent,
    EventKind,
    FrequencyBand,
    PeakKind,
    PeakList,
    TimeSeries,
    bandpass,
    detect_peaks,
    interpolate_envelope,
    spectral_rate,
)
from .errors import SomnoError

__all__ = [
    "BREATHING_BAND",
    "ApneaEvent",
    "EventKind",
    "FrequencyBand",
    "PeakKind",
    "PeakList",
    "SomnoError",
    "TimeSeries",
    "bandpass",
    "detect_peaks",
    "interpolate_envelope",
    "spectral_rate",
    "__version__",
]
