"""Per-modality pipelines from raw sensor data to breathing waveforms and apnoea events."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BREATHING_BAND, FrequencyBand, PeakKind, TimeSeries, bandpass, spectral_rate
from .detect import (
    DEFAULT_BETA,
    DEFAULT_ENVELOPE_WINDOW,
    DEFAULT_GUARD_S,
    DEFAULT_K,
    DEFAULT_MIN_DURATION,
    DEFAULT_THETA,
    ApneaScore,
    EnvelopePair,
    MotionMask,
    apnea_score,
    detect_events,
    envelopes,
    keypoints,
    motion_filter,
)
from .radar import DEFAULT_WINDOW_BINS, AdcCube, BinSelection, range_matrix, select_breathing_bin
from .thermal import FrameSequence, RoiRect, motion_compensated_derivative, roi_mean_series


def thermal_breathing(
    seq: FrameSequence,
    roi: RoiRect,
    n: int | None = None,
    band: FrequencyBand = BREATHING_BAND,
) -> TimeSeries:
    """ROI average -> motion-compensated derivative -> zero-phase band-pass."""
    x = roi_mean_series(seq, roi)
    return bandpass(motion_compensated_derivative(x, n), band)


def radar_breathing(
    cube: AdcCube,
    window: int = DEFAULT_WINDOW_BINS,
    band: FrequencyBand = BREATHING_BAND,
    n: int | None = None,
    fft_length: int | None = None,
    max_range: float | None = None,
) -> tuple[BinSelection, TimeSeries]:
    """Range FFT -> SNR-weighted bin selection -> derivative -> band-pass."""
    rm = range_matrix(cube, fft_length, max_range)
    sel, y = select_breathing_bin(rm, window, band, derivative_n=n)
    return sel, bandpass(y, band)


def windowed_rates(ts: TimeSeries, windows, band: FrequencyBand = BREATHING_BAND) -> np.ndarray:
    """Spectral rate (BPM) of each ``(start, end)`` window of ``ts``."""
    return np.array([spectral_rate(ts.window(a, b), band) for a, b in windows])


@dataclass(frozen=True, eq=False)
class Detection:
    events: list
    score: ApneaScore
    mask: MotionMask
    envelopes: EnvelopePair


def detect_apneas(
    ts: TimeSeries,
    theta: float = DEFAULT_THETA,
    motion: bool = True,
    k: int = DEFAULT_K,
    beta: float = DEFAULT_BETA,
    guard: float = DEFAULT_GUARD_S,
    envelope_window: int = DEFAULT_ENVELOPE_WINDOW,
    min_duration: float = DEFAULT_MIN_DURATION,
) -> Detection:
    """Full single-modality detector on a processed breathing waveform."""
    maxima = keypoints(ts, PeakKind.MAXIMA)
    minima = keypoints(ts, PeakKind.MINIMA)
    mask = MotionMask.empty(len(ts), ts.rate, ts.t0)
    if motion:
        for kind in ("maxima", "minima"):
            peaks = maxima if kind == "maxima" else minima
            if len(peaks) <= k:
                continue
            kept, m = motion_filter(peaks, k, beta, guard, len(ts), ts.rate, ts.t0)
            mask = mask | m
            if kind == "maxima":
                maxima = kept
            else:
                minima = kept
    env = envelopes(ts, envelope_window, maxima, minima)
    score = apnea_score(env, mask, theta)
    return Detection(detect_events(score, theta, min_duration), score, mask, env)
