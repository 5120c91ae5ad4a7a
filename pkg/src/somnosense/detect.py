"""Envelope-based apnea detection for a single modality.

The pipeline is: keypoints (local extrema) -> KNN peak motion filter ->
linearly interpolated upper/lower envelopes -> mean-normalised envelope
difference -> thresholded event extraction under the 10 s duration rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ApneaEvent,
    EventKind,
    PeakKind,
    PeakList,
    TimeSeries,
    detect_peaks,
    interpolate_envelope,
    moving_average,
)
from .errors import InsufficientPeaksError, NoBreathingStructureError, NoValidDataError, SomnoError

DEFAULT_K = 10
DEFAULT_BETA = 2.5
DEFAULT_GUARD_S = 2.0
DEFAULT_ENVELOPE_WINDOW = 23
DEFAULT_THETA = 0.5
DEFAULT_MIN_DURATION = 10.0
MERGE_GAP_S = 1.0
BELOW_FRACTION = 0.9
TAINT_LEVEL = 1.0
GAP_FILL_FACTOR = 2.0


@dataclass(frozen=True, eq=False)
class MotionMask:
    """Per-sample motion flags aligned with a source series."""

    flags: np.ndarray
    rate: float
    t0: float = 0.0
    k: int = DEFAULT_K
    beta: float = DEFAULT_BETA
    guard: float = DEFAULT_GUARD_S

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool)
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @classmethod
    def empty(cls, length: int, rate: float, t0: float = 0.0) -> "MotionMask":
        return cls(np.zeros(length, dtype=bool), rate, t0)

    def __or__(self, other: "MotionMask") -> "MotionMask":
        return MotionMask(self.flags | other.flags, self.rate, self.t0, self.k, self.beta, self.guard)

    def intervals(self) -> list[tuple[float, float]]:
        return [(self.t0 + a / self.rate, self.t0 + b / self.rate) for a, b in _runs(self.flags)]


@dataclass(frozen=True, eq=False)
class EnvelopePair:
    upper: TimeSeries
    lower: TimeSeries
    window: int = DEFAULT_ENVELOPE_WINDOW


@dataclass(frozen=True, eq=False)
class ApneaScore:
    """Normalised envelope difference plus the validity mask used for events."""

    d_norm: TimeSeries
    masked: np.ndarray
    mean: float
    threshold: float = DEFAULT_THETA


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index runs where ``flags`` is true."""
    f = np.concatenate(([False], np.asarray(flags, dtype=bool), [False]))
    edges = np.flatnonzero(f[1:] != f[:-1])
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def keypoint_distance_ratio(
    values: np.ndarray, k: int, form: str = "neighbors", reference: str = "amplitude"
) -> np.ndarray:
    """Per-keypoint KNN distance statistic divided by a global scale.

    ``form="neighbors"`` averages ``|s[i] - s[j]|`` over the K nearest
    keypoints in time (K/2 on each side). ``form="steps"`` averages the
    consecutive steps ``|s[j+1] - s[j]|`` for ``j = i - K/2 .. i - 1 + K/2``.
    Both divide the sum by K, so windows clipped at the ends shrink.

    ``reference="amplitude"`` divides by the median keypoint magnitude and
    ``reference="step"`` by the median consecutive step.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return np.zeros(n)
    tiny = 1e-9 * float(np.max(np.abs(values)))
    steps = np.abs(np.diff(values))
    # rounding-level steps count as zero so identical keypoints stay unflagged
    steps = np.where(steps <= tiny, 0.0, steps)
    half = k // 2
    if form == "neighbors":
        local = np.zeros(n)
        for off in range(1, half + 1):
            d = np.abs(values[off:] - values[:-off])
            d = np.where(d <= tiny, 0.0, d)
            local[off:] += d
            local[:-off] += d
        local /= k
    elif form == "steps":
        csum = np.concatenate(([0.0], np.cumsum(steps)))
        i = np.arange(n)
        lo = np.clip(i - half, 0, steps.size)
        hi = np.clip(i + half, 0, steps.size)
        local = (csum[hi] - csum[lo]) / k
    else:
        raise SomnoError(f"unknown form {form!r}")
    if reference == "amplitude":
        ref = float(np.median(np.abs(values)))
    elif reference == "step":
        ref = float(np.median(steps))
    else:
        raise SomnoError(f"unknown reference {reference!r}")
    if ref == 0.0:
        return np.where(local > 0, np.inf, 0.0)
    return local / ref


def motion_filter(
    peaks: PeakList,
    k: int = DEFAULT_K,
    beta: float = DEFAULT_BETA,
    guard: float = DEFAULT_GUARD_S,
    length: int | None = None,
    rate: float = 1.0,
    t0: float = 0.0,
    form: str = "neighbors",
    reference: str = "amplitude",
) -> tuple[PeakList, MotionMask]:
    """Drop keypoints whose local step size is unusually large.

    A keypoint is flagged when its mean distance to its K nearest keypoints
    exceeds ``beta`` times the median keypoint magnitude (see
    :func:`keypoint_distance_ratio` for the alternatives), so the test is
    scale free.
    The mask covers ``guard`` seconds on either side of each flagged keypoint.
    """
    if k < 2 or k % 2:
        raise SomnoError(f"K must be even and >= 2, got {k}")
    if len(peaks) < k + 1:
        raise InsufficientPeaksError(f"motion filter needs more than K={k} keypoints, got {len(peaks)}")
    if length is None:
        length = int(peaks.indices[-1]) + 1
    ratio = keypoint_distance_ratio(peaks.values, k, form, reference)
    flagged = ratio > beta
    mask = np.zeros(length, dtype=bool)
    g = int(round(guard * rate))
    for idx in peaks.indices[flagged]:
        mask[max(0, idx - g) : min(length, idx + g + 1)] = True
    return peaks.subset(~flagged), MotionMask(mask, rate, t0, k, beta, guard)


def fill_keypoint_gaps(ts: TimeSeries, peaks: PeakList, factor: float = GAP_FILL_FACTOR) -> PeakList:
    """Insert extra keypoints where consecutive keypoints are far apart.

    Extremum detection misses the tiny oscillations of an apnoeic stretch, and
    a straight line across the gap would hide the amplitude drop. Any gap
    longer than ``factor`` times the median spacing is split into
    median-spacing segments and each segment contributes its raw extremum.
    Leading and trailing gaps are treated the same way.
    """
    if len(peaks) < 2:
        return peaks
    x = ts.samples
    spacing = float(np.median(np.diff(peaks.indices)))
    if spacing < 1:
        return peaks
    limit = factor * spacing
    pick = np.argmax if peaks.kind is PeakKind.MAXIMA else np.argmin
    bounds = np.concatenate(([-1], peaks.indices, [len(x)]))
    extra = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a <= limit:
            continue
        nseg = int(round((b - a) / spacing))
        step = (b - a) / nseg
        for j in range(1, nseg):
            s0 = max(0, int(round(a + (j - 0.5) * step)))
            s1 = min(len(x), int(round(a + (j + 0.5) * step)))
            if s1 > s0:
                extra.append(s0 + int(pick(x[s0:s1])))
    if not extra:
        return peaks
    idx = np.union1d(peaks.indices, np.array(extra, dtype=np.int64))
    return PeakList(idx, x[idx], peaks.kind)


def keypoints(ts: TimeSeries, kind, fill_gaps: bool = True, **peak_kw) -> PeakList:
    peaks = detect_peaks(ts, kind, **peak_kw)
    return fill_keypoint_gaps(ts, peaks) if fill_gaps else peaks


def envelopes(
    ts: TimeSeries,
    window: int = DEFAULT_ENVELOPE_WINDOW,
    maxima: PeakList | None = None,
    minima: PeakList | None = None,
) -> EnvelopePair:
    """Upper and lower envelopes from maxima and minima keypoints.

    Each envelope is linearly interpolated through its keypoints, smoothed with
    a centred moving average of ``window`` samples, and the pair is reordered
    pointwise wherever smoothing made them cross.
    """
    if maxima is None:
        maxima = keypoints(ts, PeakKind.MAXIMA)
    if minima is None:
        minima = keypoints(ts, PeakKind.MINIMA)
    if len(maxima) < 2 or len(minima) < 2:
        raise NoBreathingStructureError(
            f"need >= 2 maxima and >= 2 minima, got {len(maxima)} and {len(minima)}"
        )
    n = len(ts)
    up = moving_average(interpolate_envelope(maxima, n, ts.rate).samples, window)
    lo = moving_average(interpolate_envelope(minima, n, ts.rate).samples, window)
    upper, lower = np.maximum(up, lo), np.minimum(up, lo)
    return EnvelopePair(ts.replace(upper), ts.replace(lower), window)


def apnea_score(env: EnvelopePair, mask: MotionMask | None = None, threshold: float = DEFAULT_THETA) -> ApneaScore:
    """Envelope difference divided by its mean over unmasked samples."""
    d = env.upper.samples - env.lower.samples
    masked = np.zeros(d.size, dtype=bool) if mask is None else np.asarray(mask.flags, dtype=bool)
    if masked.size != d.size:
        raise SomnoError("motion mask length does not match the envelopes")
    valid = ~masked
    if not valid.any():
        raise NoValidDataError("every sample is masked")
    mean = float(d[valid].mean())
    if mean <= 0:
        raise NoValidDataError("envelope difference is zero everywhere")
    return ApneaScore(env.upper.replace(d / mean), masked, mean, threshold)


def motion_tainted(score: ApneaScore, level: float = TAINT_LEVEL) -> np.ndarray:
    """Masked samples grown to the full below-``level`` runs they touch."""
    masked = np.asarray(score.masked, dtype=bool)
    out = masked.copy()
    if not masked.any():
        return out
    for a, b in _runs(score.d_norm.samples < level):
        if masked[a:b].any():
            out[a:b] = True
    return out


def detect_events(
    score: ApneaScore,
    threshold: float | None = None,
    min_duration: float = DEFAULT_MIN_DURATION,
    merge_gap: float = MERGE_GAP_S,
) -> list[ApneaEvent]:
    """Intervals where the normalised score stays below ``threshold``.

    Below-threshold runs separated by less than ``merge_gap`` seconds are
    merged; a merged interval becomes an event when at least 90% of its
    samples are below threshold, it lasts ``min_duration`` or longer and it
    does not touch a motion-tainted stretch. Tainted stretches are the
    below-mean (``d_norm < 1``) runs that contain a masked sample, plus the
    masked samples themselves; they do not depend on ``threshold``, so
    lowering it never brings back an event that masking removed.
    """
    theta = score.threshold if threshold is None else threshold
    if not 0 < theta < 1:
        raise SomnoError(f"threshold must lie in (0, 1), got {theta}")
    ts = score.d_norm
    x = ts.samples
    below = x < theta
    gap = int(math.ceil(merge_gap * ts.rate))
    merged = []
    for a, b in _runs(below):
        if merged and a - merged[-1][1] < gap:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    tainted = motion_tainted(score)
    events = []
    for a, b in merged:
        if (b - a) / ts.rate < min_duration - 1e-9:
            continue
        if below[a:b].mean() < BELOW_FRACTION or tainted[a:b].any():
            continue
        conf = float(np.clip(1.0 - x[a:b].mean(), 0.0, 1.0))
        events.append(ApneaEvent(ts.t0 + a / ts.rate, ts.t0 + b / ts.rate, EventKind.UNKNOWN, conf))
    return events


def score_table(score: ApneaScore):
    """Rows ``(t, d_norm, masked)`` for the per-sample score CSV."""
    return zip(score.d_norm.times, score.d_norm.samples, score.masked)
