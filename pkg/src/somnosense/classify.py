"""OSA/CSA labelling by fusing thermal (airflow) and radar (effort) detections.

Per sample, CSA = thermal AND radar and OSA = thermal AND NOT radar. Runs
shorter than the minimum duration are discarded and each thermal apnoea
becomes one event, except that a thermal apnoea containing long runs of both
kinds (a mixed apnoea) is split into one event per long run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import ApneaEvent, EventKind, check_event_list
from .detect import _runs
from .errors import AlignmentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BinaryIndicator:
    """Boolean apnoea flag per sample; sample ``i`` sits at ``t0 + i / rate``."""

    values: np.ndarray
    rate: float
    t0: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=bool)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


def rasterize(events, rate: float, span: float, t0: float = 0.0) -> BinaryIndicator:
    """Sample ``i`` is true iff ``start <= t0 + i / rate < end`` for some event."""
    events = check_event_list(events)
    n = int(round(span * rate))
    out = np.zeros(n, dtype=bool)
    for e in events:
        if e.start < t0 or e.end > t0 + span:
            logger.warning("event [%g, %g) extends beyond [%g, %g); clipping", e.start, e.end, t0, t0 + span)
        a = max(0, int(math.ceil((e.start - t0) * rate - 1e-9)))
        b = min(n, int(math.ceil((e.end - t0) * rate - 1e-9)))
        out[a:b] = True
    return BinaryIndicator(out, rate, t0)


def _check_aligned(a: BinaryIndicator, b: BinaryIndicator):
    if len(a) != len(b) or a.rate != b.rate or a.t0 != b.t0:
        raise AlignmentError(
            "thermal and radar indicators must share rate, length and t0", code="apnea-classify.alignment"
        )


def fuse(thermal: BinaryIndicator, radar: BinaryIndicator):
    """Per-sample ``(csa, osa)`` flags; the two are mutually exclusive by construction."""
    _check_aligned(thermal, radar)
    csa = thermal.values & radar.values
    osa = thermal.values & ~radar.values
    return csa, osa


def classify(thermal: BinaryIndicator, radar: BinaryIndicator, min_duration: float = 10.0) -> list[ApneaEvent]:
    """Label thermal apnoeas as OSA or CSA."""
    csa, _ = fuse(thermal, radar)
    rate, t0 = thermal.rate, thermal.t0
    min_len = min_duration * rate - 1e-9
    events = []
    for a, b in _runs(thermal.values):
        if b - a < min_len:
            continue
        # alternating kind runs inside the thermal apnoea
        kind_runs = [(a + s, a + e, EventKind.CSA) for s, e in _runs(csa[a:b])]
        kind_runs += [(a + s, a + e, EventKind.OSA) for s, e in _runs(~csa[a:b])]
        long_runs = sorted(r for r in kind_runs if r[1] - r[0] >= min_len)
        if len({k for _, _, k in long_runs}) > 1:
            for s, e, k in long_runs:
                events.append(ApneaEvent(t0 + s / rate, t0 + e / rate, k))
            continue
        longest = max(r[1] - r[0] for r in kind_runs)
        kinds = {k for s, e, k in kind_runs if e - s == longest}
        kind = EventKind.CSA if EventKind.CSA in kinds else EventKind.OSA
        events.append(ApneaEvent(t0 + a / rate, t0 + b / rate, kind))
    return events
