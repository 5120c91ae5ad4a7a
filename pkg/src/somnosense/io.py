"""File interchange formats.

Binary files share one layout: a little-endian ``uint32`` byte count, a UTF-8
JSON header of that length, then a little-endian ``float32`` payload.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .core import ApneaEvent, TimeSeries
from .errors import SomnoError

_F32 = np.dtype("<f4")


def write_framed(path, header: dict, payload: np.ndarray) -> None:
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(np.ascontiguousarray(payload, dtype=_F32).tobytes())


def read_framed(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise SomnoError(f"{path}: truncated header", code="io.format")
    (n,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4 : 4 + n].decode("utf-8"))
    payload = np.frombuffer(raw, dtype=_F32, offset=4 + n)
    return header, payload


# -- TimeSeries ---------------------------------------------------------------


def write_timeseries_csv(ts: TimeSeries, path) -> None:
    """CSV ``t,value`` plus a ``<path>.json`` sidecar with rate, t0 and unit."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(ts.times, ts.samples):
            w.writerow([repr(float(t)), repr(float(v))])
    sidecar = {"rate_hz": ts.rate, "t0_s": ts.t0, "unit": ts.unit}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def read_timeseries_csv(path) -> TimeSeries:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    values = [float(r["value"]) for r in rows]
    return TimeSeries(values, meta["rate_hz"], meta["t0_s"], meta.get("unit", ""))


def write_timeseries_bin(ts: TimeSeries, path) -> None:
    write_framed(path, {"rate_hz": ts.rate, "t0_s": ts.t0, "unit": ts.unit}, ts.samples)


def read_timeseries_bin(path) -> TimeSeries:
    header, payload = read_framed(path)
    return TimeSeries(payload.astype(float), header["rate_hz"], header["t0_s"], header.get("unit", ""))


# -- events -------------------------------------------------------------------


def events_to_json(events) -> list[dict]:
    return [
        {"start_s": e.start, "end_s": e.end, "kind": e.kind.value, "confidence": e.confidence}
        for e in events
    ]


def events_from_json(items) -> list[ApneaEvent]:
    return [
        ApneaEvent(float(d["start_s"]), float(d["end_s"]), d.get("kind", "unknown"), float(d.get("confidence", 1.0)))
        for d in items
    ]


def write_events(events, path) -> None:
    Path(path).write_text(json.dumps(events_to_json(events), indent=2))


def read_events(path) -> list[ApneaEvent]:
    return events_from_json(json.loads(Path(path).read_text()))
