import json
import struct

import numpy as np
import pytest

from somnosense.core import ApneaEvent, EventKind, TimeSeries
from somnosense.io import (
    read_events,
    read_framed,
    read_timeseries_bin,
    read_timeseries_csv,
    write_events,
    write_timeseries_bin,
    write_timeseries_csv,
)
from somnosense.radar import AdcCube, ChirpConfig, read_adc, write_adc
from somnosense.thermal import FrameSequence, read_frames, write_frames


def test_timeseries_csv_roundtrip(tmp_path, rng):
    ts = TimeSeries(rng.normal(size=50), 30, t0=1.5, unit="K")
    p = tmp_path / "x.csv"
    write_timeseries_csv(ts, p)
    assert p.read_text().splitlines()[0] == "t,value"
    assert json.loads((tmp_path / "x.csv.json").read_text()) == {"rate_hz": 30.0, "t0_s": 1.5, "unit": "K"}
    back = read_timeseries_csv(p)
    np.testing.assert_array_equal(back.samples, ts.samples)
    assert (back.rate, back.t0, back.unit) == (30.0, 1.5, "K")


def test_timeseries_bin_roundtrip(tmp_path):
    ts = TimeSeries(np.arange(10.0), 12.5, t0=2.0, unit="a.u.")
    write_timeseries_bin(ts, tmp_path / "x.bin")
    back = read_timeseries_bin(tmp_path / "x.bin")
    np.testing.assert_array_equal(back.samples, ts.samples)
    assert (back.rate, back.t0, back.unit) == (12.5, 2.0, "a.u.")


def test_framed_layout(tmp_path):
    seq = FrameSequence(np.arange(24, dtype=np.float32).reshape(2, 3, 4), 30.0, 0.5)
    write_frames(seq, tmp_path / "f.bin")
    raw = (tmp_path / "f.bin").read_bytes()
    (n,) = struct.unpack_from("<I", raw)
    header = json.loads(raw[4 : 4 + n])
    assert header == {"rate_hz": 30.0, "t0_s": 0.5, "height": 3, "width": 4, "count": 2}
    assert len(raw) == 4 + n + 24 * 4
    back = read_frames(tmp_path / "f.bin")
    np.testing.assert_array_equal(back.frames, seq.frames)


def test_adc_roundtrip(tmp_path, rng):
    cfg = ChirpConfig(adc_rate=64 / 50e-6, samples_per_chirp=64)
    s = (rng.normal(size=(5, 64)) + 1j * rng.normal(size=(5, 64))).astype(np.complex64)
    write_adc(AdcCube(s, cfg), tmp_path / "a.bin")
    header, payload = read_framed(tmp_path / "a.bin")
    assert set(header) == {"f_c_hz", "slope_hz_per_s", "t_c_s", "adc_rate_hz", "samples_per_chirp", "chirp_rate_hz", "chirps"}
    assert payload[0] == s[0, 0].real and payload[1] == s[0, 0].imag
    back = read_adc(tmp_path / "a.bin")
    assert back.config == cfg
    np.testing.assert_array_equal(back.samples, s)


def test_events_roundtrip(tmp_path):
    events = [ApneaEvent(1.0, 12.5, EventKind.OSA, 0.8), ApneaEvent(20.0, 31.0, EventKind.CSA, 1.0)]
    write_events(events, tmp_path / "e.json")
    data = json.loads((tmp_path / "e.json").read_text())
    assert data[0] == {"start_s": 1.0, "end_s": 12.5, "kind": "OSA", "confidence": 0.8}
    back = read_events(tmp_path / "e.json")
    assert [(e.start, e.end, e.kind, e.confidence) for e in back] == [
        (e.start, e.end, e.kind, e.confidence) for e in events
    ]


def test_truncated(tmp_path):
    from somnosense.errors import SomnoError

    (tmp_path / "bad.bin").write_bytes(b"\x01")
    with pytest.raises(SomnoError):
        read_framed(tmp_path / "bad.bin")
