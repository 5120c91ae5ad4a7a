"""Command-line entry point.

    somnosense <simulate|analyze-thermal|analyze-radar|classify|evaluate|end-to-end>
               [--config run.json] [--out DIR] [--seed N]

Every run writes its artifacts plus ``manifest.json`` (resolved config, its
hash, input and output hashes, tool version) into ``--out``. Failures exit
non-zero and print a JSON error object on stderr: 2 for usage errors, 3 for
I/O errors, 4 for pipeline errors.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, classify as cls, evaluate as ev, sim
from .core import FrequencyBand, TimeSeries
from .detect import (
    DEFAULT_BETA,
    DEFAULT_ENVELOPE_WINDOW,
    DEFAULT_GUARD_S,
    DEFAULT_K,
    DEFAULT_MIN_DURATION,
    DEFAULT_THETA,
    score_table,
)
from .errors import SomnoError
from .io import read_events, read_timeseries_csv, write_events, write_timeseries_csv
from .pipeline import detect_apneas, radar_breathing, thermal_breathing, windowed_rates
from .radar import DEFAULT_WINDOW_BINS, read_adc, write_adc
from .thermal import RoiRect, read_frames, write_frames

log = logging.getLogger("somnosense")

MODES = ("simulate", "analyze-thermal", "analyze-radar", "classify", "evaluate", "end-to-end")

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PIPELINE = 4


class UsageError(Exception):
    code = "cli.usage"


class InputError(Exception):
    code = "cli.io"


def _detector_defaults():
    return {
        "theta": DEFAULT_THETA,
        "motion": True,
        "k": DEFAULT_K,
        "beta": DEFAULT_BETA,
        "guard_s": DEFAULT_GUARD_S,
        "envelope_window": DEFAULT_ENVELOPE_WINDOW,
    }


DEFAULTS = {
    "seed": None,
    "scenario": "demo",
    "inputs": {},
    "band_hz": [0.1, 0.5],
    "min_duration_s": DEFAULT_MIN_DURATION,
    "thermal": {"roi": None, "derivative_n": None, **_detector_defaults()},
    "radar": {"window_bins": DEFAULT_WINDOW_BINS, "fft_length": None, "max_range_m": None,
              "derivative_n": None, **_detector_defaults()},
    "chunk": {"chunk_s": 60.0, "per_block": 20, "block_s": 300.0, "overlap_s": 5.0},
    "match_iou": 0.3,
}

RANGES = {
    "theta": (0.0, 1.0),
    "beta": (0.0, float("inf")),
    "guard_s": (0.0, float("inf")),
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _validate(cfg: dict) -> None:
    for section in ("thermal", "radar"):
        s = cfg[section]
        for key, (lo, hi) in RANGES.items():
            if not lo < float(s[key]) < hi and not (key == "guard_s" and s[key] == 0):
                raise UsageError(f"{section}.{key}={s[key]} outside ({lo}, {hi})")
        if int(s["k"]) < 2 or int(s["k"]) % 2:
            raise UsageError(f"{section}.k must be an even integer >= 2")
        if int(s["envelope_window"]) < 1:
            raise UsageError(f"{section}.envelope_window must be >= 1")
        n = s["derivative_n"]
        if n is not None and (int(n) < 3 or int(n) % 2 == 0):
            raise UsageError(f"{section}.derivative_n must be odd and >= 3")
    if int(cfg["radar"]["window_bins"]) < 1:
        raise UsageError("radar.window_bins must be >= 1")
    lo, hi = cfg["band_hz"]
    if not 0 < lo < hi:
        raise UsageError("band_hz must satisfy 0 < low < high")


def load_config(path, seed=None) -> dict:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise InputError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
        if isinstance(raw, dict) and raw.get("tool") == "somnosense" and "config" in raw:
            raw = raw["config"]  # a previous run manifest
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS) - {"mode"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    _validate(cfg)
    return cfg


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Run:
    """Tracks the artifacts a single invocation writes."""

    def __init__(self, mode: str, cfg: dict, out: Path):
        self.mode = mode
        self.cfg = cfg
        self.out = out
        self.outputs: dict[str, str] = {}
        self.inputs: dict[str, str] = {}
        self.extra: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str, filename: str) -> Path:
        self.outputs[name] = filename
        return self.out / filename

    def input(self, key: str) -> Path:
        value = self.cfg["inputs"].get(key)
        if value is None:
            raise UsageError(f"missing required input: inputs.{key}")
        p = Path(value)
        if not p.exists():
            raise InputError(f"input inputs.{key} not found: {p}")
        self.inputs[key] = str(p)
        return p

    def finish(self) -> Path:
        manifest = {
            "tool": "somnosense",
            "version": __version__,
            "mode": self.mode,
            "config": self.cfg,
            "config_sha256": hashlib.sha256(_canonical(self.cfg).encode()).hexdigest(),
            "inputs": {k: {"path": v, "sha256": _sha256(v)} for k, v in sorted(self.inputs.items())},
            "outputs": {
                k: {"path": v, "sha256": _sha256(self.out / v)}
                for k, v in sorted(self.outputs.items())
                if (self.out / v).is_file()
            },
            **self.extra,
        }
        p = self.out / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return p


# -- helpers -----------------------------------------------------------------------


def _scenario(cfg: dict) -> sim.SimScenario:
    spec = cfg["scenario"]
    seed = cfg["seed"]
    if spec == "demo":
        # the seed also drives the demo's event schedule
        return sim.demo_scenario() if seed is None else sim.demo_scenario(seed)
    if not isinstance(spec, dict):
        raise UsageError("scenario must be \"demo\" or a scenario object")
    try:
        return sim.SimScenario.from_dict(spec if seed is None else {**spec, "seed": seed})
    except TypeError as exc:
        raise UsageError(f"scenario malformed: {exc}") from exc


def _band(cfg) -> FrequencyBand:
    return FrequencyBand(*map(float, cfg["band_hz"]))


def _detect(ts: TimeSeries, section: dict, cfg: dict):
    return detect_apneas(
        ts,
        theta=float(section["theta"]),
        motion=bool(section["motion"]),
        k=int(section["k"]),
        beta=float(section["beta"]),
        guard=float(section["guard_s"]),
        envelope_window=int(section["envelope_window"]),
        min_duration=float(cfg["min_duration_s"]),
    )


def _rate_windows(ts: TimeSeries, cfg: dict):
    c = cfg["chunk"]
    return ev.chunk_windows(ts.duration, c["chunk_s"], int(c["per_block"]), c["block_s"], t0=ts.t0)


def _write_rates(path, windows, rates):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start", "end", "bpm"])
        for (a, b), r in zip(windows, rates):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(r))])


def _read_rates(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(float(r["start"]), float(r["end"])) for r in rows], np.array([float(r["bpm"]) for r in rows])


def _write_score(path, score):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "d_norm", "masked"])
        for t, d, m in score_table(score):
            w.writerow([repr(float(t)), repr(float(d)), int(m)])


def _analyze(run: Run, name: str, ts: TimeSeries, section: dict):
    cfg = run.cfg
    write_timeseries_csv(ts, run.path(f"{name}_breathing", f"{name}_breathing.csv"))
    det = _detect(ts, section, cfg)
    _write_score(run.path(f"{name}_score", f"{name}_score.csv"), det.score)
    write_events(det.events, run.path(f"{name}_events", f"{name}_events.json"))
    windows = _rate_windows(ts, cfg)
    rates = windowed_rates(ts, windows, _band(cfg)) if windows else np.array([])
    _write_rates(run.path(f"{name}_rates", f"{name}_rates.csv"), windows, rates)
    return det, windows, rates


# -- modes ---------------------------------------------------------------------------


def do_simulate(run: Run) -> dict:
    sc = _scenario(run.cfg)
    airflow, effort, events = sim.gen_truth(sc)
    rate = sim.instantaneous_rate(sc)
    run.path("scenario", "scenario.json").write_text(json.dumps(sc.to_dict(), indent=2, sort_keys=True))
    write_timeseries_csv(airflow, run.path("truth_airflow", "truth_airflow.csv"))
    write_timeseries_csv(effort, run.path("truth_effort", "truth_effort.csv"))
    write_timeseries_csv(rate, run.path("truth_rate", "truth_rate.csv"))
    write_events(events, run.path("truth_events", "truth_events.json"))
    frames = sim.render_thermal(sc, airflow)
    write_frames(frames, run.path("thermal_frames", "thermal_frames.bin"))
    cube = sim.render_radar(sc, effort)
    write_adc(cube, run.path("radar_adc", "radar_adc.bin"))
    roi = sc.thermal.roi
    run.extra["truth"] = {
        "events": "truth_events.json",
        "thermal_frames": "thermal_frames.bin",
        "radar_adc": "radar_adc.bin",
        "nose_roi": {"row0": roi.row0, "col0": roi.col0, "height": roi.height, "width": roi.width},
    }
    return {"scenario": sc, "airflow": airflow, "effort": effort, "events": events, "rate": rate,
            "frames": frames, "cube": cube}


def _roi(cfg) -> RoiRect:
    roi = cfg["thermal"].get("roi")
    if roi is None:
        raise UsageError("missing required field: thermal.roi (nose region {row0, col0, height, width})")
    try:
        return RoiRect(**roi)
    except TypeError as exc:
        raise UsageError(f"thermal.roi malformed: {exc}") from exc


def do_analyze_thermal(run: Run, frames=None):
    cfg = run.cfg
    roi = _roi(cfg)
    if frames is None:
        frames = read_frames(run.input("frames"))
    n = cfg["thermal"]["derivative_n"]
    ts = thermal_breathing(frames, roi, None if n is None else int(n), _band(cfg))
    return _analyze(run, "thermal", ts, cfg["thermal"])


def do_analyze_radar(run: Run, cube=None):
    cfg = run.cfg
    r = cfg["radar"]
    if cube is None:
        cube = read_adc(run.input("adc"))
    n = r["derivative_n"]
    sel, ts = radar_breathing(
        cube,
        int(r["window_bins"]),
        _band(cfg),
        None if n is None else int(n),
        r["fft_length"],
        r["max_range_m"],
    )
    run.path("radar_selection", "radar_selection.json").write_text(
        json.dumps({"bin": sel.index, "snr": sel.snr, "window": list(sel.window)}, indent=2)
    )
    return _analyze(run, "radar", ts, r)


def do_classify(run: Run, thermal_events=None, radar_events=None, span=None):
    cfg = run.cfg
    if thermal_events is None:
        thermal_events = read_events(run.input("thermal_events"))
        radar_events = read_events(run.input("radar_events"))
    if span is None:
        span = cfg["inputs"].get("span_s")
        if span is None:
            ends = [e.end for e in list(thermal_events) + list(radar_events)]
            span = max(ends, default=0.0)
    rate = 30.0
    ti = cls.rasterize(thermal_events, rate, float(span))
    ri = cls.rasterize(radar_events, rate, float(span))
    events = cls.classify(ti, ri, float(cfg["min_duration_s"]))
    write_events(events, run.path("classified_events", "classified_events.json"))
    return events


def _detection_table(pred_events, truth_events, windows, overlap):
    gt = ev.chunk_labels(truth_events, windows, overlap)
    pred = ev.chunk_labels(pred_events, windows, overlap)
    m = ev.detection_metrics(pred, gt)
    return {
        "Accuracy": m["accuracy"],
        "Precision": m["precision"],
        "Recall": m["recall"],
        "F1 Score": m["f1"],
        "Intra-Class Correlation": m["icc"],
        "chunks": len(windows),
    }


def _event_table(pred, truth, iou):
    m = ev.event_matching(pred, truth, iou)
    return {k: m[k] for k in ("TP", "FP", "FN", "precision", "recall")}


def do_evaluate(run: Run, truth_events=None, predictions=None, rates=None, truth_rate=None, duration=None):
    """Build the metrics report from event lists and (optionally) rate tables."""
    cfg = run.cfg
    inputs = cfg["inputs"]
    if truth_events is None:
        truth_events = read_events(run.input("truth_events"))
        predictions = {}
        for name in ("thermal", "radar", "classified"):
            if inputs.get(f"{name}_events"):
                predictions[name] = read_events(run.input(f"{name}_events"))
        if not predictions:
            raise UsageError("evaluate needs at least one of inputs.thermal_events / radar_events / classified_events")
        rates = {}
        for name in ("thermal", "radar"):
            if inputs.get(f"{name}_rates"):
                rates[name] = _read_rates(run.input(f"{name}_rates"))
        if rates:
            truth_rate = read_timeseries_csv(run.input("truth_rate"))
        duration = inputs.get("duration_s")
    if duration is None:
        duration = truth_rate.duration if truth_rate is not None else max(
            [e.end for evs in [truth_events, *predictions.values()] for e in evs], default=0.0
        )
    c = cfg["chunk"]
    windows = ev.chunk_windows(float(duration), c["chunk_s"], int(c["per_block"]), c["block_s"])
    csa_truth = [e for e in truth_events if e.kind.value == "CSA"]
    report: dict = {"breathing_rate": {}, "apnea_detection": {}, "event_level": {}}
    for name, (wins, est) in (rates or {}).items():
        gt = np.array([sim.window_rate(truth_rate, a, b) for a, b in wins])
        report["breathing_rate"][name] = ev.rr_metrics(est, gt)
        if len(est) >= 2:
            ba = ev.bland_altman(est, gt)
            ev.write_bland_altman_csv(ba, run.path(f"bland_altman_{name}", f"bland_altman_{name}.csv"))
            report["breathing_rate"][name]["bland_altman"] = {
                "mean_diff": ba.mean_diff, "sd_diff": ba.sd_diff, "loa_low": ba.loa_low, "loa_high": ba.loa_high,
            }
    for name, pred in predictions.items():
        # the radar senses effort, so its own reference is the CSA subset
        ref = csa_truth if name == "radar" else truth_events
        if len(windows) >= 2:
            report["apnea_detection"][name] = _detection_table(pred, ref, windows, c["overlap_s"])
        report["event_level"][name] = _event_table(pred, ref, float(cfg["match_iou"]))
    if "classified" in predictions:
        m = ev.event_matching(predictions["classified"], truth_events, float(cfg["match_iou"]))
        correct = sum(predictions["classified"][i].kind == truth_events[j].kind for i, j, _ in m["matched"])
        report["classification"] = {
            "matched": m["TP"],
            "correct": correct,
            "accuracy": correct / m["TP"] if m["TP"] else None,
        }
    ev.write_report(report, run.path("metrics", "metrics.json"))
    return report


def do_end_to_end(run: Run):
    s = do_simulate(run)
    sc = s["scenario"]
    cfg = run.cfg
    if cfg["thermal"].get("roi") is None:
        roi = sc.thermal.roi
        cfg["thermal"]["roi"] = {"row0": roi.row0, "col0": roi.col0, "height": roi.height, "width": roi.width}
    tdet, twin, trates = do_analyze_thermal(run, s["frames"])
    rdet, rwin, rrates = do_analyze_radar(run, s["cube"])
    classified = do_classify(run, tdet.events, rdet.events, sc.duration)
    return do_evaluate(
        run,
        truth_events=s["events"],
        predictions={"thermal": tdet.events, "radar": rdet.events, "classified": classified},
        rates={"thermal": (twin, trates), "radar": (rwin, rrates)},
        truth_rate=s["rate"],
        duration=sc.duration,
    )


HANDLERS = {
    "simulate": do_simulate,
    "analyze-thermal": do_analyze_thermal,
    "analyze-radar": do_analyze_radar,
    "classify": do_classify,
    "evaluate": do_evaluate,
    "end-to-end": do_end_to_end,
}


def run(mode: str, config_path=None, out="out", seed=None) -> int:
    """Execute one mode; returns the process exit status."""
    try:
        if mode not in MODES:
            raise UsageError(f"unknown mode {mode!r}")
        cfg = load_config(config_path, seed)
        if cfg.get("mode", mode) != mode:
            raise UsageError(f"config mode {cfg['mode']!r} does not match subcommand {mode!r}")
        cfg["mode"] = mode
        r = Run(mode, cfg, Path(out))
        HANDLERS[mode](r)
        r.finish()
        return 0
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc.code, str(exc))
    except (InputError, OSError) as exc:
        return _fail(EXIT_IO, getattr(exc, "code", "cli.io"), str(exc))
    except SomnoError as exc:
        return _fail(EXIT_PIPELINE, exc.code, str(exc))


def _fail(status: int, code: str, message: str) -> int:
    print(json.dumps({"error": code, "message": message, "exit_status": status}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="somnosense", description=__doc__.splitlines()[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="run configuration (JSON); a previous manifest.json also works")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, help="override the simulator seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args.mode, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
