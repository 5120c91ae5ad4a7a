"""Synthetic sleep-lab recordings with known ground truth.

A :class:`SimScenario` fully describes a recording. :func:`gen_truth` builds
the airflow and respiratory-effort waveforms with injected apnoeas, and the
``render_*`` functions turn them into thermal frames and raw FMCW ADC
samples. Every random draw comes from streams spawned off the scenario seed,
so outputs are bit-reproducible and independent of rendering order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ApneaEvent, EventKind, TimeSeries
from .errors import ScenarioError
from .radar import SPEED_OF_LIGHT, AdcCube, ChirpConfig
from .thermal import FrameSequence, RadiometricParams, RoiRect, radiant_exitance

TRUTH_RATE = 30.0


@dataclass(frozen=True)
class BreathingProfile:
    rate: float = 15.0  # breaths per minute
    rate_jitter: float = 0.5  # BPM std, drawn per breath
    amplitude: float = 1.0
    amplitude_jitter: float = 0.1  # fractional std, drawn per breath
    shape: float = 0.3  # 0 = sinusoid, 1 = short inhale / long exhale

    def __post_init__(self):
        if not 4 < self.rate < 60:
            raise ScenarioError(f"breathing rate {self.rate} outside (4, 60) BPM")
        if self.amplitude <= 0:
            raise ScenarioError("amplitude must be positive")
        if self.rate_jitter < 0 or self.amplitude_jitter < 0:
            raise ScenarioError("jitter must be non-negative")
        if not 0 <= self.shape <= 1:
            raise ScenarioError("shape must lie in [0, 1]")


@dataclass(frozen=True)
class ApneaSpec:
    """One injected apnoea. ``effort_attenuation`` below zero means increased effort."""

    start: float
    duration: float
    kind: str = "CSA"
    airflow_attenuation: float = 0.95
    effort_attenuation: float | None = None
    ramp: float = 0.5

    def __post_init__(self):
        kind = EventKind(self.kind)
        if kind is EventKind.UNKNOWN:
            raise ScenarioError("apnoea kind must be OSA or CSA")
        object.__setattr__(self, "kind", kind.value)
        if self.effort_attenuation is None:
            object.__setattr__(self, "effort_attenuation", 0.95 if kind is EventKind.CSA else 0.1)
        if self.duration < 10:
            raise ScenarioError(f"apnoea duration {self.duration} s is below 10 s")
        if not 0.9 <= self.airflow_attenuation <= 1.0:
            raise ScenarioError("airflow attenuation must be >= 0.9")
        eff = self.effort_attenuation
        if kind is EventKind.CSA and not 0.9 <= eff <= 1.0:
            raise ScenarioError("CSA effort attenuation must be >= 0.9")
        if kind is EventKind.OSA and not -1.0 <= eff <= 0.3:
            raise ScenarioError("OSA effort attenuation must be <= 0.3")
        if self.ramp < 0 or self.ramp > self.duration / 2:
            raise ScenarioError("ramp must lie in [0, duration / 2]")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class MotionArtifactSpec:
    """Transient body movements.

    Each movement is a raised-cosine excursion of ``magnitude`` breathing
    amplitudes lasting ``duration`` seconds. ``dropout`` seconds after it the
    affected sensor loses the breathing modulation (nose out of view, body
    repositioned).
    """

    times: tuple = ()
    magnitude: float = 10.0
    duration: float = 1.0
    modalities: str = "both"
    dropout: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if self.magnitude <= 0 or self.duration <= 0 or self.dropout < 0:
            raise ScenarioError("motion magnitude and duration must be positive")
        if self.modalities not in ("thermal", "radar", "both"):
            raise ScenarioError(f"unknown modality {self.modalities!r}")

    def affects(self, modality: str) -> bool:
        return self.modalities in (modality, "both")


@dataclass(frozen=True)
class ThermalSimConfig:
    height: int = 64
    width: int = 80
    roi: RoiRect = RoiRect(28, 34, 8, 12)
    base_temp: float = 307.0  # K, skin below the nostrils
    swing: float = 0.5  # K per unit normalised airflow
    background_temp: float = 296.0
    emissivity: float = 0.98
    noise_std: float = 0.5  # W m^-2 per pixel
    calibration_steps: tuple = ()  # (time_s, fraction of nose exitance)

    def __post_init__(self):
        roi = self.roi if isinstance(self.roi, RoiRect) else RoiRect(**self.roi)
        object.__setattr__(self, "roi", roi)
        object.__setattr__(self, "calibration_steps", tuple(tuple(map(float, s)) for s in self.calibration_steps))
        if not roi.fits(self.height, self.width):
            raise ScenarioError("nose ROI does not fit inside the frame")
        if self.noise_std < 0 or self.swing < 0:
            raise ScenarioError("noise_std and swing must be non-negative")


@dataclass(frozen=True)
class RadarSimConfig:
    chirp: ChirpConfig = ChirpConfig()
    target_range: float = 1.0
    target_amplitude: float = 1.0
    displacement_scale: float = 1e-3  # m per unit normalised effort
    clutter: tuple = ()  # (range_m, amplitude)
    noise_std: float = 0.05  # complex noise std per ADC sample
    motion_form: str = "spike"  # "spike" (range excursion) or "wrap" (random phase burst)

    def __post_init__(self):
        chirp = self.chirp if isinstance(self.chirp, ChirpConfig) else ChirpConfig(**self.chirp)
        object.__setattr__(self, "chirp", chirp)
        object.__setattr__(self, "clutter", tuple(tuple(map(float, c)) for c in self.clutter))
        if self.target_range <= 0 or self.noise_std < 0:
            raise ScenarioError("invalid radar target or noise")
        if self.motion_form not in ("spike", "wrap"):
            raise ScenarioError(f"unknown radar motion form {self.motion_form!r}")
        for r, _ in self.clutter:
            if not 0 < r < chirp.max_range():
                raise ScenarioError(f"clutter at {r} m is outside the unambiguous range")


@dataclass(frozen=True)
class SimScenario:
    duration: float = 300.0
    profile: BreathingProfile = BreathingProfile()
    apneas: tuple = ()
    motions: tuple = ()
    thermal: ThermalSimConfig = ThermalSimConfig()
    radar: RadarSimConfig = RadarSimConfig()
    seed: int = 0

    def __post_init__(self):
        conv = [
            ("profile", BreathingProfile),
            ("thermal", ThermalSimConfig),
            ("radar", RadarSimConfig),
        ]
        for name, cls in conv:
            val = getattr(self, name)
            if isinstance(val, dict):
                object.__setattr__(self, name, cls(**val))
        apneas = tuple(a if isinstance(a, ApneaSpec) else ApneaSpec(**a) for a in self.apneas)
        motions = tuple(m if isinstance(m, MotionArtifactSpec) else MotionArtifactSpec(**m) for m in self.motions)
        apneas = tuple(sorted(apneas, key=lambda a: a.start))
        object.__setattr__(self, "apneas", apneas)
        object.__setattr__(self, "motions", motions)
        object.__setattr__(self, "seed", int(self.seed))
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        for a, b in zip(apneas, apneas[1:]):
            if b.start < a.end:
                raise ScenarioError(f"apnoeas overlap at {a.start} s and {b.start} s")
        for a in apneas:
            if a.start < 0 or a.end > self.duration:
                raise ScenarioError(f"apnoea at {a.start} s falls outside the recording")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimScenario":
        return cls(**d)

    @property
    def samples(self) -> int:
        return int(round(self.duration * TRUTH_RATE))


def _streams(seed: int):
    """Independent generators for truth, thermal and radar rendering."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def _raised_cosine_step(t, edge, width):
    """0 before ``edge - width/2``, 1 after ``edge + width/2``, raised cosine between."""
    if width <= 0:
        return (t >= edge).astype(float)
    u = np.clip((t - edge) / width + 0.5, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * u)


def _bump(t, start, duration):
    """Raised-cosine pulse of unit height over ``[start, start + duration]``."""
    u = (t - start) / duration
    out = 0.5 - 0.5 * np.cos(2 * np.pi * np.clip(u, 0, 1))
    return np.where((u >= 0) & (u <= 1), out, 0.0)


def breath_waveform(cycle_frac, shape):
    """One breath per unit of ``cycle_frac``: raised-cosine inhale then exhale.

    The inhale occupies ``0.5 - 0.2 * shape`` of the cycle, so ``shape=0`` is
    a pure (negative) cosine and larger values skew toward a long expiration.
    """
    p = 0.5 - 0.2 * shape
    u = np.mod(cycle_frac, 1.0)
    return np.where(u < p, -np.cos(np.pi * u / p), np.cos(np.pi * (u - p) / (1 - p)))


def _breath_phase(scenario: SimScenario, rng):
    """Continuous breath phase (in cycles) and per-sample instantaneous rate."""
    prof = scenario.profile
    n = scenario.samples
    t = np.arange(n) / TRUTH_RATE
    onsets, periods = [], []
    clock = -rng.uniform(0, 60.0 / prof.rate)
    while clock < scenario.duration:
        r = float(np.clip(prof.rate + prof.rate_jitter * rng.standard_normal(), 4.5, 59.0))
        onsets.append(clock)
        periods.append(60.0 / r)
        clock += 60.0 / r
    onsets = np.array(onsets)
    periods = np.array(periods)
    idx = np.searchsorted(onsets, t, side="right") - 1
    phase = idx + (t - onsets[idx]) / periods[idx]
    gains = np.maximum(0.2, 1.0 + prof.amplitude_jitter * rng.standard_normal(len(onsets)))
    mids = onsets + periods / 2
    amp = prof.amplitude * np.interp(t, mids, gains)
    return t, phase, 60.0 / periods[idx], amp


def _attenuation(t, apneas, which):
    gain = np.ones_like(t)
    for a in apneas:
        att = a.airflow_attenuation if which == "airflow" else a.effort_attenuation
        inside = _raised_cosine_step(t, a.start, 2 * a.ramp) - _raised_cosine_step(t, a.end, 2 * a.ramp)
        gain = gain - att * inside
    return gain


def gen_truth(scenario: SimScenario):
    """Ground-truth ``(airflow, effort, events)`` for a scenario.

    Airflow and effort share the breath phase. CSA attenuates both, OSA only
    the airflow (effort keeps at least 70% of its amplitude).
    """
    rng, _, _ = _streams(scenario.seed)
    t, phase, _, amp = _breath_phase(scenario, rng)
    wave = amp * breath_waveform(phase, scenario.profile.shape)
    airflow = wave * _attenuation(t, scenario.apneas, "airflow")
    effort = wave * _attenuation(t, scenario.apneas, "effort")
    events = [ApneaEvent(a.start, a.end, a.kind, 1.0) for a in scenario.apneas]
    return (
        TimeSeries(airflow, TRUTH_RATE, 0.0, "airflow"),
        TimeSeries(effort, TRUTH_RATE, 0.0, "effort"),
        events,
    )


def instantaneous_rate(scenario: SimScenario) -> TimeSeries:
    """True breathing rate (BPM) at every truth sample."""
    rng, _, _ = _streams(scenario.seed)
    _, _, rate, _ = _breath_phase(scenario, rng)
    return TimeSeries(rate, TRUTH_RATE, 0.0, "bpm")


def window_rate(rate: TimeSeries, start: float, end: float) -> float:
    """Mean true rate over ``[start, end)``."""
    return float(rate.window(start, end).samples.mean())


def _motion_terms(t, motions, modality):
    """Summed excursion pulse and a 0/1 visibility gate for one modality."""
    excursion = np.zeros_like(t)
    visible = np.ones_like(t)
    for m in motions:
        if not m.affects(modality):
            continue
        for t0 in m.times:
            excursion += m.magnitude * _bump(t, t0, m.duration)
            if m.dropout > 0:
                visible[(t >= t0) & (t < t0 + m.duration + m.dropout)] = 0.0
    return excursion, visible


def render_thermal(scenario: SimScenario, airflow: TimeSeries, dtype=np.float32) -> FrameSequence:
    """Thermal video of the nose region.

    Nose pixels radiate at ``base_temp + swing * airflow / amplitude``;
    background pixels are static. Gaussian pixel noise, calibration offset
    steps and motion excursions are added on top.
    """
    cfg = scenario.thermal
    _, rng, _ = _streams(scenario.seed)
    params = RadiometricParams(emissivity=cfg.emissivity)
    n = len(airflow)
    t = airflow.times
    excursion, visible = _motion_terms(t, scenario.motions, "thermal")
    temp = cfg.base_temp + cfg.swing * visible * airflow.samples / scenario.profile.amplitude
    nose = radiant_exitance(temp, params)
    background = radiant_exitance(cfg.background_temp, params)
    base_nose = radiant_exitance(cfg.base_temp, params)
    # one breathing amplitude expressed in exitance, small-signal slope of T^4
    unit = 4 * params.emissivity * params.sigma * cfg.base_temp**3 * max(cfg.swing, 1e-3)
    offset = unit * excursion
    for when, frac in cfg.calibration_steps:
        offset = offset + frac * base_nose * (t >= when)

    frames = np.empty((n, cfg.height, cfg.width), dtype=dtype)
    rows, cols = cfg.roi.slices
    block = 4096
    for f0 in range(0, n, block):
        f1 = min(n, f0 + block)
        chunk = np.full((f1 - f0, cfg.height, cfg.width), background, dtype=float)
        chunk[:, rows, cols] = nose[f0:f1, None, None]
        chunk += offset[f0:f1, None, None]
        if cfg.noise_std > 0:
            chunk += cfg.noise_std * rng.standard_normal(chunk.shape)
        frames[f0:f1] = chunk
    return FrameSequence(frames, airflow.rate, airflow.t0)


def render_radar(scenario: SimScenario, effort: TimeSeries, dtype=np.complex64) -> AdcCube:
    """Complex IF samples of an FMCW radar watching the chest.

    Each chirp sees the breather at ``R0 + d(t)``, with ``d`` the scaled
    effort waveform, plus static clutter reflectors and complex Gaussian
    noise. The IF phase follows ``2 pi f_c t_d + 2 pi k t_d t + pi k t_d^2``.
    """
    cfg = scenario.radar
    ch = cfg.chirp
    _, _, rng = _streams(scenario.seed)
    n_chirps = int(round(effort.duration * ch.chirp_rate))
    t_slow = effort.t0 + np.arange(n_chirps) / ch.chirp_rate
    eff = np.interp(t_slow, effort.times, effort.samples) if ch.chirp_rate != effort.rate else effort.samples[:n_chirps]
    disp = cfg.displacement_scale * eff / scenario.profile.amplitude
    excursion, visible = _motion_terms(t_slow, scenario.motions, "radar")
    disp = disp * visible
    wrap = None
    if cfg.motion_form == "spike":
        disp = disp + cfg.displacement_scale * excursion
    else:
        wrap = excursion > 0
    rng_range = cfg.target_range + disp
    if np.any(rng_range <= 0) or np.any(rng_range >= ch.max_range()):
        raise ScenarioError("target range leaves the unambiguous interval")
    step = np.max(np.abs(np.diff(disp))) if disp.size > 1 else 0.0
    if step > ch.wavelength / 4:
        warnings.warn(
            f"displacement step {step:.2e} m per chirp exceeds lambda/4; phase will alias",
            RuntimeWarning,
            stacklevel=2,
        )

    reflectors = [(rng_range, cfg.target_amplitude)]
    reflectors += [(np.full(n_chirps, r), a) for r, a in cfg.clutter]
    t_fast = np.arange(ch.samples_per_chirp) / ch.adc_rate
    wrap_phase = rng.uniform(-np.pi, np.pi, n_chirps) if wrap is not None else None

    out = np.empty((n_chirps, ch.samples_per_chirp), dtype=dtype)
    block = max(1, 2**20 // ch.samples_per_chirp)
    for c0 in range(0, n_chirps, block):
        c1 = min(n_chirps, c0 + block)
        acc = np.zeros((c1 - c0, ch.samples_per_chirp), dtype=np.complex128)
        for k, (r, a) in enumerate(reflectors):
            td = 2 * r[c0:c1] / SPEED_OF_LIGHT
            phi0 = 2 * np.pi * ch.f_c * td + np.pi * ch.slope * td**2
            if k == 0 and wrap_phase is not None:
                phi0 = phi0 + np.where(wrap[c0:c1], wrap_phase[c0:c1], 0.0)
            beat = ch.slope * td
            acc += a * np.exp(1j * (phi0[:, None] + 2 * np.pi * beat[:, None] * t_fast[None, :]))
        if cfg.noise_std > 0:
            acc += (cfg.noise_std / math.sqrt(2)) * (
                rng.standard_normal(acc.shape) + 1j * rng.standard_normal(acc.shape)
            )
        out[c0:c1] = acc
    return AdcCube(out, ch)


# -- scenario builders ----------------------------------------------------------


def schedule_events(duration, count, durations, rng, margin=40.0, gap=45.0, avoid=()):
    """Random non-overlapping ``(start, length)`` pairs spread over the recording.

    The recording is cut into ``count`` equal slots and each event is placed
    uniformly inside its slot, keeping ``gap`` seconds of normal breathing
    between events and ``margin`` seconds at both ends.
    """
    slot = (duration - 2 * margin) / count
    out = []
    for i in range(count):
        length = float(rng.uniform(*durations))
        lo = margin + i * slot
        hi = lo + slot - length - gap
        if hi < lo:
            raise ScenarioError("recording too short for the requested events")
        out.append((round(float(rng.uniform(lo, hi)), 3), round(length, 3)))
    return out


def apnea_night(
    duration=7200.0,
    n_osa=10,
    n_csa=10,
    n_motion=0,
    seed=0,
    durations=(12.0, 25.0),
    profile=BreathingProfile(),
    thermal=ThermalSimConfig(),
    radar=RadarSimConfig(),
    motion_dropout=20.0,
    motion_modalities="both",
) -> SimScenario:
    """Scenario with alternating OSA/CSA apnoeas and isolated motion bursts.

    Motion bursts are placed in the normal-breathing stretches halfway between
    apnoeas so that they never overlap an event.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    n = n_osa + n_csa
    kinds = ["OSA"] * n_osa + ["CSA"] * n_csa
    rng.shuffle(kinds)
    apneas = []
    for (start, length), kind in zip(schedule_events(duration, n, durations, rng), kinds):
        apneas.append(
            ApneaSpec(
                start=start,
                duration=length,
                kind=kind,
                airflow_attenuation=round(float(rng.uniform(0.92, 0.98)), 3),
                effort_attenuation=(
                    round(float(rng.uniform(0.92, 0.98)), 3) if kind == "CSA" else round(float(rng.uniform(0.0, 0.25)), 3)
                ),
            )
        )
    motions = ()
    if n_motion:
        gaps = [(a.end, b.start) for a, b in zip(apneas, apneas[1:])]
        gaps = sorted(gaps, key=lambda g: g[0] - g[1])[:n_motion]
        times = sorted(round((a + b) / 2 - (motion_dropout + 1) / 2, 3) for a, b in gaps)
        motions = (MotionArtifactSpec(times=tuple(times), dropout=motion_dropout, modalities=motion_modalities),)
    return SimScenario(
        duration=duration,
        profile=profile,
        apneas=tuple(apneas),
        motions=motions,
        thermal=thermal,
        radar=radar,
        seed=seed,
    )


def demo_scenario(seed: int = 7) -> SimScenario:
    """Fifteen-minute recording with three OSA, three CSA and two motion bursts."""
    return apnea_night(
        duration=900.0,
        n_osa=3,
        n_csa=3,
        n_motion=2,
        seed=seed,
        durations=(14.0, 25.0),
        thermal=ThermalSimConfig(height=24, width=32, roi=RoiRect(10, 12, 4, 6)),
        radar=RadarSimConfig(chirp=ChirpConfig(adc_rate=64 / 50e-6, samples_per_chirp=64)),
        motion_modalities="thermal",
    )
