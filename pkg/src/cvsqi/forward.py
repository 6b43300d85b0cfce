"""Voltage -> transconductance -> CVS math and the parametric synthetic generator.

The 16-electrode system yields 208 retained voltage channels (16 injections x 13
adjacent-pair measurements after dropping the three pairs touching the injecting
electrodes).  Transconductance is the per-channel reciprocal of the real voltage
part scaled by the injected current.  A scalar cardiac volume signal (CVS) is the
inner product of a leadforming vector with the time-difference transconductance.

Synthesis is additive by construction: the deviation of the transconductance from
its per-subject baseline is the exact sum of a cardiogenic component, a
respiratory component (which also carries the measurement noise), and a motion
component that is nonzero only inside scheduled motion events.  No boundary-value
PDE is solved; the generator only reproduces the additive structure that the
quality-indexing task depends on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidScenario, ShapeMismatch, ZeroRealPart
from .labels import QualityLabel

N_CHANNELS = 208
SAMPLE_MS = 10

MOTION_SHAPES = ("step", "ramp", "burst", "sway")


@dataclass(frozen=True)
class VoltageFrame:
    """One 208-channel complex voltage measurement at time t (ms, 10 ms grid)."""

    t_ms: int
    values: np.ndarray           # complex128, shape (208,)
    current_ma: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (N_CHANNELS,):
            raise ShapeMismatch(f"expected {N_CHANNELS} voltage channels, got {v.shape}")
        if self.current_ma <= 0:
            raise InvalidScenario("current amplitude must be positive")
        if self.t_ms % SAMPLE_MS != 0:
            raise InvalidScenario("frame time must be a multiple of 10 ms")
        object.__setattr__(self, "values", v)


@dataclass
class TransconductanceFrame:
    """208-vector of transconductances, optionally with its additive breakdown."""

    t_ms: int
    g: np.ndarray                # float64, shape (208,)
    g_air: np.ndarray | None = None
    g_blood: np.ndarray | None = None
    g_motion: np.ndarray | None = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.float64)
        if self.g.shape != (N_CHANNELS,):
            raise ShapeMismatch(f"expected {N_CHANNELS} channels, got {self.g.shape}")


@dataclass(frozen=True)
class LeadformVector:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.shape != (N_CHANNELS,):
            raise ShapeMismatch(f"leadform vector must have {N_CHANNELS} entries")
        if not np.all(np.isfinite(w)):
            raise InvalidScenario("leadform vector entries must be finite")
        if not np.any(w):
            raise InvalidScenario("leadform vector must not be all-zero")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class MotionEvent:
    start_ms: int
    duration_ms: int
    amplitude: float             # peak CVS amplitude in units of the cardiogenic peak
    shape: str = "step"

    def __post_init__(self):
        if self.shape not in MOTION_SHAPES:
            raise InvalidScenario(f"motion shape must be one of {MOTION_SHAPES}")
        if self.duration_ms <= 0:
            raise InvalidScenario("motion event duration must be positive")
        if self.amplitude < 0:
            raise InvalidScenario("motion event amplitude must be nonnegative")

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms


@dataclass(frozen=True)
class SynthScenario:
    subject_seed: int
    duration_ms: int
    rr_intervals_ms: tuple[int, ...]          # cycled if the recording outlasts them
    respiration_period_ms: float = 4000.0
    motion_events: tuple[MotionEvent, ...] = ()
    noise_std: float = 0.02                   # relative to the cardiogenic CVS peak
    gain: float = 1.0                         # subject-specific cardiogenic amplitude
    ambiguous_band: tuple[float, float] = (0.5, 1.5)
    baseline_g: float = 50.0                  # mS, keeps g positive and invertible
    current_ma: float = 1.0
    subject_id: str = "s0"

    def __post_init__(self):
        if self.duration_ms <= 0 or self.duration_ms % SAMPLE_MS != 0:
            raise InvalidScenario("duration must be a positive multiple of 10 ms")
        if not self.rr_intervals_ms:
            raise InvalidScenario("at least one RR interval is required")
        for rr in self.rr_intervals_ms:
            if not (300 <= rr <= 2000) or rr % SAMPLE_MS != 0:
                raise InvalidScenario(f"RR interval {rr} ms outside [300, 2000] or off-grid")
        for ev in self.motion_events:
            if ev.start_ms < 0 or ev.end_ms > self.duration_ms:
                raise InvalidScenario("motion event outside recording duration")
        if self.noise_std < 0:
            raise InvalidScenario("noise_std must be nonnegative")
        if self.gain <= 0:
            raise InvalidScenario("gain must be positive")
        lo, hi = self.ambiguous_band
        if not (0 < lo < hi):
            raise InvalidScenario("ambiguous band must satisfy 0 < low < high")
        if self.respiration_period_ms <= 0:
            raise InvalidScenario("respiration period must be positive")
        object.__setattr__(self, "rr_intervals_ms", tuple(int(rr) for rr in self.rr_intervals_ms))
        object.__setattr__(self, "motion_events", tuple(self.motion_events))


def transconductance_from_voltages(frame: VoltageFrame) -> TransconductanceFrame:
    """g[m] = I / Re(V[m]); the imaginary part is discarded."""
    re = frame.values.real
    zero = np.flatnonzero(re == 0.0)
    if zero.size:
        raise ZeroRealPart(int(zero[0]))
    return TransconductanceFrame(t_ms=frame.t_ms, g=frame.current_ma / re)


def time_difference(g_t: TransconductanceFrame, g_ref: TransconductanceFrame) -> np.ndarray:
    """Componentwise difference against the reference frame."""
    return g_t.g - g_ref.g


def extract_cvs(gdot: np.ndarray, w: LeadformVector | np.ndarray) -> float:
    """CVS sample: inner product of the leadform vector with a transconductance difference."""
    wv = w.w if isinstance(w, LeadformVector) else np.asarray(w, dtype=np.float64)
    gv = np.asarray(gdot, dtype=np.float64)
    if wv.shape != gv.shape:
        raise ShapeMismatch(f"leadform {wv.shape} vs transconductance {gv.shape}")
    return float(wv @ gv)


def cardiac_template(phase: np.ndarray) -> np.ndarray:
    """Unit-amplitude cardiogenic waveform over one cycle (phase in [0, 1)).

    Fast smooth rise over the first 30% of the cycle, quadratic decay back to
    zero over the remainder.  template(0) = template(1) = 0, peak 1 at 0.3.
    """
    p = np.mod(np.asarray(phase, dtype=np.float64), 1.0)
    rising = p < 0.3
    out = np.empty_like(p)
    out[rising] = 0.5 * (1.0 - np.cos(np.pi * p[rising] / 0.3))
    out[~rising] = (1.0 - (p[~rising] - 0.3) / 0.7) ** 2
    return out


def _event_profile(ev: MotionEvent, t_ms: np.ndarray,
                   cardiac_phase: np.ndarray | None = None) -> np.ndarray:
    """Dimensionless time profile of one motion event on the sample grid.

    "sway" modulates the cardiogenic waveform itself (amplitude artifact with
    no shape cue), so it needs the cardiac phase.
    """
    inside = (t_ms >= ev.start_ms) & (t_ms < ev.end_ms)
    prof = np.zeros(t_ms.shape, dtype=np.float64)
    if not inside.any():
        return prof
    s = (t_ms[inside] - ev.start_ms) / ev.duration_ms   # in [0, 1)
    if ev.shape == "step":
        prof[inside] = 1.0
    elif ev.shape == "ramp":
        prof[inside] = s
    elif ev.shape == "burst":  # oscillation under a sine envelope
        prof[inside] = np.sin(2.0 * np.pi * 3.0 * s) * np.sin(np.pi * s)
    else:  # sway: cardiac-synchronous gain shift, leaves the waveform shape intact
        prof[inside] = cardiac_template(cardiac_phase[inside])
    return prof


@dataclass
class SynthStream:
    """Full output of one synthetic recording."""

    scenario: SynthScenario
    t_ms: np.ndarray                 # (n,)
    baseline: np.ndarray             # (208,) per-subject baseline transconductance
    g: np.ndarray                    # (n, 208) total transconductance
    g_air: np.ndarray                # (n, 208) respiratory component + noise
    g_blood: np.ndarray              # (n, 208) cardiogenic component
    g_motion: np.ndarray             # (n, 208) motion component
    leadform: LeadformVector
    cvs: np.ndarray                  # (n,) w^T (g - baseline)
    r_peaks: np.ndarray              # (m,) ms timestamps on the 10 ms grid
    cycle_labels: list[QualityLabel] # length m - 1
    imag_parts: np.ndarray = field(repr=False, default=None)  # (n, 208)

    @property
    def n_samples(self) -> int:
        return self.t_ms.size

    def gdot(self, i: int) -> np.ndarray:
        return self.g[i] - self.baseline

    def frame(self, i: int) -> TransconductanceFrame:
        return TransconductanceFrame(
            t_ms=int(self.t_ms[i]), g=self.g[i],
            g_air=self.g_air[i], g_blood=self.g_blood[i], g_motion=self.g_motion[i],
        )

    def voltage_frame(self, i: int) -> VoltageFrame:
        values = self.scenario.current_ma / self.g[i] + 1j * self.imag_parts[i]
        return VoltageFrame(t_ms=int(self.t_ms[i]), values=values,
                            current_ma=self.scenario.current_ma)


def _r_peak_times(scenario: SynthScenario) -> np.ndarray:
    peaks = [0]
    rrs = scenario.rr_intervals_ms
    i = 0
    while True:
        nxt = peaks[-1] + rrs[i % len(rrs)]
        if nxt > scenario.duration_ms - SAMPLE_MS:
            break
        peaks.append(nxt)
        i += 1
    return np.asarray(peaks, dtype=np.int64)


def synthesize_stream(scenario: SynthScenario) -> SynthStream:
    """Generate one seeded recording with exact additive component breakdown.

    The leadform vector is constructed orthogonal to the respiratory mixing
    direction and normalized so the cardiogenic CVS peak equals the scenario
    gain.  Motion mixing vectors are random directions rescaled so each event's
    CVS amplitude equals its configured amplitude (in cardiogenic-peak units).
    """
    rng = np.random.default_rng(scenario.subject_seed)
    n = scenario.duration_ms // SAMPLE_MS
    t_ms = np.arange(n, dtype=np.int64) * SAMPLE_MS

    # Per-subject channel structure.
    baseline = scenario.baseline_g * (1.0 + 0.1 * rng.uniform(-1.0, 1.0, N_CHANNELS))
    a_blood = rng.normal(size=N_CHANNELS)
    a_blood /= np.linalg.norm(a_blood)
    a_air = rng.normal(size=N_CHANNELS)
    a_air /= np.linalg.norm(a_air)

    # Leadform: one Gram-Schmidt step kills the respiratory direction, then
    # rescale so w^T a_blood = 1 (CVS sees the cardiogenic waveform at gain).
    w = a_blood - (a_blood @ a_air) * a_air
    proj = w @ a_blood
    if abs(proj) < 1e-6:
        raise InvalidScenario("degenerate subject seed: blood and air directions collinear")
    w = w / proj
    leadform = LeadformVector(w)

    # R-peaks and the cardiac phase.
    r_peaks = _r_peak_times(scenario)
    phase = np.empty(n, dtype=np.float64)
    bounds = np.concatenate([r_peaks, [r_peaks[-1] + scenario.rr_intervals_ms[
        (len(r_peaks) - 1) % len(scenario.rr_intervals_ms)]]])
    seg = np.searchsorted(bounds, t_ms, side="right") - 1
    seg = np.clip(seg, 0, len(bounds) - 2)
    phase = (t_ms - bounds[seg]) / (bounds[seg + 1] - bounds[seg])

    cardio = scenario.gain * cardiac_template(phase)
    g_blood = cardio[:, None] * a_blood[None, :]

    resp = 0.5 * scenario.gain * np.sin(2.0 * np.pi * t_ms / scenario.respiration_period_ms)
    g_air = resp[:, None] * a_air[None, :]
    if scenario.noise_std > 0:
        wnorm = np.linalg.norm(w)
        chan_std = scenario.noise_std * scenario.gain / wnorm
        g_air = g_air + rng.normal(scale=chan_std, size=(n, N_CHANNELS))

    g_motion = np.zeros((n, N_CHANNELS))
    for ev in scenario.motion_events:
        u = rng.normal(size=N_CHANNELS)
        u /= np.linalg.norm(u)
        pu = w @ u
        while abs(pu) < 0.05:   # avoid blowing up channel amplitudes
            u = rng.normal(size=N_CHANNELS)
            u /= np.linalg.norm(u)
            pu = w @ u
        mixing = u / pu         # w^T mixing = 1 exactly
        prof = _event_profile(ev, t_ms, cardiac_phase=phase)
        g_motion += (scenario.gain * ev.amplitude * prof)[:, None] * mixing[None, :]

    g = baseline[None, :] + g_air + g_blood + g_motion
    if np.any(g <= 0):
        raise InvalidScenario("transconductance left the positive range; "
                              "reduce amplitudes or raise baseline_g")

    cvs = (g - baseline[None, :]) @ w

    # Cycle labels from the realized motion amplitude relative to the
    # cardiogenic peak (gain); band edges come from the scenario.
    x_motion = g_motion @ w
    lo, hi = scenario.ambiguous_band
    labels: list[QualityLabel] = []
    for a, b in zip(r_peaks[:-1], r_peaks[1:]):
        i0, i1 = int(a) // SAMPLE_MS, int(b) // SAMPLE_MS
        m = float(np.max(np.abs(x_motion[i0:i1 + 1]))) / scenario.gain
        if m > hi:
            labels.append(QualityLabel.MOTION)
        elif m >= lo:
            labels.append(QualityLabel.AMBIGUOUS)
        else:
            labels.append(QualityLabel.NORMAL)

    imag = rng.normal(scale=0.01, size=(n, N_CHANNELS))
    return SynthStream(
        scenario=scenario, t_ms=t_ms, baseline=baseline, g=g,
        g_air=g_air, g_blood=g_blood, g_motion=g_motion,
        leadform=leadform, cvs=cvs, r_peaks=r_peaks,
        cycle_labels=labels, imag_parts=imag,
    )
