"""Session data model, on-disk format and the seeded synthetic generator.

A session directory holds::

    meta.json    subject_id, fs_hz, n_channels, n_samples, duration_s[, seed]
    eeg.f64le    row-major channels x samples, little-endian float64
    events.csv   event_onset_s,response_onset_s,response_offset_s
    latent.csv   t_s,d,latent_rt_s        (synthetic sessions only)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

RT_MIN = 0.5
RT_MAX = 8.0
MIN_TRIAL_GAP_S = 5.0
MAX_TRIAL_GAP_S = 10.0
N_CHANNELS = 30
RAW_FS = 500.0
FULL_DURATION_S = 5400.0
DESK_DURATION_S = 600.0

EVENT_FIELDS = ("event_onset_s", "response_onset_s", "response_offset_s")


class SessionFormatError(ValueError):
    """A session file is missing, malformed or violates an invariant."""


@dataclass(frozen=True)
class TrialEvent:
    event_onset: float
    response_onset: float
    response_offset: float

    def __post_init__(self):
        if not (self.event_onset < self.response_onset < self.response_offset):
            raise ValueError(
                f"trial needs event_onset < response_onset < response_offset, got "
                f"{self.event_onset}, {self.response_onset}, {self.response_offset}"
            )


def measured_rt(trial: TrialEvent) -> float:
    """Reaction time: response onset minus event onset, in seconds."""
    rt = trial.response_onset - trial.event_onset
    if rt <= 0:
        raise ValueError(f"non-positive reaction time {rt}")
    return rt


@dataclass
class Session:
    subject_id: str
    fs: float
    eeg: np.ndarray  # (channels, samples)
    events: List[TrialEvent]
    seed: Optional[int] = None

    def __post_init__(self):
        self.eeg = np.asarray(self.eeg, dtype=np.float64)
        if self.eeg.ndim != 2:
            raise ValueError("eeg must be a channels x samples matrix")
        validate_events(self.events, self.duration)

    @property
    def n_channels(self) -> int:
        return self.eeg.shape[0]

    @property
    def duration(self) -> float:
        return self.eeg.shape[1] / self.fs

    def __eq__(self, other) -> bool:
        if not isinstance(other, Session):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.fs == other.fs
            and self.seed == other.seed
            and self.events == other.events
            and self.eeg.shape == other.eeg.shape
            and self.eeg.tobytes() == other.eeg.tobytes()
        )


def validate_events(events: List[TrialEvent], duration: float) -> None:
    prev = None
    for k, ev in enumerate(events):
        if ev.response_offset >= duration:
            raise ValueError(f"event {k}: response offset {ev.response_offset} beyond duration {duration}")
        if prev is not None:
            if ev.event_onset <= prev.event_onset:
                raise ValueError(f"event {k}: onsets not strictly increasing")
            if ev.event_onset - prev.event_onset < MIN_TRIAL_GAP_S - 1e-9:
                raise ValueError(f"event {k}: onset gap below {MIN_TRIAL_GAP_S} s")
        prev = ev


@dataclass
class LatentTrace:
    """Per-second latent drowsiness ``d`` in [0, 1] and RT = 0.5 + 7.5 d."""

    t: np.ndarray
    d: np.ndarray

    @property
    def rt(self) -> np.ndarray:
        return RT_MIN + (RT_MAX - RT_MIN) * self.d

    def rt_at(self, times) -> np.ndarray:
        return np.interp(times, self.t, self.rt)

    def mean_rt(self, start: float, stop: float) -> float:
        sel = (self.t >= start) & (self.t < stop)
        return float(self.rt[sel].mean()) if sel.any() else float(self.rt_at(start))


@dataclass
class SynthConfig:
    duration_s: float = FULL_DURATION_S
    seed: int = 0
    subject_seed: int = 0  # fixes the channel mixing; sessions of one subject share it
    subject_id: str = "synthetic"
    tau_s: float = 300.0  # drowsiness time constant
    drift_mean: float = -0.5  # stationary mean of the logit of d
    drift_std: float = 1.5  # stationary std of the logit of d
    theta_gain: float = 2.0
    alpha_gain: float = 1.5
    noise_level: float = 1.0
    rt_noise_s: float = 0.3
    n_channels: int = N_CHANNELS
    fs: float = RAW_FS

    def validate(self) -> None:
        if self.duration_s < 60:
            raise ValueError("duration_s must be at least 60 s")
        if self.tau_s <= 0:
            raise ValueError("tau_s must be positive")
        if self.noise_level < 0 or self.rt_noise_s < 0 or self.drift_std < 0:
            raise ValueError("noise levels must be non-negative")
        if self.theta_gain < 0 or self.alpha_gain < 0:
            raise ValueError("coupling gains must be non-negative")
        if self.n_channels < 1 or self.fs <= 0:
            raise ValueError("need at least one channel and a positive sample rate")


# ---------------------------------------------------------------- generator


def _latent(cfg: SynthConfig, rng: np.random.Generator) -> LatentTrace:
    n = int(math.floor(cfg.duration_s)) + 1
    a = math.exp(-1.0 / cfg.tau_s)
    z = np.empty(n)
    z[0] = cfg.drift_mean + cfg.drift_std * rng.standard_normal()
    kicks = cfg.drift_std * math.sqrt(1.0 - a * a) * rng.standard_normal(n - 1)
    for k in range(1, n):
        z[k] = cfg.drift_mean + a * (z[k - 1] - cfg.drift_mean) + kicks[k - 1]
    d = 1.0 / (1.0 + np.exp(-z))
    return LatentTrace(t=np.arange(n, dtype=np.float64), d=d)


def _trials(cfg: SynthConfig, trace: LatentTrace, rng: np.random.Generator) -> List[TrialEvent]:
    events: List[TrialEvent] = []
    onset = 0.0
    last_response = -math.inf
    while True:
        for _ in range(50):
            gap = rng.uniform(MIN_TRIAL_GAP_S, MAX_TRIAL_GAP_S)
            rt = float(np.clip(trace.rt_at(onset + gap) + cfg.rt_noise_s * rng.standard_normal(), RT_MIN, RT_MAX))
            # two responses must not share a 3 s segment
            if onset + gap + rt - last_response >= 3.0:
                break
        onset += gap
        response = onset + rt
        offset = response + rng.uniform(1.0, 2.5)
        if offset >= cfg.duration_s:
            return events
        events.append(TrialEvent(onset, response, offset))
        last_response = response


def _narrowband(n: int, fs: float, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < lo) | (f > hi)] = 0.0
    s = np.fft.irfft(spec, n)
    return s / s.std()


def _pink(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    f[0] = f[1]
    s = np.fft.irfft(spec / np.sqrt(f), n)
    return s / s.std()


def source_amplitudes(trace: LatentTrace, cfg: SynthConfig):
    """Per-second (theta, alpha) source amplitudes driven by the latent trace."""
    return 1.0 + cfg.theta_gain * trace.d, 1.0 + cfg.alpha_gain * trace.d


def generate_session(cfg: SynthConfig):
    """Synthesize a raw-rate session and its latent trace; fully determined by the seeds."""
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, 1])
    mix_rng = np.random.default_rng([cfg.subject_seed, 2])
    trace = _latent(cfg, rng)
    events = _trials(cfg, trace, rng)

    n = int(round(cfg.duration_s * cfg.fs))
    C = cfg.n_channels
    n_bg = 8
    topo_theta = mix_rng.standard_normal(C)
    topo_alpha = mix_rng.standard_normal(C)
    bg_mix = mix_rng.standard_normal((C, n_bg)) / math.sqrt(n_bg)

    t = np.arange(n) / cfg.fs
    amp_theta, amp_alpha = source_amplitudes(trace, cfg)
    theta = np.interp(t, trace.t, amp_theta) * _narrowband(n, cfg.fs, 4.0, 7.0, rng)
    alpha = np.interp(t, trace.t, amp_alpha) * _narrowband(n, cfg.fs, 8.0, 12.0, rng)

    eeg = np.outer(topo_theta, theta)
    eeg += np.outer(topo_alpha, alpha)
    for k in range(n_bg):
        eeg += cfg.noise_level * np.outer(bg_mix[:, k], _pink(n, cfg.fs, rng))
    eeg += 0.1 * cfg.noise_level * rng.standard_normal((C, n))

    session = Session(subject_id=cfg.subject_id, fs=cfg.fs, eeg=eeg, events=events, seed=cfg.seed)
    return session, trace


# ---------------------------------------------------------------- persistence


def save_session(session: Session, path, trace: Optional[LatentTrace] = None) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "subject_id": session.subject_id,
        "fs_hz": session.fs,
        "n_channels": session.n_channels,
        "n_samples": session.eeg.shape[1],
        "duration_s": session.duration,
    }
    if session.seed is not None:
        meta["seed"] = session.seed
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    (out / "eeg.f64le").write_bytes(np.asarray(session.eeg, dtype="<f8").tobytes(order="C"))
    with open(out / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_FIELDS)
        for ev in session.events:
            w.writerow([repr(ev.event_onset), repr(ev.response_onset), repr(ev.response_offset)])
    if trace is not None:
        with open(out / "latent.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t_s", "d", "latent_rt_s"))
            for t, d, rt in zip(trace.t, trace.d, trace.rt):
                w.writerow([repr(float(t)), repr(float(d)), repr(float(rt))])
    return out


def _read_meta(path: Path) -> dict:
    try:
        meta = json.loads((path / "meta.json").read_text())
    except FileNotFoundError:
        raise SessionFormatError(f"{path}: missing meta.json") from None
    except json.JSONDecodeError as exc:
        raise SessionFormatError(f"{path / 'meta.json'}: invalid JSON ({exc})") from None
    for key in ("subject_id", "fs_hz", "n_channels", "n_samples"):
        if key not in meta:
            raise SessionFormatError(f"{path / 'meta.json'}: missing field {key!r}")
    return meta


def _read_events(path: Path) -> List[TrialEvent]:
    events = []
    try:
        fh = open(path / "events.csv", newline="")
    except FileNotFoundError:
        raise SessionFormatError(f"{path}: missing events.csv") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != EVENT_FIELDS:
            raise SessionFormatError(f"{path / 'events.csv'}: header must be {','.join(EVENT_FIELDS)}")
        for line, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise SessionFormatError(f"{path / 'events.csv'} line {line}: expected 3 fields")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise SessionFormatError(f"{path / 'events.csv'} line {line}: non-numeric field") from None
            if not vals[0] < vals[1]:
                raise SessionFormatError(
                    f"{path / 'events.csv'} line {line}: response_onset_s {vals[1]} not after event_onset_s {vals[0]}"
                )
            if not vals[1] < vals[2]:
                raise SessionFormatError(
                    f"{path / 'events.csv'} line {line}: response_offset_s {vals[2]} not after response_onset_s {vals[1]}"
                )
            events.append(TrialEvent(*vals))
    return events


def load_session(path) -> Session:
    path = Path(path)
    meta = _read_meta(path)
    C, n = int(meta["n_channels"]), int(meta["n_samples"])
    blob = path / "eeg.f64le"
    if not blob.exists():
        raise SessionFormatError(f"{path}: missing eeg.f64le")
    raw = blob.read_bytes()
    expected = C * n * 8
    if len(raw) != expected:
        raise SessionFormatError(f"{blob}: expected {expected} bytes, found {len(raw)}")
    eeg = np.frombuffer(raw, dtype="<f8").reshape(C, n).astype(np.float64)
    events = _read_events(path)
    try:
        return Session(
            subject_id=str(meta["subject_id"]),
            fs=float(meta["fs_hz"]),
            eeg=eeg,
            events=events,
            seed=meta.get("seed"),
        )
    except ValueError as exc:
        raise SessionFormatError(f"{path}: {exc}") from None


def load_latent(path) -> Optional[LatentTrace]:
    f = Path(path) / "latent.csv"
    if not f.exists():
        return None
    data = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)
    return LatentTrace(t=data[:, 0].copy(), d=data[:, 1].copy())
