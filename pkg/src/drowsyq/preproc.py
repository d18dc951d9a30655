"""Signal chain: bandpass, 500 -> 128 Hz resampling, RT smoothing, 3 s segmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .sessions import RT_MAX, RT_MIN, Session, TrialEvent, measured_rt

log = logging.getLogger(__name__)

TARGET_FS = 128.0
SEGMENT_S = 3.0
SUBSECONDS = 3


@dataclass(frozen=True)
class FilterSpec:
    low_cut: float = 0.5
    high_cut: float = 50.0
    order: int = 4

    def validate(self, fs: float) -> None:
        if not 0 < self.low_cut < self.high_cut < fs / 2:
            raise ValueError(f"need 0 < low_cut < high_cut < fs/2, got {self.low_cut}, {self.high_cut}, fs={fs}")
        if self.order < 1:
            raise ValueError("filter order must be positive")


@dataclass(frozen=True)
class RtSmoothingSpec:
    clip_min: float = RT_MIN
    clip_max: float = RT_MAX
    window_s: float = 90.0

    def validate(self) -> None:
        if not self.clip_min < self.clip_max:
            raise ValueError("clip_min must be below clip_max")
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")


def butterworth_sos(fs: float, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    spec.validate(fs)
    return signal.butter(spec.order, [spec.low_cut, spec.high_cut], btype="bandpass", fs=fs, output="sos")


def bandpass_filter(x: np.ndarray, fs: float, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Zero-phase (forward-backward) Butterworth bandpass along the last axis."""
    sos = butterworth_sos(fs, spec)
    x = np.asarray(x, dtype=np.float64)
    padlen = 3 * (2 * len(sos) + 1)
    if x.shape[-1] <= padlen:
        raise ValueError(f"signal of {x.shape[-1]} samples too short for edge handling (needs > {padlen})")
    return signal.sosfiltfilt(sos, x, axis=-1, padlen=padlen)


def resample(x: np.ndarray, fs_in: float = 500.0, fs_out: float = TARGET_FS) -> np.ndarray:
    """Polyphase rational resampling (Kaiser-windowed sinc) along the last axis.

    Output length is floor(n * fs_out / fs_in).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("cannot resample an empty signal")
    ratio = Fraction(fs_out / fs_in).limit_denominator(10_000)
    y = signal.resample_poly(x, ratio.numerator, ratio.denominator, axis=-1, padtype="line")
    n_out = (n * ratio.numerator) // ratio.denominator
    return y[..., :n_out]


def clip_and_smooth_rt(
    rts: Sequence[Tuple[float, float]], spec: RtSmoothingSpec = RtSmoothingSpec()
) -> List[Tuple[float, float]]:
    """Clip each RT, then average the clipped RTs of the trailing window (t - window, t]."""
    spec.validate()
    if len(rts) == 0:
        raise ValueError("no reaction times to smooth")
    times = np.array([t for t, _ in rts], dtype=np.float64)
    if np.any(np.diff(times) <= 0):
        raise ValueError("RT times must be strictly increasing")
    vals = np.clip(np.array([v for _, v in rts], dtype=np.float64), spec.clip_min, spec.clip_max)
    csum = np.concatenate([[0.0], np.cumsum(vals)])
    lo = np.searchsorted(times, times - spec.window_s, side="right")
    hi = np.arange(1, len(times) + 1)
    smooth = (csum[hi] - csum[lo]) / (hi - lo)
    return [(float(t), float(v)) for t, v in zip(times, smooth)]


@dataclass
class SegmentState:
    """One 3 s slice: ``planes`` is (3, channels, 128), one plane per second."""

    planes: np.ndarray
    t_start: float
    measured_rt: Optional[float] = None
    key: tuple = field(default=())

    @property
    def covered(self) -> bool:
        return self.measured_rt is not None


def segment_array(eeg: np.ndarray, fs: float = TARGET_FS, unit_s: float = SEGMENT_S) -> np.ndarray:
    """(C, n) -> (n_segments, 3, C, fs) by non-overlapping 3 s windows; remainder dropped."""
    per_sub = int(round(fs))
    per_seg = per_sub * SUBSECONDS
    if abs(unit_s - SUBSECONDS * per_sub / fs) > 1e-9:
        raise ValueError("segments must span exactly three one-second planes")
    C, n = eeg.shape
    n_seg = n // per_seg
    if n_seg == 0:
        raise ValueError(f"session of {n / fs:.3f} s shorter than one {unit_s} s segment")
    x = eeg[:, : n_seg * per_seg].reshape(C, n_seg, SUBSECONDS, per_sub)
    return np.ascontiguousarray(x.transpose(1, 2, 0, 3))


def segment_session(
    eeg: np.ndarray,
    smoothed_rts: Sequence[Tuple[float, float]] = (),
    fs: float = TARGET_FS,
    unit_s: float = SEGMENT_S,
    session_key: str = "",
) -> List[SegmentState]:
    """Split preprocessed EEG into segment states.

    ``smoothed_rts`` pairs each response-onset time with its smoothed RT; a
    segment carries the RT whose response onset falls in [t_start, t_start + 3).
    """
    planes = segment_array(eeg, fs, unit_s)
    rt_by_seg = {}
    for t, rt in smoothed_rts:
        i = int(np.floor(t / unit_s))
        if 0 <= i < len(planes):
            if i in rt_by_seg:
                log.warning("segment %d covers more than one response; keeping the later one", i)
            rt_by_seg[i] = rt
    return [
        SegmentState(planes=planes[i], t_start=i * unit_s, measured_rt=rt_by_seg.get(i), key=(session_key, i))
        for i in range(len(planes))
    ]


@dataclass
class PreparedSession:
    """A session after the full chain, ready for the environment and trainers."""

    name: str
    eeg: np.ndarray  # (C, n) at TARGET_FS
    fs: float
    events: List[TrialEvent]
    smoothed_rts: List[Tuple[float, float]]  # (response onset, smoothed RT), one per event
    segments: List[SegmentState]

    @property
    def covered_count(self) -> int:
        return sum(s.covered for s in self.segments)


def prepare_session(
    session: Session,
    name: str = "",
    filter_spec: FilterSpec = FilterSpec(),
    rt_spec: RtSmoothingSpec = RtSmoothingSpec(),
    target_fs: float = TARGET_FS,
) -> PreparedSession:
    filtered = bandpass_filter(session.eeg, session.fs, filter_spec)
    eeg = resample(filtered, session.fs, target_fs)
    rts = [(ev.response_onset, measured_rt(ev)) for ev in session.events]
    smoothed = clip_and_smooth_rt(rts, rt_spec) if rts else []
    segments = segment_session(eeg, smoothed, target_fs, SEGMENT_S, session_key=name)
    return PreparedSession(name, eeg, target_fs, list(session.events), smoothed, segments)


def extract_trials(prepared: PreparedSession, window_s: float = SEGMENT_S):
    """Baseline-region windows: the 3 s of EEG just before each event onset.

    Returns ``(windows, labels)`` with windows shaped (n_trials, 3, C, fs) and
    labels the trials' smoothed RTs. Trials whose window would start before the
    recording are skipped.
    """
    per_sub = int(round(prepared.fs))
    n_win = per_sub * SUBSECONDS
    C = prepared.eeg.shape[0]
    windows, labels = [], []
    for ev, (_, rt) in zip(prepared.events, prepared.smoothed_rts):
        stop = int(round(ev.event_onset * prepared.fs))
        start = stop - n_win
        if start < 0:
            log.warning("skipping trial at %.2f s: baseline window precedes recording", ev.event_onset)
            continue
        w = prepared.eeg[:, start:stop].reshape(C, SUBSECONDS, per_sub).transpose(1, 0, 2)
        windows.append(w)
        labels.append(rt)
    if not windows:
        return np.zeros((0, SUBSECONDS, C, per_sub)), np.zeros(0)
    return np.ascontiguousarray(np.stack(windows)), np.array(labels)
