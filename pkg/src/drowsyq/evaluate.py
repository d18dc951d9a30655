"""Test-session metrics: covered-segment RMSE, spline-interpolated RT curve and
Pearson correlation, plus report assembly and file round trips."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .env import DEFAULT_INITIAL_TRT, ActionSpace
from .preproc import PreparedSession, SegmentState
from .sessions import LatentTrace

log = logging.getLogger(__name__)

MODES = ("rl", "sl")
CSV_FIELDS = ("t_start_s", "predicted_rt_s", "measured_rt_s", "spline_rt_s")


class UndefinedCorrelationError(ValueError):
    """Raised when one of the inputs has zero variance."""


def rmse(measured: Sequence[float], predicted: Sequence[float]) -> float:
    m = np.asarray(measured, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if m.shape != p.shape:
        raise ValueError(f"rmse: length mismatch {m.shape} vs {p.shape}")
    if m.size == 0:
        raise ValueError("rmse of an empty set is undefined")
    d = m - p
    return float(math.sqrt(np.mean(d * d)))


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson_correlation needs equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("pearson_correlation needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(np.dot(dx, dx)))
    sy = math.sqrt(float(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined: an input has zero variance")
    r = float(np.dot(dx, dy)) / (sx * sy)
    return max(-1.0, min(1.0, r))


def spline_interpolate(knots: Sequence[Tuple[float, float]], query: Sequence[float]) -> np.ndarray:
    """Natural cubic spline through ``knots``; constant beyond the end knots.

    Knots are (index, value) pairs and are sorted by index first.
    """
    if len(knots) < 2:
        raise ValueError(f"spline needs at least 2 knots, got {len(knots)}")
    pts = sorted((float(i), float(v)) for i, v in knots)
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(np.diff(xs) <= 0):
        raise ValueError("spline knots must have distinct indices")
    q = np.asarray(query, dtype=np.float64)
    out = CubicSpline(xs, ys, bc_type="natural")(np.clip(q, xs[0], xs[-1]))
    # exact at knots, whatever the solver's rounding
    hit = np.searchsorted(xs, q)
    on = (hit < len(xs)) & (xs[np.minimum(hit, len(xs) - 1)] == q)
    out[on] = ys[hit[on]]
    return out


def measured_curve(segments: Sequence[SegmentState]) -> Optional[np.ndarray]:
    """Spline of the covered segments' RTs at every segment index (None if < 2 knots)."""
    knots = [(i, s.measured_rt) for i, s in enumerate(segments) if s.covered]
    if len(knots) < 2:
        return None
    return spline_interpolate(knots, np.arange(len(segments)))


def latent_curve(trace: LatentTrace, segments: Sequence[SegmentState], segment_s: float = 3.0) -> np.ndarray:
    """Mean latent RT over each segment's window."""
    return np.array([trace.mean_rt(s.t_start, s.t_start + segment_s) for s in segments])


@dataclass
class SegmentRecord:
    t_start_s: float
    predicted_rt_s: float
    measured_rt_s: Optional[float]
    spline_rt_s: Optional[float]


@dataclass
class EvalReport:
    mode: str
    records: List[SegmentRecord]
    rmse: Optional[float]
    correlation: Optional[float]
    beta: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def predicted(self) -> np.ndarray:
        return np.array([r.predicted_rt_s for r in self.records])

    @property
    def n_covered(self) -> int:
        return sum(r.measured_rt_s is not None for r in self.records)

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "beta": self.beta,
            "rmse": self.rmse,
            "correlation": self.correlation,
            "n_segments": len(self.records),
            "n_covered": self.n_covered,
            "warnings": list(self.warnings),
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2) + "\n")
        return path

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for r in self.records:
                w.writerow([_fmt(v) for v in (r.t_start_s, r.predicted_rt_s, r.measured_rt_s, r.spline_rt_s)])
        return path

    @classmethod
    def read(cls, json_path, csv_path) -> "EvalReport":
        meta = json.loads(Path(json_path).read_text())
        records = read_segment_csv(csv_path)
        return cls(meta["mode"], records, meta["rmse"], meta["correlation"], meta.get("beta"), meta.get("warnings", []))


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def read_segment_csv(path) -> List[SegmentRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_FIELDS:
        raise ValueError(f"{path}: expected header {','.join(CSV_FIELDS)}")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise ValueError(f"{path}:{n}: expected 4 fields, got {len(row)}")
        vals = [None if v == "" else float(v) for v in row]
        out.append(SegmentRecord(*vals))
    return out


def build_report(
    mode: str, segments: Sequence[SegmentState], predicted: np.ndarray, beta: Optional[float] = None
) -> EvalReport:
    """Score predictions (one per segment) against the session's measured RTs."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    predicted = np.asarray(predicted, dtype=np.float64)
    if len(predicted) != len(segments):
        raise ValueError(f"{len(predicted)} predictions for {len(segments)} segments")
    warnings: List[str] = []
    covered = [i for i, s in enumerate(segments) if s.covered]
    score = None
    if covered:
        score = rmse([segments[i].measured_rt for i in covered], predicted[covered])
    else:
        warnings.append("no covered segments: rmse undefined")
    curve = measured_curve(segments)
    corr = None
    if curve is None:
        warnings.append("fewer than two covered segments: spline and correlation undefined")
    else:
        try:
            corr = pearson_correlation(predicted, curve)
        except UndefinedCorrelationError as exc:
            warnings.append(str(exc))
    for w in warnings:
        log.warning(w)
    records = [
        SegmentRecord(
            s.t_start,
            float(predicted[i]),
            s.measured_rt,
            None if curve is None else float(curve[i]),
        )
        for i, s in enumerate(segments)
    ]
    return EvalReport(mode, records, score, corr, beta, warnings)


def evaluate(
    model,
    session,
    mode: str,
    beta: float = 0.75,
    initial_trt: float = DEFAULT_INITIAL_TRT,
    action_space: Optional[ActionSpace] = None,
) -> EvalReport:
    """RL mode scores the greedy traced-RT rollout; SL mode scores per-segment regression."""
    from .trainer import greedy_rollout  # avoids an import cycle

    segments = session.segments if isinstance(session, PreparedSession) else list(session)
    if mode == "rl":
        if model.variant == "supervised":
            raise ValueError("rl evaluation needs an RL checkpoint; this one is supervised")
        predicted = greedy_rollout(model, segments, beta, initial_trt, action_space)
        return build_report("rl", segments, predicted, beta)
    if mode == "sl":
        if model.variant != "supervised":
            raise ValueError(f"sl evaluation needs a supervised checkpoint; this one is {model.variant}")
        chunks = [segments[i : i + 64] for i in range(0, len(segments), 64)]
        predicted = np.concatenate([model.predict_rt(np.stack([s.planes for s in c])) for c in chunks])
        return build_report("sl", segments, predicted)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")

