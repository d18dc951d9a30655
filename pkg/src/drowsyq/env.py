"""Session MDP: segment states, RT-proposition actions and the exponential tracer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .preproc import SegmentState
from .sessions import RT_MAX, RT_MIN

DEFAULT_INITIAL_TRT = 1.0


def default_proposals() -> np.ndarray:
    """16 proposals: 0.5, 1.0, ..., 8.0 s."""
    return np.arange(1, 17) * 0.5


class ActionSpace:
    def __init__(self, proposals: Optional[Sequence[float]] = None):
        p = default_proposals() if proposals is None else np.asarray(proposals, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("proposals must be a non-empty 1-D sequence")
        if np.any(np.diff(p) <= 0):
            raise ValueError("proposals must be strictly increasing")
        if p[0] < RT_MIN or p[-1] > RT_MAX:
            raise ValueError(f"proposals must lie within [{RT_MIN}, {RT_MAX}]")
        self.proposals = p

    def __len__(self) -> int:
        return len(self.proposals)

    def action_to_prt(self, index: int) -> float:
        if not 0 <= index < len(self.proposals):
            raise IndexError(f"action {index} outside 0..{len(self.proposals) - 1}")
        return float(self.proposals[index])

    def index_of(self, value: float) -> int:
        return int(np.argmin(np.abs(self.proposals - value)))


def tracer_update(trt: float, proposal: float, beta: float) -> float:
    return beta * trt + (1.0 - beta) * proposal


def tracer_closed_form(initial: float, proposals: Sequence[float], beta: float) -> float:
    """beta^t * tRT_0 + (1 - beta) * sum_k beta^(t-k) * p_k."""
    p = np.asarray(proposals, dtype=np.float64)
    t = len(p)
    powers = beta ** np.arange(t - 1, -1, -1, dtype=np.float64)
    return float(beta**t * initial + (1.0 - beta) * np.dot(powers, p))


@dataclass
class StepResult:
    next_state: Optional[SegmentState]
    reward: float
    done: bool
    traced_rt: float


class TracerEnv:
    """One pass over a session's segments.

    ``step(a)`` moves the tracer toward the proposed RT, then scores the
    updated tracer against the consumed segment's measured RT (reward 0 when
    the segment carries none).
    """

    def __init__(self, action_space: Optional[ActionSpace] = None):
        self.actions = action_space or ActionSpace()
        self.segments: Sequence[SegmentState] = ()
        self.cursor = 0
        self.beta = 0.75
        self.trt = DEFAULT_INITIAL_TRT
        self.done = True

    def reset(self, segments: Sequence[SegmentState], beta: float = 0.75, initial_trt: float = DEFAULT_INITIAL_TRT):
        if len(segments) == 0:
            raise ValueError("cannot run an episode on an empty session")
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta {beta} outside [0, 1]")
        if not RT_MIN <= initial_trt <= RT_MAX:
            raise ValueError(f"initial traced RT {initial_trt} outside [{RT_MIN}, {RT_MAX}]")
        self.segments = segments
        self.beta = float(beta)
        self.trt = float(initial_trt)
        self.cursor = 0
        self.done = False
        return segments[0]

    @property
    def state(self) -> Optional[SegmentState]:
        return None if self.done else self.segments[self.cursor]

    def action_to_prt(self, index: int) -> float:
        return self.actions.action_to_prt(index)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        proposal = self.actions.action_to_prt(int(action))
        self.trt = tracer_update(self.trt, proposal, self.beta)
        seg = self.segments[self.cursor]
        reward = -abs(seg.measured_rt - self.trt) if seg.measured_rt is not None else 0.0
        self.cursor += 1
        self.done = self.cursor >= len(self.segments)
        nxt = None if self.done else self.segments[self.cursor]
        return StepResult(next_state=nxt, reward=reward, done=self.done, traced_rt=self.trt)


def trace_actions(proposals: np.ndarray, actions: Sequence[int], beta: float, initial_trt: float) -> np.ndarray:
    """Tracer trajectory for a fixed action sequence."""
    out = np.empty(len(actions))
    trt = initial_trt
    for i, a in enumerate(actions):
        trt = tracer_update(trt, proposals[a], beta)
        out[i] = trt
    return out
