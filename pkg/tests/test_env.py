import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drowsyq.env import (
    ActionSpace,
    TracerEnv,
    default_proposals,
    trace_actions,
    tracer_closed_form,
    tracer_update,
)
from drowsyq.preproc import SegmentState


def _segments(rts):
    return [SegmentState(np.zeros((3, 2, 4)), 3.0 * i, rt, ("t", i)) for i, rt in enumerate(rts)]


def test_default_grid():
    p = default_proposals()
    assert len(p) == 16 and p[0] == 0.5 and p[-1] == 8.0
    np.testing.assert_allclose(np.diff(p), 0.5)


def test_action_space():
    space = ActionSpace()
    assert space.action_to_prt(3) == 2.0
    assert space.index_of(2.0) == 3
    with pytest.raises(IndexError):
        space.action_to_prt(16)
    with pytest.raises(IndexError):
        space.action_to_prt(-1)
    for bad in ([], [2.0, 1.0], [0.2, 1.0], [1.0, 9.0]):
        with pytest.raises(ValueError):
            ActionSpace(bad)


def test_tracer_step_and_reward():
    env = TracerEnv()
    env.reset(_segments([2.3, None]), beta=0.6, initial_trt=2.0)
    res = env.step(env.actions.index_of(1.5))
    assert res.traced_rt == pytest.approx(1.8, abs=1e-12)
    assert res.reward == pytest.approx(-0.5, abs=1e-12)
    assert not res.done and res.next_state is env.segments[1]
    res = env.step(0)
    assert res.reward == 0.0
    assert res.done and res.next_state is None


def test_episode_bookkeeping():
    env = TracerEnv()
    segs = _segments([1.0, None, 3.0])
    assert env.reset(segs) is segs[0]
    assert env.state is segs[0]
    for _ in range(3):
        res = env.step(5)
    assert res.done and env.state is None
    with pytest.raises(RuntimeError):
        env.step(0)


def test_reset_errors():
    env = TracerEnv()
    with pytest.raises(ValueError):
        env.reset([])
    with pytest.raises(ValueError):
        env.reset(_segments([1.0]), beta=1.5)
    with pytest.raises(ValueError):
        env.reset(_segments([1.0]), initial_trt=9.0)
    env.reset(_segments([1.0]))
    with pytest.raises(IndexError):
        env.step(99)


@pytest.mark.parametrize("beta", [0.0, 0.2, 0.75, 1.0])
@given(st.lists(st.integers(0, 15), min_size=1, max_size=200), st.floats(0.5, 8.0))
@settings(max_examples=40, deadline=None)
def test_tracer_closed_form(beta, actions, initial):
    p = default_proposals()
    env = TracerEnv()
    env.reset(_segments([None] * len(actions)), beta=beta, initial_trt=initial)
    for a in actions:
        trt = env.step(a).traced_rt
    assert abs(trt - tracer_closed_form(initial, p[actions], beta)) < 1e-12
    traj = trace_actions(p, actions, beta, initial)
    assert traj[-1] == trt
    assert traj.min() >= 0.5 and traj.max() <= 8.0


def test_tracer_update_convex():
    assert tracer_update(2.0, 4.0, 0.75) == 2.5
    assert tracer_update(2.0, 4.0, 0.0) == 4.0
    assert tracer_update(2.0, 4.0, 1.0) == 2.0
