"""Q-learning loop (dqn / double / dueling) and the supervised RT regressor."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numerics as nx
from .env import DEFAULT_INITIAL_TRT, ActionSpace, TracerEnv, trace_actions
from .evaluate import UndefinedCorrelationError, measured_curve, pearson_correlation
from .model import RL_VARIANTS, Network, NetworkConfig, stack_states, sync_target
from .preproc import PreparedSession, SegmentState
from .replay import ReplayQueue, Transition

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RlTrainConfig:
    variant: str = "dueling"
    episodes: int = 2000
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_fraction: float = 0.5
    batch_size: int = 32
    target_sync_interval: int = 500
    learn_every: int = 1
    replay_capacity: int = 20_000
    beta: float = 0.75
    initial_trt: float = DEFAULT_INITIAL_TRT
    learning_rate: float = 2.5e-4
    validate_every: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in RL_VARIANTS:
            raise ValueError(f"variant must be one of {RL_VARIANTS}, got {self.variant!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma {self.gamma} outside [0, 1]")
        for name in ("epsilon_start", "epsilon_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon must not increase: epsilon_end > epsilon_start")
        if not 0.0 < self.epsilon_decay_fraction <= 1.0:
            raise ValueError("epsilon_decay_fraction must lie in (0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta {self.beta} outside [0, 1]")
        for name in ("episodes", "batch_size", "target_sync_interval", "learn_every", "replay_capacity", "validate_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class SlTrainConfig:
    iterations: int = 600
    learning_rate: float = 1e-4
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.iterations <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("iterations, batch_size and learning_rate must be positive")


@dataclass
class TrainLog:
    returns: List[float] = field(default_factory=list)
    avg_returns: List[float] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    validation: List[Tuple[int, Optional[float]]] = field(default_factory=list)
    best_episode: Optional[int] = None
    best_score: Optional[float] = None
    steps: int = 0
    seconds: float = 0.0

    def add_episode(self, ret: float) -> None:
        self.returns.append(float(ret))
        k = len(self.returns)
        prev = self.avg_returns[-1] if self.avg_returns else 0.0
        self.avg_returns.append(prev + (ret - prev) / k)

    def summary(self) -> dict:
        return {
            "episodes": len(self.returns),
            "steps": self.steps,
            "final_return": self.returns[-1] if self.returns else None,
            "final_avg_return": self.avg_returns[-1] if self.avg_returns else None,
            "final_loss": self.losses[-1] if self.losses else None,
            "loss_steps": len(self.losses),
            "best_episode": self.best_episode,
            "best_validation_correlation": self.best_score,
            "validation": [{"episode": e, "correlation": c} for e, c in self.validation],
            "seconds": self.seconds,
        }

    def write(self, stem) -> Tuple[Path, Path]:
        """``<stem>.csv`` (episode,return,avg_return or step,loss) and ``<stem>.json``."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if self.returns:
                w.writerow(["episode", "return", "avg_return"])
                for k, (r, a) in enumerate(zip(self.returns, self.avg_returns), start=1):
                    w.writerow([k, repr(r), repr(a)])
            else:
                w.writerow(["step", "loss"])
                for k, v in enumerate(self.losses, start=1):
                    w.writerow([k, repr(v)])
        json_path.write_text(json.dumps(self.summary(), indent=2) + "\n")
        return csv_path, json_path

    @staticmethod
    def read_csv(path) -> "TrainLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        out = TrainLog()
        if rows and rows[0] == ["episode", "return", "avg_return"]:
            for row in rows[1:]:
                out.returns.append(float(row[1]))
                out.avg_returns.append(float(row[2]))
        elif rows and rows[0] == ["step", "loss"]:
            out.losses = [float(r[1]) for r in rows[1:]]
        else:
            raise ValueError(f"{path}: unrecognised train log header")
        return out


def epsilon_at(step: int, total_steps: int, cfg: RlTrainConfig) -> float:
    """Linear decay from epsilon_start to epsilon_end over the first fraction of steps."""
    span = max(1.0, cfg.epsilon_decay_fraction * total_steps)
    frac = min(1.0, step / span)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


# ------------------------------------------------------------------ targets


def _check_variant(net, variant: str, role: str) -> None:
    if variant not in RL_VARIANTS:
        raise ValueError(f"unknown RL variant {variant!r}")
    have = getattr(net, "variant", variant)
    if have != variant:
        raise ValueError(f"{role} network is {have!r} but targets are requested for {variant!r}")


def td_targets(
    rewards: np.ndarray,
    dones: np.ndarray,
    q_next_target: np.ndarray,
    gamma: float,
    variant: str,
    q_next_online: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Bellman targets from precomputed next-state Q rows (rows of terminal entries are ignored)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    q_next_target = np.asarray(q_next_target, dtype=np.float64)
    if variant == "double":
        if q_next_online is None:
            raise ValueError("double targets need online next-state Q values")
        pick = np.argmax(q_next_online, axis=1)
        boot = q_next_target[np.arange(len(pick)), pick]
    elif variant in ("dqn", "dueling"):
        boot = q_next_target.max(axis=1)
    else:
        raise ValueError(f"unknown RL variant {variant!r}")
    return np.where(dones, rewards, rewards + gamma * boot)


def compute_td_target(transition: Transition, online, target, gamma: float, variant: str) -> float:
    """y for one transition: r if terminal, otherwise r + gamma * bootstrap(s')."""
    _check_variant(target, variant, "target")
    if variant == "double":
        _check_variant(online, variant, "online")
    if transition.done:
        return float(transition.reward)
    if transition.next_state is None:
        raise ValueError("non-terminal transition carries no next state")
    s2 = [transition.next_state]
    qt = target.q_numpy(s2)
    qo = online.q_numpy(s2) if variant == "double" else None
    return float(td_targets([transition.reward], [False], qt, gamma, variant, qo)[0])


# ------------------------------------------------------------------ rollouts


def greedy_actions(model: Network, segments: Sequence[SegmentState]) -> np.ndarray:
    if model.variant not in RL_VARIANTS:
        raise ValueError(f"greedy rollout needs an RL network, got {model.variant!r}")
    # chunked: a full 90 min session at once would need gigabytes of activations
    out = [np.argmax(model.q_numpy(stack_states(segments[i : i + 64])), axis=1) for i in range(0, len(segments), 64)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def greedy_rollout(
    model: Network,
    segments,
    beta: float = 0.75,
    initial_trt: float = DEFAULT_INITIAL_TRT,
    action_space: Optional[ActionSpace] = None,
) -> np.ndarray:
    """Traced RT after every segment under the epsilon = 0 policy.

    Q depends on the segment alone, so all actions are picked in one batched
    pass and the tracer is then stepped through them.
    """
    segs = segments.segments if isinstance(segments, PreparedSession) else list(segments)
    space = action_space or ActionSpace()
    if len(space) != model.cfg.n_actions:
        raise ValueError(f"action space has {len(space)} proposals, network has {model.cfg.n_actions} outputs")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta {beta} outside [0, 1]")
    actions = greedy_actions(model, segs)
    return trace_actions(space.proposals, actions, beta, initial_trt)


def _validation_score(model, sessions, cfg: RlTrainConfig, space: ActionSpace) -> Optional[float]:
    scores = []
    for sess in sessions:
        segs = _segments_of(sess)
        curve = measured_curve(segs)
        if curve is None:
            continue
        pred = greedy_rollout(model, segs, cfg.beta, cfg.initial_trt, space)
        try:
            scores.append(pearson_correlation(pred, curve))
        except UndefinedCorrelationError:
            scores.append(-1.0)
    return float(np.mean(scores)) if scores else None


# ------------------------------------------------------------------ RL training


def _segments_of(sess) -> List[SegmentState]:
    segs = sess.segments if isinstance(sess, PreparedSession) else list(sess)
    if not segs:
        raise ValueError("training session has no segments")
    return segs


class _TargetCache:
    """Target-network Q rows per state object, valid until the next sync."""

    def __init__(self, net: Network):
        self.net = net
        self.rows: Dict[int, np.ndarray] = {}

    def clear(self) -> None:
        self.rows.clear()

    def q(self, states: Sequence[SegmentState]) -> np.ndarray:
        missing = [s for s in {id(s): s for s in states}.values() if id(s) not in self.rows]
        if missing:
            fresh = self.net.q_numpy(stack_states(missing))
            for s, row in zip(missing, fresh):
                self.rows[id(s)] = row
        return np.stack([self.rows[id(s)] for s in states])


def train_rl(
    train_sessions,
    config: RlTrainConfig = RlTrainConfig(),
    val_sessions=(),
    action_space: Optional[ActionSpace] = None,
    network_config: Optional[NetworkConfig] = None,
    checkpoint_dir=None,
) -> Tuple[Network, TrainLog]:
    """Epsilon-greedy Q-learning over randomly chosen training sessions.

    Returns the network with the best validation correlation (the final one
    when no validation sessions are given) and the training log. With
    ``checkpoint_dir`` set, ``best`` and ``final`` checkpoints are written there.
    """
    config.validate()
    sessions = [_segments_of(s) for s in train_sessions]
    if not sessions:
        raise ValueError("train_rl needs at least one training session")
    space = action_space or ActionSpace()
    ncfg = network_config or NetworkConfig(variant=config.variant, n_actions=len(space))
    if ncfg.variant != config.variant or ncfg.n_actions != len(space):
        raise ValueError("network configuration disagrees with the training variant or action count")

    rng = np.random.default_rng(config.seed)
    online = Network(ncfg, seed=int(rng.integers(2**31)))
    target = sync_target(online)
    cache = _TargetCache(target)
    opt = nx.RMSProp(online.parameters(), lr=config.learning_rate)
    replay = ReplayQueue(config.replay_capacity)
    env = TracerEnv(space)
    tlog = TrainLog()
    best_state = None
    total_steps = config.episodes * float(np.mean([len(s) for s in sessions]))
    step = 0
    t0 = time.perf_counter()

    for episode in range(1, config.episodes + 1):
        segs = sessions[int(rng.integers(len(sessions)))]
        state = env.reset(segs, config.beta, config.initial_trt)
        ret = 0.0
        while True:
            eps = epsilon_at(step, total_steps, config)
            if rng.random() < eps:
                action = int(rng.integers(len(space)))
            else:
                action = int(np.argmax(online.q_numpy(state.planes[None])[0]))
            res = env.step(action)
            ret += res.reward
            replay.push(Transition(state, action, res.reward, res.next_state, res.done))
            step += 1
            if len(replay) >= config.batch_size and step % config.learn_every == 0:
                loss = _learn_step(online, cache, opt, replay, rng, config)
                if not math.isfinite(loss):
                    raise FloatingPointError(f"non-finite TD loss {loss} at step {step} (episode {episode})")
                tlog.losses.append(loss)
            if step % config.target_sync_interval == 0:
                sync_target(online, target)
                cache.clear()
            if res.done:
                break
            state = res.next_state
        tlog.add_episode(ret)
        tlog.steps = step

        if val_sessions and (episode % config.validate_every == 0 or episode == config.episodes):
            score = _validation_score(online, val_sessions, config, space)
            tlog.validation.append((episode, score))
            if score is not None and (tlog.best_score is None or score > tlog.best_score):
                tlog.best_score, tlog.best_episode = score, episode
                best_state = {k: v.copy() for k, v in online.state_dict().items()}
        if episode % 10 == 0 or episode == config.episodes:
            log.info("episode %d return %.3f avg %.3f eps %.3f", episode, ret, tlog.avg_returns[-1], eps)

    tlog.seconds = time.perf_counter() - t0
    final = online
    best = final
    if best_state is not None:
        best = online.copy()
        best.load_state_dict(best_state)
    if checkpoint_dir is not None:
        out = Path(checkpoint_dir)
        meta = {"kind": "rl", "train_config": asdict(config), "best_episode": tlog.best_episode}
        final.save(out / "final", {**meta, "episode": config.episodes})
        best.save(out / "best", {**meta, "episode": tlog.best_episode or config.episodes})
    return best, tlog


def _learn_step(online: Network, cache: _TargetCache, opt, replay: ReplayQueue, rng, cfg: RlTrainConfig) -> float:
    batch = replay.sample(cfg.batch_size, rng).resolve()
    states = stack_states([t.state for t in batch])
    actions = np.array([t.action for t in batch])
    rewards = np.array([t.reward for t in batch])
    dones = np.array([t.done for t in batch])
    live = [t.next_state for t in batch if not t.done]
    q_next = np.zeros((len(batch), online.cfg.n_actions))
    q_online = None
    if live:
        mask = ~dones
        q_next[mask] = cache.q(live)
        if cfg.variant == "double":
            q_online = np.zeros_like(q_next)
            q_online[mask] = online.q_numpy(stack_states(live))
    y = td_targets(rewards, dones, q_next, cfg.gamma, cfg.variant, q_online)

    opt.zero_grad()
    q = online.forward(states)
    loss = nx.squared_error_loss(nx.gather(q, actions), y)
    loss.backward()
    opt.step()
    return float(loss.data)


# ------------------------------------------------------------------ supervised


def train_supervised(
    trials: Tuple[np.ndarray, np.ndarray],
    config: SlTrainConfig = SlTrainConfig(),
    network_config: Optional[NetworkConfig] = None,
) -> Tuple[Network, TrainLog]:
    """Mean-squared-error regression of smoothed RT on baseline-region windows."""
    config.validate()
    windows, labels = trials
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(windows) != len(labels):
        raise ValueError(f"{len(windows)} windows but {len(labels)} labels")
    if len(windows) < config.batch_size:
        raise ValueError(f"{len(windows)} trials cannot fill a batch of {config.batch_size}")
    ncfg = network_config or NetworkConfig(variant="supervised")
    if ncfg.variant != "supervised":
        raise ValueError("supervised training needs the supervised network variant")
    rng = np.random.default_rng(config.seed)
    net = Network(ncfg, seed=int(rng.integers(2**31)))
    opt = nx.RMSProp(net.parameters(), lr=config.learning_rate)
    tlog = TrainLog()
    t0 = time.perf_counter()
    for it in range(config.iterations):
        idx = rng.choice(len(windows), size=config.batch_size, replace=False)
        opt.zero_grad()
        pred = net.forward(windows[idx])
        loss = nx.squared_error_loss(pred, labels[idx])
        loss.backward()
        opt.step()
        value = float(loss.data)
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite regression loss {value} at iteration {it + 1}")
        tlog.losses.append(value)
    tlog.steps = config.iterations
    tlog.seconds = time.perf_counter() - t0
    return net, tlog
