"""Shared per-second CNN, conv-LSTM over the three sub-seconds, and the four heads.

Layer chain per one-second plane (electrodes x samples)::

    conv (1,64) same -> depthwise (30,1) valid, tanh, max-norm -> avgpool 2x2
    -> separable (1,16) same, tanh -> avgpool 2x2 -> 32 x 1 x 32

The three plane features feed three conv-LSTM steps (zero initial state);
the last hidden state flattens to 1024 and goes to a head.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence, Union

import numpy as np

from . import numerics as nx
from .numerics import Parameter, Tensor
from .preproc import SegmentState
from .sessions import RT_MAX, RT_MIN

VARIANTS = ("supervised", "dqn", "double", "dueling")
RL_VARIANTS = ("dqn", "double", "dueling")


@dataclass(frozen=True)
class NetworkConfig:
    variant: str = "dueling"
    n_actions: int = 16
    channels: int = 30
    samples_per_subsecond: int = 128
    hidden: int = 512
    filters: int = 32
    temporal_kernel: int = 64
    separable_kernel: int = 16
    lstm_kernel: int = 8
    max_norm: float = 1.0
    weight_decay: float = 1e-4

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant != "supervised" and self.n_actions < 2:
            raise ValueError("RL variants need at least two actions")
        if self.samples_per_subsecond % 4:
            raise ValueError("samples per sub-second must be divisible by 4 (two 2x pools)")

    @property
    def feature_width(self) -> int:
        return math.ceil(math.ceil(self.samples_per_subsecond / 2) / 2)

    @property
    def feature_size(self) -> int:
        return self.filters * self.feature_width


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_params(cfg: NetworkConfig, seed: int = 0) -> "OrderedDict[str, Parameter]":
    cfg.validate()
    rng = np.random.default_rng(seed)
    F, C, K = cfg.filters, cfg.channels, cfg.temporal_kernel
    ks, kl, H = cfg.separable_kernel, cfg.lstm_kernel, cfg.hidden
    nfeat = cfg.feature_size
    p: "OrderedDict[str, Parameter]" = OrderedDict()

    def add(name, value, **kw):
        p[name] = Parameter(value, name=name, **kw)

    add("conv1", _glorot(rng, (F, 1, 1, K), K, F * K))
    add("depthwise", _glorot(rng, (F, C, 1), C, C), max_norm=cfg.max_norm)
    add("sep_depth", _glorot(rng, (F, 1, ks), ks, ks))
    add("sep_point", _glorot(rng, (F, F, 1, 1), F, F))
    add("lstm_w", _glorot(rng, (4 * F, 2 * F, 1, kl), 2 * F * kl, 4 * F * kl))
    bias = np.zeros(4 * F)
    bias[F : 2 * F] = 1.0  # forget gate
    add("lstm_b", bias)

    def dense(prefix, n_out):
        add(f"{prefix}1_w", _glorot(rng, (H, nfeat), nfeat, H), weight_decay=cfg.weight_decay)
        add(f"{prefix}1_b", np.zeros(H))
        add(f"{prefix}2_w", _glorot(rng, (n_out, H), H, n_out))
        add(f"{prefix}2_b", np.zeros(n_out))

    if cfg.variant == "supervised":
        dense("reg", 1)
    elif cfg.variant == "dueling":
        dense("val", 1)
        dense("adv", cfg.n_actions)
    else:
        dense("q", cfg.n_actions)
    return p


def stack_states(states: Sequence[Union[SegmentState, np.ndarray]]) -> np.ndarray:
    return np.stack([s.planes if isinstance(s, SegmentState) else np.asarray(s) for s in states])


class Network:
    def __init__(self, cfg: NetworkConfig = NetworkConfig(), seed: int = 0, params=None):
        cfg.validate()
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)

    @property
    def variant(self) -> str:
        return self.cfg.variant

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # -------------------------------------------------------------- backbone

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        want = (3, self.cfg.channels, self.cfg.samples_per_subsecond)
        if x.ndim != 4 or x.shape[1:] != want:
            raise ValueError(f"expected states shaped (batch, {want[0]}, {want[1]}, {want[2]}), got {x.shape}")
        return x

    def cnn(self, planes: Tensor) -> Tensor:
        """Per-second feature extractor on (N, 1, channels, samples) -> (N, 32, 1, 32)."""
        p = self.params
        z = nx.tanh(nx.temporal_spatial_conv(planes, p["conv1"], p["depthwise"]))
        z = nx.avgpool2d(z)
        z = nx.separable_conv2d(z, p["sep_depth"], p["sep_point"], padding="same", activation="tanh")
        return nx.avgpool2d(z)

    def forward_features(self, states) -> Tensor:
        """(B, 3, channels, samples) states -> (B, 1024) features."""
        if isinstance(states, SegmentState):
            states = [states]
        x = self._check_input(states if isinstance(states, np.ndarray) else stack_states(states))
        B = x.shape[0]
        C, W = self.cfg.channels, self.cfg.samples_per_subsecond
        # sub-second-major so each step's batch is a contiguous row block
        planes = Tensor(np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(3 * B, 1, C, W))
        feats = self.cnn(planes)
        F, fw = self.cfg.filters, self.cfg.feature_width
        h = Tensor(np.zeros((B, F, 1, fw)))
        c = Tensor(np.zeros((B, F, 1, fw)))
        for k in range(3):
            xk = nx.take(feats, k * B, (k + 1) * B, axis=0)
            h, c = nx.conv_lstm_step(xk, h, c, self.params["lstm_w"], self.params["lstm_b"])
        return nx.reshape(h, (B, F * fw))

    def feature_maps(self, plane: np.ndarray) -> Dict[str, tuple]:
        """Shapes of every stage for one (channels, samples) plane, via the unfused chain."""
        p = self.params
        with nx.no_grad():
            x = Tensor(np.asarray(plane, dtype=np.float64)[None])
            shapes = {"input": x.shape}
            z = nx.conv2d(x, p["conv1"], "same")
            shapes["conv1"] = z.shape
            z = nx.depthwise_conv2d(z, p["depthwise"], "valid", activation="tanh")
            shapes["depthwise"] = z.shape
            z = nx.avgpool2d(z)
            shapes["pool1"] = z.shape
            z = nx.separable_conv2d(z, p["sep_depth"], p["sep_point"])
            shapes["separable"] = z.shape
            z = nx.avgpool2d(z)
            shapes["pool2"] = z.shape
        return shapes

    # -------------------------------------------------------------- heads

    def _mlp(self, prefix: str, f: Tensor) -> Tensor:
        p = self.params
        hidden = nx.linear(f, p[f"{prefix}1_w"], p[f"{prefix}1_b"])
        return nx.linear(hidden, p[f"{prefix}2_w"], p[f"{prefix}2_b"])

    def q_values(self, features: Tensor) -> Tensor:
        if self.variant == "supervised":
            raise ValueError("q_values() needs an RL variant; this network is supervised")
        if self.variant == "dueling":
            return self.dueling_q_values(features)
        return self._mlp("q", features)

    def dueling_q_values(self, features: Tensor) -> Tensor:
        if self.variant != "dueling":
            raise ValueError(f"dueling_q_values() on a {self.variant} network")
        return nx.dueling_combine(self._mlp("val", features), self._mlp("adv", features))

    def regress(self, features: Tensor) -> Tensor:
        """Unclipped RT regression output, shape (B,)."""
        if self.variant != "supervised":
            raise ValueError(f"regress() needs the supervised variant, not {self.variant}")
        out = self._mlp("reg", features)
        return nx.reshape(out, out.shape[:-1])

    def predict_rt(self, states) -> np.ndarray:
        """Inference-time RT predictions clipped to the valid RT range."""
        with nx.no_grad():
            raw = self.regress(self.forward_features(states)).data
        return np.clip(raw, RT_MIN, RT_MAX)

    def forward(self, states) -> Tensor:
        f = self.forward_features(states)
        return self.regress(f) if self.variant == "supervised" else self.q_values(f)

    def q_numpy(self, states, chunk: int = 64) -> np.ndarray:
        """Q-values without graph recording, processed in chunks."""
        x = states if isinstance(states, np.ndarray) else stack_states(states)
        x = self._check_input(x)
        out = []
        with nx.no_grad():
            for i in range(0, len(x), chunk):
                out.append(self.q_values(self.forward_features(x[i : i + chunk])).data)
        return np.concatenate(out)

    # -------------------------------------------------------------- copies & io

    def copy(self) -> "Network":
        params = OrderedDict()
        for k, p in self.params.items():
            params[k] = Parameter(p.data.copy(), name=p.name, max_norm=p.max_norm, weight_decay=p.weight_decay)
        return Network(self.cfg, params=params)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.data) for k, p in self.params.items())

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(f"state dict mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in self.params.items():
            if arrays[k].shape != p.data.shape:
                raise ValueError(f"{k}: shape {arrays[k].shape} != {p.data.shape}")
            p.data = np.array(arrays[k], dtype=np.float64)

    def save(self, path, extra_meta: dict | None = None):
        meta = {"network": asdict(self.cfg), **(extra_meta or {})}
        return nx.save_arrays(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "Network":
        arrays, meta = nx.load_arrays(path)
        if "network" not in meta:
            raise ValueError(f"{path}: checkpoint carries no network configuration")
        net = cls(NetworkConfig(**meta["network"]))
        net.load_state_dict(arrays)
        return net


def sync_target(online: Network, target: Network | None = None) -> Network:
    """Copy online weights into ``target`` (or a fresh network) and return it."""
    if target is None:
        return online.copy()
    if target.cfg != online.cfg:
        raise ValueError("target network configuration differs from online network")
    for k, p in online.params.items():
        target.params[k].data = p.data.copy()
    return target

