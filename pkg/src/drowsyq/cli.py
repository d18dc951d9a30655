"""Command-line entry points: synth, train-rl, train-sl, eval, sweep-beta.

Every command accepts ``--config run.json``; its sections are ``synth``,
``rl``, ``sl``, ``actions``, ``filter`` and ``rt_smoothing``, each holding
fields of the matching config type. Explicit flags override the file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .env import ActionSpace
from .evaluate import evaluate, latent_curve, pearson_correlation, UndefinedCorrelationError
from .model import Network
from .preproc import FilterSpec, PreparedSession, RtSmoothingSpec, extract_trials, prepare_session
from .sessions import DESK_DURATION_S, SynthConfig, generate_session, load_latent, load_session, save_session
from .trainer import RlTrainConfig, SlTrainConfig, train_rl, train_supervised

log = logging.getLogger("drowsyq")

DEFAULT_BETAS = (0.2, 0.4, 0.6, 0.75, 0.8)


class CliError(Exception):
    pass


# ------------------------------------------------------------------ run config


@dataclasses.dataclass
class RunConfig:
    synth: SynthConfig = dataclasses.field(default_factory=SynthConfig)
    rl: RlTrainConfig = dataclasses.field(default_factory=RlTrainConfig)
    sl: SlTrainConfig = dataclasses.field(default_factory=SlTrainConfig)
    actions: ActionSpace = dataclasses.field(default_factory=ActionSpace)
    filter: FilterSpec = dataclasses.field(default_factory=FilterSpec)
    rt_smoothing: RtSmoothingSpec = dataclasses.field(default_factory=RtSmoothingSpec)

    _SECTIONS = {
        "synth": SynthConfig,
        "rl": RlTrainConfig,
        "sl": SlTrainConfig,
        "filter": FilterSpec,
        "rt_smoothing": RtSmoothingSpec,
    }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ValueError("run config must be a JSON object")
        unknown = set(raw) - set(cls._SECTIONS) - {"actions"}
        if unknown:
            raise ValueError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        out = cls()
        for name, typ in cls._SECTIONS.items():
            if name not in raw:
                continue
            section = raw[name]
            if not isinstance(section, dict):
                raise ValueError(f"config section {name!r} must be an object")
            fields = {f.name for f in dataclasses.fields(typ)}
            bad = set(section) - fields
            if bad:
                raise ValueError(f"unknown key(s) in {name!r}: {', '.join(sorted(bad))}")
            setattr(out, name, typ(**section))
        if "actions" in raw:
            section = raw["actions"]
            if not isinstance(section, dict) or set(section) - {"proposals"}:
                raise ValueError("config section 'actions' accepts only 'proposals'")
            out.actions = ActionSpace(section.get("proposals"))
        out.validate()
        return out

    def validate(self) -> None:
        self.synth.validate()
        self.rl.validate()
        self.sl.validate()
        self.filter.validate(500.0)
        self.rt_smoothing.validate()

    def to_dict(self) -> dict:
        d = {name: dataclasses.asdict(getattr(self, name)) for name in self._SECTIONS}
        d["actions"] = {"proposals": [float(p) for p in self.actions.proposals]}
        return d

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)


def _run_config(args) -> RunConfig:
    return RunConfig.load(args.config) if args.config else RunConfig()


def _override(obj, **values):
    """Replace the fields whose flag was given explicitly."""
    given = {k: v for k, v in values.items() if v is not None}
    out = dataclasses.replace(obj, **given) if given else obj
    out.validate()
    return out


# ------------------------------------------------------------------ helpers


def _prepare(path, cfg: RunConfig) -> PreparedSession:
    session = load_session(path)
    cfg.filter.validate(session.fs)
    return prepare_session(session, name=str(path), filter_spec=cfg.filter, rt_spec=cfg.rt_smoothing)


def _resolve_checkpoint(path) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / "best"
    if p.suffix == ".json":
        p = p.with_suffix("")
    return p


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    synth = _override(cfg.synth, seed=args.seed, duration_s=args.duration_s, subject_seed=args.subject_seed)
    session, trace = generate_session(synth)
    out = save_session(session, args.out, trace)
    log.info("wrote %s (%d events, %.0f s)", out, len(session.events), session.duration)
    return 0


def cmd_train_rl(args) -> int:
    cfg = _run_config(args)
    rl = _override(
        cfg.rl,
        variant=args.variant,
        beta=args.beta,
        episodes=args.episodes,
        seed=args.seed,
        gamma=args.gamma,
        batch_size=args.batch_size,
        learn_every=args.learn_every,
    )
    train = [_prepare(p, cfg) for p in args.train]
    val = [_prepare(p, cfg) for p in (args.val or [])]
    out = Path(args.out)
    net, tlog = train_rl(train, rl, val_sessions=val, action_space=cfg.actions, checkpoint_dir=out)
    tlog.write(out / "train_log")
    _write_json(out / "run_config.json", {**cfg.to_dict(), "rl": dataclasses.asdict(rl)})
    log.info("trained %s for %d episodes; best episode %s", rl.variant, rl.episodes, tlog.best_episode)
    return 0


def cmd_train_sl(args) -> int:
    cfg = _run_config(args)
    sl = _override(cfg.sl, iterations=args.iterations, learning_rate=args.lr, seed=args.seed, batch_size=args.batch_size)
    windows, labels = [], []
    for p in args.train:
        w, y = extract_trials(_prepare(p, cfg))
        windows.append(w)
        labels.append(y)
    trials = (np.concatenate(windows), np.concatenate(labels))
    net, tlog = train_supervised(trials, sl)
    out = Path(args.out)
    net.save(out / "best", {"kind": "sl", "train_config": dataclasses.asdict(sl), "n_trials": len(trials[1])})
    tlog.write(out / "train_log")
    summary = {"n_trials": int(len(trials[1])), "final_loss": tlog.losses[-1]}
    if args.val:
        reports = [evaluate(net, _prepare(p, cfg), "sl") for p in args.val]
        summary["validation"] = [r.summary() for r in reports]
    _write_json(out / "summary.json", summary)
    _write_json(out / "run_config.json", {**cfg.to_dict(), "sl": dataclasses.asdict(sl)})
    return 0


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    net = Network.load(_resolve_checkpoint(args.model))
    beta = cfg.rl.beta if args.beta is None else args.beta
    report = evaluate(net, _prepare(args.session, cfg), args.mode, beta=beta, action_space=cfg.actions)
    rpath = Path(args.report)
    report.write_json(rpath)
    report.write_csv(rpath.with_suffix(".csv"))
    return 0


def sweep_beta(
    train: Sequence[PreparedSession],
    test: PreparedSession,
    betas: Sequence[float],
    rl: RlTrainConfig,
    actions: ActionSpace,
    latent=None,
    val: Sequence[PreparedSession] = (),
) -> List[dict]:
    """Train one agent per beta and score its greedy rollout on ``test``."""
    rows = []
    truth = latent_curve(latent, test.segments) if latent is not None else None
    for beta in betas:
        cfg = dataclasses.replace(rl, beta=float(beta))
        cfg.validate()
        net, tlog = train_rl(train, cfg, val_sessions=val, action_space=actions)
        report = evaluate(net, test, "rl", beta=cfg.beta, action_space=actions)
        row = {"beta": float(beta), "rmse": report.rmse, "correlation": report.correlation}
        if truth is not None:
            try:
                row["latent_correlation"] = pearson_correlation(report.predicted, truth)
            except UndefinedCorrelationError:
                row["latent_correlation"] = None
        rows.append(row)
        log.info("beta %.2f: %s", beta, row)
    return rows


def cmd_sweep_beta(args) -> int:
    cfg = _run_config(args)
    rl = _override(cfg.rl, variant=args.variant, episodes=args.episodes, seed=args.seed, learn_every=args.learn_every)
    try:
        betas = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    if not betas:
        raise CliError("--values is empty")
    train = [_prepare(p, cfg) for p in args.train]
    val = [_prepare(p, cfg) for p in (args.val or [])]
    test = _prepare(args.test, cfg)
    rows = sweep_beta(train, test, betas, rl, cfg.actions, latent=load_latent(args.test), val=val)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["beta", "rmse", "correlation"] + (["latent_correlation"] if "latent_correlation" in rows[0] else [])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r[c] is None else repr(r[c]) for c in cols])
    _write_json(out / "sweep.json", {"rows": rows, "rl": dataclasses.asdict(rl)})
    return 0


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error: usage: {self.prog}: {message}\n")
        raise SystemExit(2)


def _floats(s: str) -> float:
    return float(s)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="drowsyq", description="EEG drowsiness estimation with deep Q-learning")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        return sp

    s = common(sub.add_parser("synth", help="generate a synthetic session"))
    s.add_argument("--seed", type=int)
    s.add_argument("--subject-seed", type=int)
    s.add_argument("--duration-s", type=float, help=f"session length (default 5400; desk studies use {DESK_DURATION_S:.0f})")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = common(sub.add_parser("train-rl", help="train a Q-network"))
    s.add_argument("--variant", choices=("dueling", "double", "dqn"))
    s.add_argument("--beta", type=_floats)
    s.add_argument("--episodes", type=int)
    s.add_argument("--gamma", type=_floats)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--learn-every", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--train", nargs="+", required=True)
    s.add_argument("--val", nargs="*")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_rl)

    s = common(sub.add_parser("train-sl", help="train the supervised RT regressor"))
    s.add_argument("--iterations", type=int)
    s.add_argument("--lr", type=_floats)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--train", nargs="+", required=True)
    s.add_argument("--val", nargs="*")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_sl)

    s = common(sub.add_parser("eval", help="score a checkpoint on a session"))
    s.add_argument("--model", required=True)
    s.add_argument("--session", required=True)
    s.add_argument("--mode", choices=("rl", "sl"), required=True)
    s.add_argument("--beta", type=_floats)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval)

    s = common(sub.add_parser("sweep-beta", help="train and score one agent per beta"))
    s.add_argument("--values", default=",".join(str(b) for b in DEFAULT_BETAS))
    s.add_argument("--variant", choices=("dueling", "double", "dqn"))
    s.add_argument("--episodes", type=int)
    s.add_argument("--learn-every", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--train", nargs="+", required=True)
    s.add_argument("--val", nargs="*")
    s.add_argument("--test", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep_beta)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, FloatingPointError, TypeError, IndexError) as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"error: {type(exc).__name__}: {msg}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
