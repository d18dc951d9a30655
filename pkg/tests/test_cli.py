import csv
import json

import pytest

from drowsyq import cli
from drowsyq.evaluate import EvalReport, pearson_correlation, rmse
from drowsyq.model import Network
from drowsyq.sessions import load_latent, load_session


@pytest.fixture(scope="module")
def sessions(tmp_path_factory):
    root = tmp_path_factory.mktemp("sessions")
    paths = []
    for seed in (1, 2):
        out = root / f"s{seed}"
        assert cli.main(["synth", "--seed", str(seed), "--duration-s", "60", "--out", str(out)]) == 0
        paths.append(out)
    return paths


def test_synth_writes_loadable_session(sessions):
    s = load_session(sessions[0])
    assert s.duration == pytest.approx(60.0)
    assert s.eeg.shape[0] == 30
    assert load_latent(sessions[0]) is not None


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"synth": {"duration_s": 75, "seed": 3}}))
    assert cli.main(["synth", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["synth", "--duration-s", "75", "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    a, b = load_session(tmp_path / "a"), load_session(tmp_path / "b")
    assert a.duration == pytest.approx(75.0)
    assert (a.eeg == b.eeg).all()


@pytest.mark.parametrize(
    "raw",
    [
        {"bogus": {}},
        {"rl": {"episods": 10}},
        {"actions": {"proposals": [1.0, 0.5]}},
        {"rl": {"beta": 2.0}},
        {"filter": {"low_cut": 60.0}},
    ],
)
def test_bad_config_rejected(tmp_path, capsys, raw):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(raw))
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x")]) != 0
    err = capsys.readouterr().err
    assert err.startswith("error:") and err.count("\n") == 1


def test_usage_error_is_one_line(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train-rl", "--out", "x"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: usage") and err.count("\n") == 1


def test_missing_session_reports_error(tmp_path, capsys):
    rc = cli.main(["train-sl", "--train", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert rc != 0
    assert capsys.readouterr().err.count("\n") == 1


def test_train_rl_then_eval(sessions, tmp_path):
    out = tmp_path / "rl"
    rc = cli.main(["train-rl", "--train", str(sessions[0]), "--val", str(sessions[1]),
                   "--episodes", "2", "--batch-size", "4", "--out", str(out)])
    assert rc == 0
    for name in ("best.json", "final.json", "train_log.csv", "train_log.json", "run_config.json"):
        assert (out / name).exists(), name
    with open(out / "train_log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    report = tmp_path / "rep" / "rl.json"
    assert cli.main(["eval", "--model", str(out), "--session", str(sessions[1]), "--mode", "rl",
                     "--report", str(report)]) == 0
    rep = EvalReport.read(report, report.with_suffix(".csv"))
    assert rep.mode == "rl" and rep.beta == 0.75
    assert len(rep.records) == 20
    cov = [(r.measured_rt_s, r.predicted_rt_s) for r in rep.records if r.measured_rt_s is not None]
    if cov:
        assert rep.rmse == pytest.approx(rmse(*zip(*cov)), abs=1e-12)
    if rep.correlation is not None:
        got = pearson_correlation([r.predicted_rt_s for r in rep.records], [r.spline_rt_s for r in rep.records])
        assert rep.correlation == pytest.approx(got, abs=1e-12)


def test_train_sl_then_eval(sessions, tmp_path):
    out = tmp_path / "sl"
    rc = cli.main(["train-sl", "--train", *map(str, sessions), "--val", str(sessions[1]),
                   "--iterations", "2", "--batch-size", "4", "--out", str(out)])
    assert rc == 0
    assert Network.load(out / "best").variant == "supervised"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_trials"] > 4 and len(summary["validation"]) == 1
    report = tmp_path / "sl.json"
    assert cli.main(["eval", "--model", str(out / "best.json"), "--session", str(sessions[0]),
                     "--mode", "sl", "--report", str(report)]) == 0
    assert report.with_suffix(".csv").exists()
    # wrong checkpoint kind for the mode
    assert cli.main(["eval", "--model", str(out), "--session", str(sessions[0]), "--mode", "rl",
                     "--report", str(tmp_path / "x.json")]) != 0


def test_sweep_beta_table(sessions, tmp_path):
    out = tmp_path / "sweep"
    rc = cli.main(["sweep-beta", "--values", "0.2,0.75", "--train", str(sessions[0]), "--test", str(sessions[1]),
                   "--episodes", "1", "--out", str(out)])
    assert rc == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["beta"]) for r in rows] == [0.2, 0.75]
    assert set(rows[0]) == {"beta", "rmse", "correlation", "latent_correlation"}
    assert cli.main(["sweep-beta", "--values", "a,b", "--train", str(sessions[0]), "--test", str(sessions[1]),
                     "--out", str(out)]) != 0
