import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drowsyq.evaluate import (
    EvalReport,
    UndefinedCorrelationError,
    build_report,
    evaluate,
    measured_curve,
    pearson_correlation,
    read_segment_csv,
    rmse,
    spline_interpolate,
)
from drowsyq.model import Network, NetworkConfig
from drowsyq.preproc import SegmentState

# ---------------------------------------------------------------- brute-force oracles


def rmse_oracle(a, b):
    return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a, b)) / len(a))


def pearson_oracle(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def natural_spline_oracle(xs, ys, q):
    """Second-derivative form solved with the Thomas algorithm."""
    n = len(xs)
    h = [xs[i + 1] - xs[i] for i in range(n - 1)]
    m = [0.0] * n
    if n > 2:
        a = [h[i - 1] for i in range(1, n - 1)]
        b = [2 * (h[i - 1] + h[i]) for i in range(1, n - 1)]
        c = [h[i] for i in range(1, n - 1)]
        d = [6 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]) for i in range(1, n - 1)]
        k = len(b)
        for i in range(1, k):
            w = a[i] / b[i - 1]
            b[i] -= w * c[i - 1]
            d[i] -= w * d[i - 1]
        sol = [0.0] * k
        sol[-1] = d[-1] / b[-1]
        for i in range(k - 2, -1, -1):
            sol[i] = (d[i] - c[i] * sol[i + 1]) / b[i]
        m[1:-1] = sol
    out = []
    for x in q:
        if x <= xs[0]:
            out.append(ys[0])
            continue
        if x >= xs[-1]:
            out.append(ys[-1])
            continue
        i = max(j for j in range(n - 1) if xs[j] <= x)
        t1, t0 = xs[i + 1] - x, x - xs[i]
        hi = h[i]
        out.append(
            m[i] * t1**3 / (6 * hi)
            + m[i + 1] * t0**3 / (6 * hi)
            + (ys[i] / hi - m[i] * hi / 6) * t1
            + (ys[i + 1] / hi - m[i + 1] * hi / 6) * t0
        )
    return out


# ---------------------------------------------------------------- rmse


def test_rmse_examples():
    assert rmse([2, 3], [2.5, 2.5]) == pytest.approx(0.5, abs=1e-15)
    assert rmse([1.5, 2.5], [1.5, 2.5]) == 0.0
    assert rmse([1.0], [3.0]) == 2.0
    with pytest.raises(ValueError):
        rmse([], [])
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])


@given(st.integers(1, 60), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_rmse_oracle_and_symmetry(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.5, 8, n), rng.uniform(0.5, 8, n)
    assert abs(rmse(a, b) - rmse_oracle(a, b)) < 1e-9
    assert rmse(a, b) == rmse(b, a)
    assert rmse(a, a) == 0.0


# ---------------------------------------------------------------- pearson


def test_pearson_examples():
    assert pearson_correlation([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert pearson_correlation([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(UndefinedCorrelationError):
        pearson_correlation([1, 2, 3], [2, 2, 2])
    with pytest.raises(ValueError):
        pearson_correlation([1], [1])


@given(st.integers(3, 80), st.integers(0, 2**31), st.floats(0.01, 100), st.floats(-50, 50))
@settings(max_examples=50, deadline=None)
def test_pearson_oracle_and_affine_invariance(n, seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    r = pearson_correlation(x, y)
    assert abs(r - pearson_oracle(x, y)) < 1e-9
    assert abs(pearson_correlation(a * x + b, y) - r) < 1e-9
    assert abs(pearson_correlation(x, a * x + b) - 1.0) < 1e-12


# ---------------------------------------------------------------- spline


def test_spline_reproduces_lines():
    out = spline_interpolate([(0, 1), (2, 3), (4, 5)], [1, 3])
    np.testing.assert_allclose(out, [2.0, 4.0], atol=1e-12)


def test_spline_extrapolates_constant():
    out = spline_interpolate([(2, 1.0), (5, 3.0), (7, 2.0)], [0, 1, 2, 7, 9])
    assert list(out) == [1.0, 1.0, 1.0, 2.0, 2.0]


def test_spline_errors():
    with pytest.raises(ValueError):
        spline_interpolate([(0, 1.0)], [0])
    with pytest.raises(ValueError):
        spline_interpolate([(0, 1.0), (0, 2.0)], [0])


@given(st.integers(2, 25), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_spline_matches_tridiagonal_oracle(k, seed):
    rng = np.random.default_rng(seed)
    xs = np.sort(rng.choice(200, size=k, replace=False)).astype(float)
    ys = rng.uniform(0.5, 8.0, k)
    q = np.arange(-3, 205, dtype=float)
    got = spline_interpolate(list(zip(xs, ys)), q)
    np.testing.assert_allclose(got, natural_spline_oracle(list(xs), list(ys), list(q)), atol=1e-9, rtol=0)
    at_knots = spline_interpolate(list(zip(xs, ys)), xs)
    assert np.array_equal(at_knots, ys)


# ---------------------------------------------------------------- reports


def _segments(rts):
    return [SegmentState(np.zeros((3, 30, 128)), 3.0 * i, rt, ("e", i)) for i, rt in enumerate(rts)]


def test_perfect_prediction_report():
    segs = _segments([2.0, None, 3.0, None, None, 5.0, 4.0])
    curve = measured_curve(segs)
    rep = build_report("rl", segs, curve)
    assert rep.rmse == 0.0
    assert rep.correlation == pytest.approx(1.0, abs=1e-12)
    assert [r.spline_rt_s for r in rep.records if r.measured_rt_s is not None] == [2.0, 3.0, 5.0, 4.0]


def test_constant_prediction_is_undefined():
    segs = _segments([2.0, None, 3.0, 4.0])
    rep = build_report("sl", segs, np.full(4, 2.5))
    assert rep.correlation is None
    assert any("zero variance" in w for w in rep.warnings)
    assert rep.rmse == pytest.approx(rmse_oracle([2, 3, 4], [2.5] * 3))


def test_no_coverage_is_flagged():
    rep = build_report("sl", _segments([None, None, None]), np.array([1.0, 2.0, 3.0]))
    assert rep.rmse is None and rep.correlation is None
    assert len(rep.warnings) == 2


def test_report_files_recompute(tmp_path):
    rng = np.random.default_rng(7)
    rts = [float(v) if rng.random() < 0.4 else None for v in rng.uniform(0.5, 8, 60)]
    segs = _segments(rts)
    pred = rng.uniform(0.5, 8, 60)
    rep = build_report("rl", segs, pred, beta=0.75)
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    # independent recomputation from the CSV text alone
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(segs)
    p = [float(r["predicted_rt_s"]) for r in rows]
    s = [float(r["spline_rt_s"]) for r in rows]
    cov = [(float(r["measured_rt_s"]), float(r["predicted_rt_s"])) for r in rows if r["measured_rt_s"]]
    meta = json.loads((tmp_path / "r.json").read_text())
    assert abs(meta["rmse"] - rmse_oracle([m for m, _ in cov], [q for _, q in cov])) < 1e-9
    assert abs(meta["correlation"] - pearson_oracle(p, s)) < 1e-9
    back = EvalReport.read(tmp_path / "r.json", tmp_path / "r.csv")
    assert back.records == rep.records
    assert back.rmse == rep.rmse and back.correlation == rep.correlation


def test_segment_csv_header_checked(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_segment_csv(tmp_path / "bad.csv")


def test_evaluate_modes():
    segs = _segments([2.0, None, 3.0, 6.0])
    rl = Network(NetworkConfig("dueling"))
    sl = Network(NetworkConfig("supervised"))
    rep = evaluate(rl, segs, "rl", beta=0.75)
    assert rep.mode == "rl" and len(rep.records) == 4
    assert all(0.5 <= r.predicted_rt_s <= 8.0 for r in rep.records)
    rep = evaluate(sl, segs, "sl")
    assert rep.mode == "sl"
    with pytest.raises(ValueError):
        evaluate(sl, segs, "rl")
    with pytest.raises(ValueError):
        evaluate(rl, segs, "sl")
    with pytest.raises(ValueError):
        evaluate(rl, segs, "xx")
